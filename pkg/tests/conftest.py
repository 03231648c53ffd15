"""Shared fixtures: the synthetic corpus, a fully trained micro model, and
its quantized counterpart (session-scoped; training runs once)."""

from __future__ import annotations

import numpy as np
import pytest

from drscreen.nn import TrainConfig, micro_config, train
from drscreen.quant import quantize_model
from drscreen.synthetic import generate_arrays

CORPUS_SEED = 7
TRAIN_SEED = 3


def stratified_indices(y: np.ndarray, seed: int = 0):
    """70/15/15 index split per class (floor train, floor val, rest test)."""
    rng = np.random.default_rng(seed)
    train_idx, val_idx, test_idx = [], [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        n = len(idx)
        n_train = int(np.floor(0.70 * n))
        n_val = int(np.floor(0.15 * n))
        train_idx.extend(idx[:n_train])
        val_idx.extend(idx[n_train : n_train + n_val])
        test_idx.extend(idx[n_train + n_val :])
    return np.asarray(train_idx), np.asarray(val_idx), np.asarray(test_idx)


@pytest.fixture(scope="session")
def corpus():
    return generate_arrays(500, 32, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def corpus_split(corpus):
    _, y = corpus
    return stratified_indices(y, seed=0)


@pytest.fixture(scope="session")
def trained_micro(corpus, corpus_split):
    x, y = corpus
    tr, va, _ = corpus_split
    config = micro_config()
    tcfg = TrainConfig(epochs=20, batch_size=32, lr=1e-4, seed=TRAIN_SEED)
    history, best_params = train(config, tcfg, x[tr], y[tr], x[va], y[va])
    return config, tcfg, history, best_params


@pytest.fixture(scope="session")
def qmodel_micro(corpus, trained_micro):
    x, _ = corpus
    config, _, _, best_params = trained_micro
    calib = [x[i : i + 32] for i in range(0, 128, 32)]
    return quantize_model(config, best_params, calib)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import ACCEPTANCE_RESULTS
    except ImportError:
        return
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, elapsed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"ACCEPT {name}: {status} ({elapsed:.2f}s)")
