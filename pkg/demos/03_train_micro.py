"""Train the micro residual net on the built-in synthetic corpus.

Runs the full recipe (Adam at 1e-4, batch 32, plateau scheduler, early
stopping) and prints the epoch table.  Takes around twenty seconds on a
laptop CPU.
"""

import numpy as np

from drscreen.nn import TrainConfig, history_to_csv, micro_config, param_count, train
from drscreen.nn.model import init_params
from drscreen.synthetic import generate_arrays

x, y = generate_arrays(500, 32, seed=7)
rng = np.random.default_rng(0)
order = rng.permutation(len(x))
train_idx, val_idx = order[:350], order[350:425]

config = micro_config()
print(f"micro preset: {param_count(init_params(config, seed=0))} parameters")

tcfg = TrainConfig(epochs=20, batch_size=32, lr=1e-4, seed=3)
history, best_params = train(config, tcfg, x[train_idx], y[train_idx], x[val_idx], y[val_idx])

print(f"{'epoch':>5} {'train_loss':>11} {'train_acc':>10} {'val_loss':>9} {'val_acc':>8} {'lr':>8}")
for e in history.epochs:
    print(
        f"{e.epoch:>5} {e.train_loss:>11.4f} {e.train_acc:>10.3f}"
        f" {e.val_loss:>9.4f} {e.val_acc:>8.3f} {e.lr:>8.2g}"
    )
print(f"best epoch {history.best_epoch}: val acc {history.best.val_acc:.3f}")
print()
print("history CSV head:")
print("\n".join(history_to_csv(history).splitlines()[:3]))
