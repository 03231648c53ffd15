"""Command-line pipeline: prepare, train, eval, quantize, bench, serve.

Every subcommand writes its artifacts to explicit --out paths and finishes
with a machine-readable line `RESULT <subcommand> <json>` on stdout.  Exit
codes: 0 success, 1 runtime failure, 2 usage error.  Seeds default to 0
wherever randomness exists, so repeated runs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

__all__ = ["main", "build_parser"]

DEFAULT_SEED = 0


def _parse_input_dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--input wants WxH, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drscreen", description="Diabetic retinopathy screening pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="split a manifest, assign folds, plan augmentation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--table2-targets", action="store_true", dest="table2",
                   help="use the default rebalancing targets (1805,900,1200,900,1000)")
    p.add_argument("--targets", help="comma-separated per-class targets")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--execute", action="store_true",
                   help="also synthesize the planned images (needs image files)")
    p.add_argument("--images-root", help="root directory for image paths (default: manifest dir)")

    p = sub.add_parser("train", help="train a model on a prepared manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", help="split CSV from prepare (default: fresh split)")
    p.add_argument("--out", required=True, help="model file path (RCNN1)")
    p.add_argument("--config", choices=("micro", "resnet18_226"), default="micro")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--images-root")

    p = sub.add_parser("eval", help="evaluate a model on the test partition")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split")
    p.add_argument("--model", help="float model path")
    p.add_argument("--qmodel", help="quantized model path")
    p.add_argument("--out", required=True, help="metric report JSON path")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--images-root")

    p = sub.add_parser("quantize", help="post-training quantize a float model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True, help="calibration images")
    p.add_argument("--out", required=True, help="quantized model path (RCNQ1)")
    p.add_argument("--calib-count", type=int, default=64)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--images-root")

    p = sub.add_parser("bench", help="FLOPs accounting and latency measurement")
    p.add_argument("--config", choices=("micro", "resnet18_226"))
    p.add_argument("--model")
    p.add_argument("--qmodel")
    p.add_argument("--input", type=_parse_input_dims, help="WxH (default: model input)")
    p.add_argument("--runs", type=int, default=0, help="latency runs (0 = FLOPs only)")
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--double-count", action="store_true",
                   help="report 2 FLOPs per MAC instead of MACs")

    p = sub.add_parser("serve", help="run the teleophthalmology HTTP service")
    p.add_argument("--qmodel", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def _result(command: str, payload: dict) -> None:
    print(f"RESULT {command} {json.dumps(payload, sort_keys=True)}")


def _load_arrays(manifest, ids, images_root, input_hw):
    """Decode, preprocess, and stack the given manifest entries."""
    from .dataset import DirectoryStore
    from .imaging import PreprocessConfig, decode_image, preprocess

    store = DirectoryStore(images_root)
    cfg = PreprocessConfig(target_width=input_hw[1], target_height=input_hw[0])
    by_id = manifest.by_id()
    xs, ys = [], []
    for image_id in ids:
        entry = by_id[image_id]
        plane = preprocess(decode_image(store.read(entry.path)), cfg)
        xs.append(plane.data.transpose(2, 0, 1))
        ys.append(int(entry.label))
    x = np.stack(xs).astype(np.float32)
    return x, np.asarray(ys, dtype=np.int64)


def _split_or_fresh(manifest, split_path, seed):
    from .dataset import load_split, stratified_split

    if split_path:
        return load_split(split_path, seed)
    return stratified_split(manifest, seed=seed)


def _cmd_prepare(args) -> dict:
    from .dataset import (
        DEFAULT_TARGETS,
        DirectoryStore,
        assign_folds,
        build_augmentation_plan,
        execute_plan,
        load_manifest,
        save_manifest,
        stratified_split,
    )

    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    split = stratified_split(manifest, seed=args.seed)
    split.save(out_dir / "split.csv")

    labels = {e.image_id: e.label for e in manifest.originals()}
    train_ids = split.ids("train")
    folds = assign_folds(train_ids, labels, k=args.folds, seed=args.seed)
    folds.save(out_dir / "folds.csv")

    targets = None
    if args.table2:
        targets = DEFAULT_TARGETS
    elif args.targets:
        targets = tuple(int(t) for t in args.targets.split(","))

    summary: dict = {
        "originals": list(manifest.class_counts()),
        "split": {p: len(split.ids(p)) for p in ("train", "validation", "test")},
        "folds": args.folds,
    }
    if targets is not None:
        plan = build_augmentation_plan(manifest, targets, seed=args.seed)
        plan.save(out_dir / "plan.csv")
        syn = plan.synthetic_counts(manifest)
        after = [o + s for o, s in zip(manifest.class_counts(), syn)]
        summary["targets"] = list(targets)
        summary["synthetic"] = list(syn)
        summary["after_counts"] = after
        summary["total_after"] = int(sum(after))
        if args.execute:
            images_root = args.images_root or str(Path(args.manifest).parent)
            store = DirectoryStore(images_root)
            augmented = execute_plan(manifest, plan, store)
            save_manifest(augmented, out_dir / "manifest_augmented.csv")
            summary["executed"] = True
    return summary


def _cmd_train(args) -> dict:
    from .dataset import load_manifest
    from .nn import PRESETS, TrainConfig, history_to_csv, save_model, train

    manifest = load_manifest(args.manifest)
    config = PRESETS[args.config]()
    split = _split_or_fresh(manifest, args.split, args.seed)
    images_root = args.images_root or str(Path(args.manifest).parent)
    hw = config.input_shape[1:]
    x_train, y_train = _load_arrays(manifest, sorted(split.ids("train")), images_root, hw)
    x_val, y_val = _load_arrays(manifest, sorted(split.ids("validation")), images_root, hw)

    tcfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed
    )
    history, best_params = train(config, tcfg, x_train, y_train, x_val, y_val)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(config, best_params, out)
    history_path = out.with_suffix(out.suffix + ".history.csv")
    history_path.write_text(history_to_csv(history))
    best = history.best
    return {
        "model": str(out),
        "history": str(history_path),
        "epochs_run": history.stop_epoch,
        "best_epoch": history.best_epoch,
        "best_val_loss": best.val_loss,
        "best_val_acc": best.val_acc,
    }


def _cmd_eval(args) -> dict:
    from .dataset import load_manifest
    from .metrics import confusion, metric_report, roc_auc_ovr, SingleClassOnly
    from .nn import forward, load_model
    from .nn.loss import softmax_probs
    from .quant import load_qmodel, qforward_batch

    if bool(args.model) == bool(args.qmodel):
        raise UsageError("eval needs exactly one of --model / --qmodel")
    manifest = load_manifest(args.manifest)
    split = _split_or_fresh(manifest, args.split, args.seed)
    images_root = args.images_root or str(Path(args.manifest).parent)

    if args.model:
        config, params = load_model(args.model)
        infer = lambda x: forward(params, config, x, train=False)  # noqa: E731
    else:
        qm = load_qmodel(args.qmodel)
        config = qm.config
        infer = lambda x: qforward_batch(qm, x)  # noqa: E731

    ids = sorted(split.ids("test"))
    x, y = _load_arrays(manifest, ids, images_root, config.input_shape[1:])
    logits = np.concatenate([infer(x[i : i + 32]) for i in range(0, len(x), 32)])
    probs = softmax_probs(logits.astype(np.float64))
    preds = logits.argmax(axis=1)

    cm = confusion(preds, y)
    report = metric_report(cm)
    try:
        auc, _ = roc_auc_ovr(probs, y)
        report.auc = auc
        report.auc_defined = True
    except SingleClassOnly:
        report.auc = None
        report.auc_defined = False
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    return {
        "report": str(out),
        "samples": len(ids),
        "overall_accuracy": report.overall_accuracy,
        "macro_f1": report.macro_f1,
        "auc": report.auc,
    }


def _cmd_quantize(args) -> dict:
    from .accounting import model_size_bytes, quantized_size_bytes
    from .dataset import load_manifest
    from .nn import forward, load_model
    from .quant import qforward_batch, quantize_model, save_qmodel

    config, params = load_model(args.model)
    manifest = load_manifest(args.manifest)
    images_root = args.images_root or str(Path(args.manifest).parent)
    ids = sorted(e.image_id for e in manifest.entries)[: args.calib_count]
    x, _ = _load_arrays(manifest, ids, images_root, config.input_shape[1:])

    batches = [x[i : i + 32] for i in range(0, len(x), 32)]
    qm = quantize_model(config, params, batches)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_qmodel(qm, out)

    float_logits = np.concatenate([forward(params, config, b, train=False) for b in batches])
    q_logits = np.concatenate([qforward_batch(qm, b) for b in batches])
    agreement = float((float_logits.argmax(1) == q_logits.argmax(1)).mean())
    fsize = model_size_bytes(config, params)
    qsize = quantized_size_bytes(qm)
    return {
        "qmodel": str(out),
        "calibration_images": len(ids),
        "top1_agreement": agreement,
        "float_bytes": fsize,
        "quantized_bytes": qsize,
        "size_ratio": qsize / fsize,
    }


def _cmd_bench(args) -> dict:
    from .accounting import bench_latency, count_flops
    from .nn import PRESETS, init_params, load_model
    from .quant import load_qmodel

    sources = [bool(args.config), bool(args.model), bool(args.qmodel)]
    if sum(sources) != 1:
        raise UsageError("bench needs exactly one of --config / --model / --qmodel")

    qm = None
    if args.config:
        config = PRESETS[args.config]()
        params = None
    elif args.model:
        config, params = load_model(args.model)
    else:
        qm = load_qmodel(args.qmodel)
        config, params = qm.config, None

    dims = None
    if args.input:
        w, h = args.input
        dims = (h, w)
    flops = count_flops(config, dims, double_count=args.double_count)
    payload: dict = json.loads(flops.to_json())
    payload.pop("per_layer")

    if args.runs > 0:
        if qm is not None:
            model = qm
        else:
            if params is None:
                # seeded random weights: latency does not depend on values
                params = init_params(config, seed=args.seed)
            model = (config, params)
        latency = bench_latency(model, args.runs, args.warmup, dims, seed=args.seed)
        lat_doc = json.loads(latency.to_json())
        lat_doc.pop("times_ms")
        payload["latency"] = lat_doc

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        doc = json.loads(flops.to_json())
        if args.runs > 0:
            doc["latency"] = json.loads(latency.to_json())
        out.write_text(json.dumps(doc, indent=2))
        payload["report"] = str(out)
    return payload


def _cmd_serve(args) -> dict:
    import uvicorn

    from .quant import load_qmodel
    from .service import ServiceCore, create_app

    core = ServiceCore(args.data_dir, model=load_qmodel(args.qmodel))
    admin_email = os.environ.get("DRSCREEN_ADMIN_EMAIL")
    admin_password = os.environ.get("DRSCREEN_ADMIN_PASSWORD")
    if admin_email and admin_password:
        try:
            core.create_superadmin("Administrator", admin_email, admin_password)
        except Exception:
            pass  # already bootstrapped
    app = create_app(core)
    print(f"RESULT serve {json.dumps({'port': args.port, 'data_dir': args.data_dir})}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {}


class UsageError(Exception):
    pass


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handlers = {
        "prepare": _cmd_prepare,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "quantize": _cmd_quantize,
        "bench": _cmd_bench,
        "serve": _cmd_serve,
    }
    try:
        payload = handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.command != "serve":
        _result(args.command, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
