"""Command-line entry points: data generation, training, evaluation, gradient
checks, one-shot reports, and the HTTP server."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import data as data_mod
from .guidance import to_display_score
from .model import AestheticModel, CheckpointError, ModelConfig, load_checkpoint, save_checkpoint
from .train import TrainingConfig, eval_metrics, fit


def _cmd_gen_data(args):
    manifest = data_mod.write_dataset(args.out, args.n, args.seed, size=args.size)
    print(f"wrote {args.n} samples to {manifest}")
    return 0


def _cmd_train(args):
    config = TrainingConfig.from_json(args.config) if args.config else TrainingConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.max_epochs is not None:
        config.max_epochs = args.max_epochs
    samples = data_mod.load_manifest(args.data, image_size=None)
    image_size = samples[0].image.shape[0]
    model_config = ModelConfig(image_size=image_size, init_seed=config.seed) if image_size != 64 else ModelConfig(init_seed=config.seed)
    model = AestheticModel(model_config)
    train_set, val_set = data_mod.split(samples, args.train_fraction, config.seed)

    def progress(record):
        line = f"epoch {record.epoch:3d}  total {record.train['total']:.5f}  aes {record.train['aes']:.5f}  att {record.train['att']:.5f}  mi {record.train['mi']:.5f}"
        if record.val:
            line += f"  val_total {record.val['total']:.5f}"
        print(line, flush=True)

    report = fit(model, train_set, val_set, config, log_path=args.log, checkpoint_path=args.out, progress=progress)
    print(f"stopped at epoch {report.stopped_epoch} (best {report.best_epoch}, loss {report.best_loss:.5f}, {report.wall_time_s:.1f}s)")
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_eval(args):
    model, _ = load_checkpoint(args.ckpt)
    samples = data_mod.load_manifest(args.data, image_size=model.config.image_size)
    metrics = eval_metrics(model, samples, n_pairs=args.pairs, seed=args.seed)
    payload = json.dumps(metrics, indent=2, sort_keys=True)
    if args.metrics_out:
        with open(args.metrics_out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return 0


def _cmd_gradcheck(_args):
    results = ad.gradcheck_suite()
    worst = 0.0
    for op, err in results.items():
        print(f"{op:28s} max relative error {err:.3e}")
        worst = max(worst, err)
    print(f"{'WORST':28s} {worst:.3e} (threshold 1e-4)")
    return 0 if worst < 1e-4 else 1


def _cmd_report(args):
    from PIL import Image

    model, _ = load_checkpoint(args.ckpt)
    img = Image.open(args.image).convert("RGB")
    size = model.config.image_size
    if img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    image = np.asarray(img, dtype=np.float32) / 255.0
    report = model.evaluate(image)

    os.makedirs(args.out_dir, exist_ok=True)
    from .server import heatmap_png

    payload = {
        "overall": {"raw": report.overall, "display": to_display_score(report.overall)},
        "attributes": [],
    }
    for a in report.attributes:
        png_name = f"heatmap_{a.name}.png"
        with open(os.path.join(args.out_dir, png_name), "wb") as fh:
            fh.write(heatmap_png(a.mask, size))
        payload["attributes"].append(
            {
                "name": a.name,
                "score": a.score,
                "display_score": to_display_score(a.score),
                "weight": a.weight,
                "heatmap": png_name,
            }
        )
    out_path = os.path.join(args.out_dir, "report.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"report written to {out_path}")
    return 0


def _cmd_serve(args):
    import uvicorn

    from .server import create_app

    model, _ = load_checkpoint(args.ckpt)
    app = create_app(model)
    port = args.port or int(os.environ.get("AESTHETE_PORT", "8000"))
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="aesthete", description="Interpretable aesthetic scoring toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a manifest dataset")
    p.add_argument("--data", required=True, help="path to manifest.csv")
    p.add_argument("--config", help="training config JSON (defaults otherwise)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--log", help="optional JSONL epoch log")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="compute metrics for a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics-out", dest="metrics_out")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("report", help="evaluate one image and write JSON + heatmaps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="run the HTTP evaluation service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
