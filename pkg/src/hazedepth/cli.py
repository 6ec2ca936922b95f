"""Command-line entry point: ``hazedepth {corpus,synth,train,infer,eval}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
``HAZEDEPTH_OUT_ROOT`` (if set) is the base for relative output paths.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import AirlightConfig, ConfigError, RunConfig, toy_config
from .data import DataConfigError, load_dataset
from .imageio import list_images, read_depth16, read_rgb, write_depth16, write_rgb
from .synthesis import CorpusIntegrityError, generate_dataset

log = logging.getLogger("hazedepth")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ROOT_ENV = "HAZEDEPTH_OUT_ROOT"


class UsageError(Exception):
    pass


def _out_path(p) -> Path:
    p = Path(p)
    root = os.environ.get(OUT_ROOT_ENV)
    return Path(root) / p if root and not p.is_absolute() else p


def _base_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    return toy_config() if getattr(args, "toy", False) else RunConfig()


def _override(obj, attr, value):
    if value is not None:
        setattr(obj, attr, value)


def resolve_train_config(args) -> RunConfig:
    cfg = _base_config(args)
    t = cfg.train
    for attr, flag in [("epochs", "epochs"), ("seed", "seed"), ("batch", "batch"), ("patch", "patch"),
                       ("neg_ratio", "neg_ratio"), ("cycle_steps", "cycle_steps")]:
        _override(t, attr, getattr(args, flag))
    if args.lr is not None:
        t.base_lr, t.min_lr, t.max_lr = args.lr, args.lr / 10, args.lr
    for i in range(1, 5):
        _override(t.weights, f"lambda{i}", getattr(args, f"lambda{i}"))
    _override(cfg.decoder, "num_queries", args.num_queries)
    _override(t, "augment", args.augment)
    paths = {"train": args.train, "real": args.real, "eval": args.eval}
    cfg.paths.update({k: str(v) for k, v in paths.items() if v})
    # re-run validation on the merged result
    return RunConfig.from_dict(cfg.to_dict())


def cmd_corpus(args):
    from .scenes import write_corpus, write_pseudo_real

    out = _out_path(args.out)
    write_corpus(out, args.count, args.size, args.seed)
    if args.pseudo_real:
        write_pseudo_real(_out_path(args.pseudo_real), args.count, args.size, seed=args.seed + 10_000)
    print(f"wrote {args.count} scenes to {out}")


def cmd_synth(args):
    airlight = RunConfig.load(args.config).airlight if args.config else AirlightConfig()
    out = _out_path(args.out)
    manifest = generate_dataset(args.corpus, airlight, args.count, args.seed, out)
    (out / "meta" / "config.json").write_text(json.dumps(
        {"corpus": str(args.corpus), "count": args.count, "seed": args.seed,
         "airlight": manifest["airlight_config"]}, indent=2, sort_keys=True))
    print(f"wrote {args.count} samples to {out}")


def cmd_train(args):
    from .training import fit

    cfg = resolve_train_config(args)
    if not cfg.paths.get("train"):
        raise UsageError("--train dataset directory is required (flag or config paths.train)")
    out = _out_path(args.out)
    t0 = time.perf_counter()
    ckpt = fit(cfg, cfg.paths, out, resume=args.resume, max_steps=args.max_steps)
    print(f"final checkpoint {ckpt} ({time.perf_counter() - t0:.1f}s)")


def _write_prediction(out_dir: Path, stem: str, dehazed, depth):
    write_rgb(out_dir / f"{stem}_dehazed.png", dehazed)
    scale = float(depth.max()) if depth.max() > 0 else 1.0
    write_depth16(out_dir / f"{stem}_depth.png", depth / scale)
    (out_dir / f"{stem}_depth.json").write_text(json.dumps({"depth_scale": scale}))


def read_depth_prediction(png_path) -> np.ndarray:
    """Depth in model units from an inferred 16-bit PNG and its JSON sidecar."""
    png_path = Path(png_path)
    scale = json.loads(png_path.with_suffix(".json").read_text())["depth_scale"]
    return read_depth16(png_path) * scale


def _plot(path, panels: list[tuple[str, np.ndarray]]):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(panels), figsize=(2.6 * len(panels), 2.8))
    for ax, (title, img) in zip(np.atleast_1d(axes), panels):
        if img.shape[-1] == 1:
            ax.imshow(img[..., 0], cmap="magma")
        else:
            ax.imshow(np.clip(img, 0, 1))
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_infer(args):
    from .inference import predict
    from .training import load_model

    model, _, _ = load_model(args.checkpoint)
    src = Path(args.input)
    inputs = list_images(src) if src.is_dir() else [src]
    if not inputs:
        raise DataConfigError(f"no images at {src}")
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in inputs:
        image = read_rgb(path)
        t0 = time.perf_counter()
        dehazed, depth = predict(model, image)
        if args.timing:
            print(f"{path.name}: {1000 * (time.perf_counter() - t0):.1f} ms")
        _write_prediction(out, path.stem, dehazed, depth)
        if args.plot:
            _plot(out / f"{path.stem}_plot.png", [("hazy", image), ("dehazed", dehazed), ("depth", depth)])
    print(f"wrote {len(inputs)} predictions to {out}")


def cmd_eval(args):
    from .inference import aggregate, evaluate, predict, score_row, write_metrics_csv

    samples = load_dataset(args.dataset, limit=args.limit)
    if args.oracle:
        rows = [score_row(s.id, s.clean, s.clean, s.depth, s.depth) for s in samples]
        rows.append(aggregate(rows))
    else:
        if not args.checkpoint:
            raise UsageError("--checkpoint is required unless --oracle is given")
        from .training import load_model

        model, _, _ = load_model(args.checkpoint)
        t0 = time.perf_counter()
        rows = evaluate(model, samples)
        if args.timing:
            print(f"mean forward+metrics time {1000 * (time.perf_counter() - t0) / max(len(samples), 1):.1f} ms/image")
        if args.plot:
            plot_dir = _out_path(args.out).parent / "plots"
            plot_dir.mkdir(parents=True, exist_ok=True)
            for s in samples[: args.plot]:
                dehazed, depth = predict(model, s.hazy)
                _plot(plot_dir / f"{s.id}.png", [("hazy", s.hazy), ("dehazed", dehazed), ("clean", s.clean),
                                                 ("depth pred", depth), ("depth gt", s.depth)])
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out, rows)
    agg = rows[-1]
    print("  ".join(f"{k}={v:.4f}" for k, v in agg.items() if k != "id"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hazedepth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corpus", help="write a procedural clean+depth corpus")
    c.add_argument("--out", required=True)
    c.add_argument("--count", type=int, default=16)
    c.add_argument("--size", type=int, default=64)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--pseudo-real", help="also write a pseudo-real negative pool here")
    c.set_defaults(func=cmd_corpus)

    s = sub.add_parser("synth", help="synthesize a paired hazy dataset")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the joint model")
    t.add_argument("--config")
    t.add_argument("--toy", action="store_true", help="start from the desk-scale preset")
    t.add_argument("--train")
    t.add_argument("--real")
    t.add_argument("--eval")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--patch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--cycle-steps", type=int)
    t.add_argument("--neg-ratio", type=float)
    t.add_argument("--num-queries", type=int)
    t.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None,
                   help="dihedral augmentation (default from config)")
    for i in range(1, 5):
        t.add_argument(f"--lambda{i}", type=float)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="dehaze + estimate depth for images")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--plot", action="store_true")
    i.add_argument("--timing", action="store_true")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint")
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True, help="CSV path")
    e.add_argument("--limit", type=int)
    e.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    e.add_argument("--plot", type=int, default=0, metavar="N", help="comparison grids for the first N images")
    e.add_argument("--timing", action="store_true")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    from .training import NonFiniteLossError

    try:
        args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusIntegrityError, DataConfigError, CheckpointError, FileNotFoundError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
