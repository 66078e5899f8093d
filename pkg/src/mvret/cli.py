"""Command-line entry point: synth | split | train | eval | sweep | serve | inspect.

Config precedence is flags > config file (JSON via ``--config``) > built-in
defaults. Every run writes a ``run.json`` reproducibility stanza (effective
config, its hash, seed, package version) next to its artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, SyntheticConfig, generate_synthetic, stratified_split
from .losses import LossWeights
from .model import ModelConfig
from .retrieval import alpha_sweep, embed_corpus, select_optimal_alpha
from .reports import write_report
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train


def _parse_alphas(text: str) -> list[float]:
    """'0:1:0.1' (inclusive range) or a comma-separated list like '0.3,0.7'."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        values = [round(lo + i * step, 10) for i in range(count)]
    else:
        values = [float(x) for x in text.split(",")]
    for a in values:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
    return values


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults < config file < explicitly passed flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        merged.update(json.loads(Path(config_path).read_text()))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _write_run_stanza(out_dir: Path, command: str, effective: dict) -> None:
    doc = json.dumps({"command": command, "config": effective}, sort_keys=True,
                     separators=(",", ":"))
    stanza = {
        "command": command,
        "config": effective,
        "config_hash": hashlib.sha256(doc.encode()).hexdigest(),
        "version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(
        json.dumps(stanza, sort_keys=True, indent=2) + "\n")
    print(f"[mvret] {command}: seed={effective.get('seed')} "
          f"config_hash={stanza['config_hash'][:12]} version={__version__}")


def cmd_synth(args) -> int:
    defaults = {"classes": 8, "per_class": 250, "audio_dim": 64, "video_dim": 32,
                "rho": 0.9, "sep": 1.0, "noise": 0.5, "layers": 0, "seed": 0}
    eff = _effective(args, defaults)
    dataset = generate_synthetic(SyntheticConfig(
        num_classes=eff["classes"], items_per_class=eff["per_class"],
        audio_dim=eff["audio_dim"], video_dim=eff["video_dim"],
        pair_correlation=eff["rho"], class_separation=eff["sep"],
        noise_level=eff["noise"], num_audio_layers=eff["layers"], seed=eff["seed"]))
    out = Path(args.out)
    dataset.save(out)
    _write_run_stanza(out, "synth", eff)
    counts = dataset.manifest.header()["split_counts"]
    print(f"[mvret] wrote {len(dataset.manifest.items)} items to {out} (splits: {counts})")
    return 0


def cmd_split(args) -> int:
    defaults = {"fractions": "0.8,0.1,0.1", "seed": 0}
    eff = _effective(args, defaults)
    fractions = tuple(float(x) for x in eff["fractions"].split(","))
    dataset = Dataset.load(args.data)
    stratified_split(dataset.manifest.items, fractions, eff["seed"])
    out = Path(args.out)
    dataset.save(out)
    _write_run_stanza(out, "split", eff)
    print(f"[mvret] re-split into {out}: {dataset.manifest.header()['split_counts']}")
    return 0


def cmd_train(args) -> int:
    defaults = {"epochs": 50, "batch_size": 128, "lr": 0.001, "alpha": 0.5,
                "tau": 0.1, "seed": 0, "embed_dim": 32, "dropout": 0.4,
                "g_hidden": "512,512", "h_hidden": "256",
                "weights": "1,1,1,1", "normalize": 1}
    eff = _effective(args, defaults)
    dataset = Dataset.load(args.data)
    manifest = dataset.manifest
    model_config = ModelConfig(
        audio_input_dim=manifest.audio_dim, video_input_dim=manifest.video_dim,
        embed_dim=eff["embed_dim"],
        g_hidden_dims=tuple(int(x) for x in str(eff["g_hidden"]).split(",")),
        h_hidden_dims=tuple(int(x) for x in str(eff["h_hidden"]).split(",")),
        dropout_p=eff["dropout"], num_audio_layers=manifest.num_audio_layers,
        normalize_q=bool(eff["normalize"]), normalize_z=bool(eff["normalize"]))
    w = [float(x) for x in str(eff["weights"]).split(",")]
    train_config = TrainConfig(
        epochs=eff["epochs"], batch_size=eff["batch_size"], learning_rate=eff["lr"],
        train_alpha=eff["alpha"], temperature=eff["tau"], seed=eff["seed"],
        loss_weights=LossWeights(*w))

    def progress(epoch, tr, val):
        print(f"[mvret] epoch {epoch:3d}  train {tr.total:.4f}  val {val.total:.4f}")

    checkpoint, log = train(dataset, model_config, train_config, progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "best.mvck", checkpoint)
    (out / "train_log.json").write_text(log.canonical())
    (out / "timing.json").write_text(json.dumps(
        {"wall_clock_per_epoch": log.wall_clock}, indent=2) + "\n")
    _write_run_stanza(out, "train", eff)
    print(f"[mvret] best epoch {log.best_epoch}, checkpoint at {out / 'best.mvck'}")
    return 0


def _run_sweep(args, default_alphas: str, command: str) -> int:
    defaults = {"split": "test", "alphas": default_alphas, "protocol": "ssl,genre",
                "subset_size": 0, "subsets": 1, "seed": 0, "no_figures": 0}
    eff = _effective(args, defaults)
    checkpoint = load_checkpoint(args.ckpt)
    dataset = Dataset.load(args.data)
    corpus = embed_corpus(checkpoint, dataset, eff["split"])
    subset_size = eff["subset_size"] or None
    report = alpha_sweep(corpus, _parse_alphas(str(eff["alphas"])),
                         tuple(str(eff["protocol"]).split(",")),
                         subset_size=subset_size, subset_count=eff["subsets"],
                         seed=eff["seed"])
    out = Path(args.out)
    write_report(report, out, figures=not eff["no_figures"])
    _write_run_stanza(out, command, eff)
    protocols = str(eff["protocol"]).split(",")
    if len(report.series("ssl", "v2m", "R@10")) > 1 and "ssl" in protocols:
        print(f"[mvret] optimal alpha (ssl R@10, v2m): "
              f"{select_optimal_alpha(report, 'ssl', 'R@10')}")
    if len(report.series("genre", "v2m", "P@10")) > 1 and "genre" in protocols:
        print(f"[mvret] optimal alpha (genre P@10, v2m): "
              f"{select_optimal_alpha(report, 'genre', 'P@10')}")
    print(f"[mvret] report written to {out}")
    return 0


def cmd_eval(args) -> int:
    return _run_sweep(args, "0.5", "eval")


def cmd_sweep(args) -> int:
    return _run_sweep(args, "0:1:0.1", "sweep")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt, args.data, split=args.split)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_inspect(args) -> int:
    if args.ckpt:
        ckpt = load_checkpoint(args.ckpt)
        total = sum(int(np.prod(p.shape)) for p in ckpt.params.values())
        print(json.dumps({
            "epoch": ckpt.epoch, "model_config": ckpt.model_config.to_json(),
            "num_parameters": total, "seed": ckpt.seed,
            "temperature": ckpt.temperature, "train_alpha": ckpt.train_alpha,
        }, sort_keys=True, indent=2))
    if args.data:
        dataset = Dataset.load(args.data)
        print(json.dumps(dataset.manifest.header(), sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvret",
                                     description="Controllable cross-modal retrieval toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--config", help="JSON config file (flags override)")
    p.add_argument("--classes", type=int, help="number of genre classes")
    p.add_argument("--per-class", dest="per_class", type=int, help="items per class")
    p.add_argument("--audio-dim", dest="audio_dim", type=int)
    p.add_argument("--video-dim", dest="video_dim", type=int)
    p.add_argument("--rho", type=float, help="pair-identity signal strength in [0,1]")
    p.add_argument("--sep", type=float, help="class-separation strength >= 0")
    p.add_argument("--noise", type=float, help="independent noise level")
    p.add_argument("--layers", type=int, help="audio layer count (0 = flat features)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="re-assign stratified splits of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--fractions", help="train,val,test fractions, e.g. 0.8,0.1,0.1")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float, help="training-time mixing weight")
    p.add_argument("--tau", type=float, help="contrastive temperature")
    p.add_argument("--seed", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--g-hidden", dest="g_hidden", help="shared-net widths, e.g. 512,512")
    p.add_argument("--h-hidden", dest="h_hidden", help="task-head widths, e.g. 256")
    p.add_argument("--weights", help="loss weights ssl_z,sup_z,ssl_h,sup_h")
    p.add_argument("--normalize", type=int, choices=(0, 1),
                   help="L2-normalize embeddings (default 1)")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("eval", cmd_eval, "evaluate retrieval at chosen alphas"),
                                  ("sweep", cmd_sweep, "full alpha grid sweep with figures")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--config")
        p.add_argument("--split", choices=("train", "val", "test"))
        p.add_argument("--alphas", help="'0:1:0.1' range or comma list")
        p.add_argument("--protocol", help="comma list from {ssl,genre}")
        p.add_argument("--subset-size", dest="subset_size", type=int,
                       help="ssl protocol subset size (0 = whole corpus)")
        p.add_argument("--subsets", type=int, help="number of disjoint subsets")
        p.add_argument("--seed", type=int)
        p.add_argument("--no-figures", dest="no_figures", type=int, choices=(0, 1))
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="start the read-only retrieval HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("inspect", help="print dataset / checkpoint metadata")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
