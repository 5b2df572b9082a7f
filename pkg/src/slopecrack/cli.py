"""Command-line entry point.

    slopecrack generate  [-c CONFIG] [--set key=value ...]
    slopecrack ingest    DIR [--side N] [--manifest PATH]
    slopecrack pretrain | scratch | transfer | compare  [-c CONFIG] [--set ...] [--jobs N]
    slopecrack report    RUN_DIR

Exit status: 0 success, 1 runtime failure, 2 invalid configuration. Failures
print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .config import ConfigError, DataSource, RunConfig, load_config
from .data import Dataset, SplitSpec, load_dataset, save_dataset, split_dataset, write_manifest
from .models import KINDS, ModelSpec
from .report import emit_report, regenerate_report
from .synth import CrackGenConfig, generate_dataset
from .train import TrainConfig, run_experiment

log = logging.getLogger("slopecrack")

COMMAND_MODES = {"pretrain": "pretrain", "scratch": "scratch"}


def _fail(code: int, message: str, field: str = "") -> int:
    doc = {"error": message, "exit": code}
    if field:
        doc["field"] = field
    print(json.dumps(doc), file=sys.stderr)
    return code


# -- datasets ------------------------------------------------------------------

def gen_config(src: DataSource, side: int) -> CrackGenConfig:
    g = src.generate
    return CrackGenConfig(side=side, background=g.background, crack_walk_steps=g.crack_walk_steps,
                          crack_width_px=g.crack_width_px, crack_darkness=g.crack_darkness,
                          noise_amplitude=g.noise_amplitude, seed=g.seed)


def materialize(src: Optional[DataSource], role: str, cfg: RunConfig, base: Path) -> Optional[Dataset]:
    if src is None:
        return None
    if src.path is not None:
        return load_dataset(base / src.path, cfg.data.side, name=role)
    return generate_dataset(gen_config(src, cfg.data.side), src.generate.n_per_class, name=role)


def resolve_run_data(cfg: RunConfig, mode: str, base: Path) -> dict:
    split = SplitSpec(cfg.data.split.train_fraction, cfg.data.split.seed)
    out = {}
    if mode != "scratch":
        source = materialize(cfg.data.source, "source", cfg, base)
        if source is None:
            raise ValueError(f"mode {mode} needs data.source")
        out["source_train"], out["source_test"] = split_dataset(source, split)
    if mode != "pretrain":
        target = materialize(cfg.data.target, "target", cfg, base)
        if target is None:
            raise ValueError(f"mode {mode} needs data.target")
        out["target_train"], out["target_test"] = split_dataset(target, split)
    return out


def train_config(cfg: RunConfig, kind: str, mode: str, base: Path, run_dir: Path) -> TrainConfig:
    t = cfg.train
    ckpt_in = str(base / t.checkpoint_in) if t.checkpoint_in else None
    if mode == "transfer_finetune" and ckpt_in and Path(ckpt_in).is_dir():
        ckpt_in = str(Path(ckpt_in) / f"{kind}.fsr")
    ckpt_out = str(run_dir / "checkpoints" / f"{kind}.fsr") if t.save_checkpoints else None
    return TrainConfig(model=ModelSpec(kind, cfg.model.scale), epochs=t.epochs, batch_size=t.batch_size,
                       learning_rate=t.learning_rate, momentum=t.momentum, augmentation=cfg.augmentation.policy(),
                       seed=t.seed, mode=mode, checkpoint_in=ckpt_in, checkpoint_out=ckpt_out, timing=t.timing)


def _run_one(args):
    tcfg, datasets = args
    result = run_experiment(tcfg, **datasets)
    result.net = None
    return result


# -- commands ------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, base: Path, dest: Optional[str]) -> int:
    root = Path(dest) if dest else base / cfg.output_dir / "data"
    for role in ("source", "target"):
        src = getattr(cfg.data, role)
        if src is None or src.generate is None:
            continue
        ds = generate_dataset(gen_config(src, cfg.data.side), src.generate.n_per_class, name=role)
        manifest = save_dataset(ds, root / role)
        print(f"{role}: {len(ds)} images -> {manifest}")
    return 0


def cmd_ingest(directory: str, side: int, manifest: Optional[str]) -> int:
    ds = load_dataset(directory, side)
    doc = ds.manifest()
    doc["skipped"] = ds.skipped
    path = write_manifest(doc, manifest or Path(directory) / "manifest.json")
    counts = ds.class_counts()
    print(f"{ds.name}: {len(ds)} images (cracked {counts[1]}, uncracked {counts[0]}, skipped {ds.skipped}) -> {path}")
    return 0


def cmd_train(command: str, cfg: RunConfig, base: Path, jobs: int) -> int:
    if command in COMMAND_MODES:
        mode = COMMAND_MODES[command]
    elif command == "transfer":
        mode = cfg.mode if cfg.mode.startswith("transfer") else "transfer_merge"
    else:
        mode = cfg.mode
    if mode == "transfer_finetune" and not cfg.train.checkpoint_in:
        raise ConfigError("mode transfer_finetune needs train.checkpoint_in", "train.checkpoint_in")
    run_dir = base / cfg.output_dir / (cfg.run_id or command)
    datasets = resolve_run_data(cfg, mode, base)
    kinds = list(cfg.model.kinds)
    if command == "compare" and "kinds" not in cfg.model.model_fields_set:
        kinds = list(KINDS)
    tasks = [(train_config(cfg, k, mode, base, run_dir), datasets) for k in kinds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    echo = cfg.echo()
    echo["resolved_mode"] = mode
    echo["model"]["kinds"] = kinds
    paths = emit_report(results, run_dir, echo)
    for r in results:
        print(f"{r.label} {mode}: best {r.best_accuracy:.3f} at epoch {r.best_epoch}")
    print(f"results -> {paths['records'].parent}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slopecrack", description="Crack classifier transfer-learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", help="JSON run configuration")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. train.epochs=3")
        return p

    g = with_config(sub.add_parser("generate", help="write synthetic source/target corpora"))
    g.add_argument("--dest", help="output root (default <output_dir>/data)")

    i = sub.add_parser("ingest", help="validate a cracked/uncracked directory and write its manifest")
    i.add_argument("directory")
    i.add_argument("--side", type=int, default=64)
    i.add_argument("--manifest")

    for name, text in [("pretrain", "train on the source corpus"), ("scratch", "train on the target corpus only"),
                       ("transfer", "train on source+target, evaluate on target"),
                       ("compare", "sweep model kinds under one config")]:
        p = with_config(sub.add_parser(name, help=text))
        p.add_argument("--jobs", type=int, default=1, help="parallel model runs (default 1, deterministic)")

    r = sub.add_parser("report", help="re-emit pivots and summary from records.csv")
    r.add_argument("run_dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "ingest":
            return cmd_ingest(args.directory, args.side, args.manifest)
        if args.command == "report":
            paths = regenerate_report(args.run_dir)
            print(f"report -> {paths['summary'].parent}")
            return 0
        cfg, base = load_config(args.config, args.overrides)
        if args.command == "generate":
            return cmd_generate(cfg, base, args.dest)
        return cmd_train(args.command, cfg, base, args.jobs)
    except ConfigError as exc:
        return _fail(2, str(exc), exc.field)
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        log.debug("failure", exc_info=True)
        return _fail(1, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
