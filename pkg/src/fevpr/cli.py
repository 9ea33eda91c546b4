"""Command-line entry point: prepare, train, evaluate, ablate, plot, synth.

Every command writes a ``manifest.json`` into its output directory before
doing work (command, resolved config, inputs, seed, version stamp) and
finalizes it on exit with the status and wall-clock time.  Config
precedence is CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
import logging
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, model_from_checkpoint
from .config import ConfigError, TrainConfig, load_config
from .dataset import DatasetError, TraverseConfig, load_traverse
from .evaluation import evaluate_pair, build_index, write_report_bundle
from .inputs import cached_event_frames, default_cache_dir
from .synthetic import SyntheticWorldConfig, generate_world

log = logging.getLogger(__name__)

# every ablation-table row, reachable purely through config switches
ABLATION_PRESETS: dict[str, dict] = {
    "full": {},
    "frame_only": {"frame_only": True},
    "event_only": {"event_only": True},
    "scale8": {"single_scale": 8},
    "scale8_noattn": {"single_scale": 8, "no_attention": True},
    "scale16": {"single_scale": 16},
    "scale16_noattn": {"single_scale": 16, "no_attention": True},
    "scale32": {"single_scale": 32},
    "scale32_noattn": {"single_scale": 32, "no_attention": True},
    "multiscale_noattn": {"no_attention": True},
    "flatten_concat": {"flatten_concat": True},
}


def _version_stamp() -> str:
    stamp = __version__
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0:
            stamp += "+g" + rev.stdout.strip()
    except OSError:
        pass
    return stamp


class RunManifest:
    """Written before work starts; finalized (status, timing) on exit."""

    def __init__(self, command: str, out_dir: Path, config: TrainConfig | None,
                 inputs: dict, seed: int | None):
        out_dir.mkdir(parents=True, exist_ok=True)
        self.path = out_dir / "manifest.json"
        self.started = time.monotonic()
        self.data = {
            "command": command,
            "argv": sys.argv[1:],
            "config": config.to_dict() if config is not None else None,
            "inputs": {k: str(v) for k, v in inputs.items()},
            "output_dir": str(out_dir),
            "seed": seed,
            "version": _version_stamp(),
            "started_at": datetime.now(timezone.utc).isoformat(),
            "status": "running",
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2))

    def finalize(self, status: str, outputs: dict | None = None, error: str = ""):
        self.data["status"] = status
        self.data["wall_seconds"] = round(time.monotonic() - self.started, 3)
        self.data["finished_at"] = datetime.now(timezone.utc).isoformat()
        if outputs:
            self.data["outputs"] = {k: str(v) for k, v in outputs.items()}
        if error:
            self.data["error"] = error
        self._write()


def _parse_set_overrides(pairs: list[str] | None) -> dict:
    overrides: dict = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_config(args, extra: dict | None = None) -> TrainConfig:
    overrides = _parse_set_overrides(getattr(args, "set", None))
    overrides.update(extra or {})
    if getattr(args, "ablation", None):
        if args.ablation not in ABLATION_PRESETS:
            raise ConfigError(
                f"unknown ablation preset {args.ablation!r}; "
                f"choose from {', '.join(sorted(ABLATION_PRESETS))}"
            )
        overrides.update(ABLATION_PRESETS[args.ablation])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        overrides["max_iterations"] = args.iterations
    return load_config(getattr(args, "config", None), overrides)


def _traverse_config(config: TrainConfig) -> TraverseConfig:
    return TraverseConfig(window_us=config.window_us, window_mode=config.window_mode)


def _check_outputs(paths: dict[str, Path]):
    missing = [str(p) for p in paths.values() if not Path(p).exists()]
    if missing:
        raise RuntimeError(f"declared outputs missing: {', '.join(missing)}")


def cmd_prepare(args) -> int:
    config = _resolve_config(args)
    out_dir = Path(args.out)
    manifest = RunManifest(
        "prepare", out_dir, config,
        inputs={f"traverse_{i}": t for i, t in enumerate(args.traverses)},
        seed=config.seed,
    )
    cache_dir = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    try:
        outputs: dict[str, Path] = {}
        for root in args.traverses:
            traverse = load_traverse(root, _traverse_config(config))
            cached_event_frames(
                traverse, config.window_us, config.window_mode,
                config.input_size, config.event_normalization,
                cache_dir=cache_dir, write=True,
            )
            from .inputs import event_frame_cache_path

            outputs[traverse.name] = event_frame_cache_path(
                cache_dir, traverse, config.window_us, config.window_mode,
                config.input_size, config.event_normalization,
            )
            print(f"prepared {root}: {len(traverse)} samples -> {outputs[traverse.name]}")
        _check_outputs(outputs)
        manifest.finalize("success", outputs)
        return 0
    except (DatasetError, ConfigError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def cmd_train(args) -> int:
    from .training import TrainingDiverged, train

    config = _resolve_config(args)
    out_dir = Path(args.out)
    manifest = RunManifest(
        "train", out_dir, config,
        inputs={"database": args.database, "query": args.query},
        seed=config.seed,
    )
    try:
        database = load_traverse(args.database, _traverse_config(config))
        query = load_traverse(args.query, _traverse_config(config))
        result = train(database, query, config, out_dir,
                       cache_dir=Path(args.cache_dir) if args.cache_dir else None,
                       use_cache=args.use_cache)
        outputs = {
            "best_checkpoint": result.best_path,
            "last_checkpoint": result.last_path,
            "train_log": out_dir / "train_log.jsonl",
        }
        _check_outputs(outputs)
        manifest.finalize("success", outputs)
        print(f"trained {result.iterations} iterations; "
              f"best recall@1 {result.best_recall1:.4f}; "
              f"checkpoints in {out_dir}")
        return 0
    except (DatasetError, ConfigError, TrainingDiverged, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def _evaluate_into(model, config: TrainConfig, database, query, out_dir: Path,
                   checkpoint_id: str, name: str = "") -> dict[str, Path]:
    """Shared evaluate path: indexes + report bundle with figures."""
    db_desc = build_index(
        model, database,
        input_size=config.input_size, window_us=config.window_us,
        window_mode=config.window_mode,
        event_normalization=config.event_normalization,
        out_path=out_dir / "database_descriptors.f32", checkpoint_id=checkpoint_id,
    )
    q_desc = build_index(
        model, query,
        input_size=config.input_size, window_us=config.window_us,
        window_mode=config.window_mode,
        event_normalization=config.event_normalization,
        out_path=out_dir / "query_descriptors.f32", checkpoint_id=checkpoint_id,
    )
    report = evaluate_pair(
        q_desc, db_desc, query, database,
        phi=config.true_positive_radius_m, name=name,
    )
    written = write_report_bundle(report, out_dir, plots=True)
    written["database_descriptors"] = out_dir / "database_descriptors.f32"
    written["query_descriptors"] = out_dir / "query_descriptors.f32"
    return written


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out)
    payload = None
    config = None
    try:
        payload = load_checkpoint(args.checkpoint)
        model, config = model_from_checkpoint(payload)
    except Exception as exc:  # manifest still records the failure below
        manifest = RunManifest("evaluate", out_dir, None,
                               inputs={"checkpoint": args.checkpoint}, seed=None)
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1
    manifest = RunManifest(
        "evaluate", out_dir, config,
        inputs={"checkpoint": args.checkpoint, "database": args.database,
                "query": args.query},
        seed=config.seed,
    )
    try:
        database = load_traverse(args.database, _traverse_config(config))
        query = load_traverse(args.query, _traverse_config(config))
        name = args.name or f"{database.name} / {query.name}"
        written = _evaluate_into(model, config, database, query, out_dir,
                                 payload.get("checkpoint_id", ""), name)
        _check_outputs(written)
        manifest.finalize("success", written)
        recalls = json.loads((out_dir / "recalls.json").read_text())
        print(f"evaluated {name}: recall@1 "
              f"{recalls['recall_at'].get('1', float('nan')):.4f}, "
              f"f1_max {recalls['f1_max']:.4f} -> {out_dir}")
        return 0
    except (DatasetError, ConfigError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def cmd_ablate(args) -> int:
    from .training import TrainingDiverged, train

    out_dir = Path(args.out)
    presets = args.presets or sorted(ABLATION_PRESETS)
    base_config = _resolve_config(args)
    manifest = RunManifest(
        "ablate", out_dir, base_config,
        inputs={"database": args.database, "query": args.query},
        seed=base_config.seed,
    )
    try:
        unknown = [p for p in presets if p not in ABLATION_PRESETS]
        if unknown:
            raise ConfigError(f"unknown ablation preset(s): {', '.join(unknown)}")
        summary_rows = ["preset,recall_at_1,recall_at_5,f1_max"]
        outputs: dict[str, Path] = {}
        for preset in presets:
            overrides = dict(ABLATION_PRESETS[preset])
            config = TrainConfig(**{**base_config.to_dict(), **overrides}).validate()
            database = load_traverse(args.database, _traverse_config(config))
            query = load_traverse(args.query, _traverse_config(config))
            preset_dir = out_dir / preset
            log.info("ablation preset %s", preset)
            result = train(database, query, config, preset_dir)
            payload = load_checkpoint(result.best_path)
            model, config = model_from_checkpoint(payload)
            written = _evaluate_into(model, config, database, query, preset_dir,
                                     payload.get("checkpoint_id", ""), preset)
            _check_outputs(written)
            recalls = json.loads((preset_dir / "recalls.json").read_text())
            summary_rows.append(
                f"{preset},{recalls['recall_at'].get('1', '')},"
                f"{recalls['recall_at'].get('5', '')},{recalls['f1_max']}"
            )
            outputs[preset] = preset_dir
            print(f"{preset}: recall@1 {recalls['recall_at'].get('1')}")
        summary = out_dir / "summary.csv"
        summary.write_text("\n".join(summary_rows) + "\n")
        outputs["summary"] = summary
        _check_outputs(outputs)
        manifest.finalize("success", outputs)
        return 0
    except (DatasetError, ConfigError, TrainingDiverged, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def cmd_plot(args) -> int:
    from .plots import render_bundle

    report_dir = Path(args.report)
    manifest = RunManifest("plot", report_dir, None,
                           inputs={"report": args.report}, seed=None)
    try:
        written = render_bundle(report_dir)
        outputs = {p.stem: p for p in written}
        _check_outputs(outputs)
        manifest.finalize("success", outputs)
        print(f"rendered {len(written)} figure(s) in {report_dir}")
        return 0
    except (OSError, KeyError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    world = SyntheticWorldConfig(
        places=args.places, image_size=args.size, seed=args.seed or 0,
        window_us=args.window_us,
    )
    manifest = RunManifest("synth", out_dir, None, inputs={}, seed=world.seed)
    try:
        paths = generate_world(out_dir, world, corrupted_splits=not args.no_corrupted)
        _check_outputs(paths)
        manifest.finalize("success", paths)
        for name, path in paths.items():
            print(f"{name}: {path}")
        return 0
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finalize("failure", error=str(exc))
        return 1


def _add_config_flags(sub, with_ablation: bool = True):
    sub.add_argument("--config", help="run-config file (key = value lines)")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config key (repeatable)")
    sub.add_argument("--seed", type=int, help="random seed override")
    if with_ablation:
        sub.add_argument("--ablation", help="ablation preset name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fevpr",
        description="Frame + event place recognition: training and retrieval evaluation",
    )
    parser.add_argument("--version", action="version", version=_version_stamp())
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("prepare", help="validate traverses and cache event frames")
    p.add_argument("traverses", nargs="+", help="traverse directories")
    p.add_argument("--out", required=True, help="manifest/output directory")
    p.add_argument("--cache-dir", help=f"cache directory (or ${'{'}FEVPR_CACHE_DIR{'}'})")
    _add_config_flags(p, with_ablation=False)
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("train", help="train a descriptor network")
    p.add_argument("--database", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, help="cap on training batches")
    p.add_argument("--cache-dir")
    p.add_argument("--use-cache", action="store_true",
                   help="read event frames from the prepare cache")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="score a checkpoint on a traverse pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--database", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", help="split label used in reports")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("ablate", help="sweep ablation presets end to end")
    p.add_argument("--database", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--presets", nargs="*", help="subset of presets (default: all)")
    p.add_argument("--iterations", type=int, help="cap on training batches per preset")
    _add_config_flags(p, with_ablation=False)
    p.set_defaults(func=cmd_ablate)

    p = commands.add_parser("plot", help="re-render figures from a report bundle")
    p.add_argument("--report", required=True, help="report bundle directory")
    p.set_defaults(func=cmd_plot)

    p = commands.add_parser("synth", help="generate the procedural synthetic world")
    p.add_argument("--out", required=True)
    p.add_argument("--places", type=int, default=32)
    p.add_argument("--size", type=int, default=64, help="image/sensor size in pixels")
    p.add_argument("--window-us", type=int, default=25_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-corrupted", action="store_true",
                   help="skip the glare / no-events query variants")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
