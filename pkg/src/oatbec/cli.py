"""Command-line entry point: ``oatbec <mode> [--config F | --preset P] [--set k=v ...]``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import MODES, PRESETS, ExperimentConfig, apply_overrides, preset
from .errors import ConfigError


def build_parser():
    ap = argparse.ArgumentParser(prog="oatbec", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} pipeline")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON configuration file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="named configuration")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key; VALUE is parsed as JSON when possible")
        p.add_argument("--seed", type=int, help="ensemble master seed")
        p.add_argument("--out-dir", help="parent directory for run outputs")
        p.add_argument("--workers", type=int, default=1, help="worker processes for trajectory batches")
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    sub.add_parser("presets", help="list the named configurations")
    return ap


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        try:
            cfg = ExperimentConfig.load(args.config)
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config!r} not found", key="config") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}", key="config") from None
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    cfg = apply_overrides(cfg, args.overrides)
    cfg.mode = args.command
    if args.seed is not None:
        cfg.ensemble.master_seed = args.seed
    if args.out_dir:
        cfg.out_dir = args.out_dir
    return cfg.validate()


def _error_payload(err):
    return {"error": type(err).__name__, "message": str(err), "key": getattr(err, "key", None),
            "trajectory": getattr(err, "trajectory", None), "step": getattr(err, "step", None)}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in sorted(PRESETS):
            print(f"{name}: {PRESETS[name]().note}")
        return 0
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            print(cfg.to_json())
            return 0
        from .pipeline import run_experiment
        manifest = run_experiment(cfg, workers=args.workers)
    except ConfigError as err:
        print(json.dumps(_error_payload(err)), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - machine-readable failure report
        print(json.dumps(_error_payload(err)), file=sys.stderr)
        return 1
    print(json.dumps({"run_dir": manifest.run_dir, "status": manifest.status,
                      "summary": manifest.summary}, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
