"""Shared argument handling for the reproduction scripts."""
import argparse
import json

from oatbec.config import apply_overrides, preset
from oatbec.pipeline import run_experiment


def parser(doc, default_preset):
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--preset", default=default_preset)
    ap.add_argument("--trajectories", type=int, help="override ensemble.n_trajectories")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def config_from(args):
    cfg = apply_overrides(preset(args.preset), args.overrides)
    if args.trajectories:
        cfg.ensemble.n_trajectories = args.trajectories
    if args.seed is not None:
        cfg.ensemble.master_seed = args.seed
    return cfg


def run(cfg, args):
    m = run_experiment(cfg.validate(), workers=args.workers, out_dir=args.out_dir)
    print(json.dumps({"run_dir": m.run_dir, "timings_s": m.timings_s}, indent=2))
    return m
