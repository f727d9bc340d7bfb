"""Experiment pipelines, revival detection, sweeps and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
import traceback
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .constants import HBAR
from .errors import NoRevivalError
from .estimators import gpe_chi_trace, lambda_from_chi, lambda_from_phase_diffusion, predict_squeezing
from .meanfield import (PulseSequence, PulseSpec, ground_state, initial_state, run_sequence,
                        snapshot_grid)
from .observables import SqueezingReport, overlap_Q, reports_summary, reports_to_csv
from .snapshot import write_snapshot
from .twomode import optimal_squeezing, two_mode_variance
from .wigner import (MomentAccumulator, WignerEnsembleConfig, corrected_moments, moments_to_csv,
                     run_ensemble)


# -- revival detection --------------------------------------------------------

def detect_T_pi(times, Q, min_depth=1e-9):
    """Time of the first local maximum of Q after its first local minimum.

    Plateaus resolve to their earliest sample.  Changes smaller than
    ``min_depth`` are treated as flat, so a numerically constant Q raises
    NoRevivalError.
    """
    t = np.asarray(times, float)
    q = np.asarray(Q, float)
    if t.size < 3:
        raise NoRevivalError("overlap trace too short")
    i = 1
    # descend to the first minimum
    while i < q.size and q[i] <= q[i - 1] + min_depth:
        i += 1
    i_min = int(np.argmin(q[:i]))
    if q[0] - q[i_min] <= min_depth or i >= q.size:
        raise NoRevivalError("overlap never dips and recovers within the search window")
    # climb to the first maximum
    j = i_min + 1
    while j < q.size and q[j] >= q[j - 1] - min_depth:
        j += 1
    if j >= q.size:
        raise NoRevivalError("overlap keeps rising through the end of the search window")
    seg = q[i_min:j]
    k = i_min + int(np.flatnonzero(seg >= seg.max() - min_depth)[0])
    if q[k] - q[i_min] <= min_depth:
        raise NoRevivalError("no revival found")
    return float(t[k])


def overlap_trace(params, grid, psi_g, duration, dt, interval, sequence=None):
    """Mean-field (t, Q, N_a, N_b) sampled every ``interval`` through ``sequence``.

    Without a sequence a single pi/2 pulse at t = 0 is used.
    """
    seq = sequence or PulseSequence((PulseSpec(np.pi / 2, 0.0, 0.0),), duration)
    times = snapshot_grid(seq.duration, interval)

    def obs(t, f):
        na, nb = f.populations()
        return (t, overlap_Q(f.cross_integral(), na, nb), na, nb)

    final, rows = run_sequence(initial_state(grid, psi_g, params.n_atoms), params, seq, dt,
                               snapshot_times=times, observer=obs)
    return np.array(rows), final


def _rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, str) else repr(float(x)) for x in r])
    return buf.getvalue()


# -- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    mode: str
    run_dir: str
    code_version: str = __version__
    versions: dict = field(default_factory=lambda: {
        "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__})
    timings_s: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    status: str = "running"
    error: dict | None = None
    summary: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


class RunContext:
    """Output directory, file inventory and stage timers for one run."""

    def __init__(self, run_dir: Path, manifest: RunManifest, workers=1):
        self.dir = Path(run_dir)
        self.manifest = manifest
        self.workers = workers
        self.dir.mkdir(parents=True, exist_ok=True)

    def _record(self, path):
        rel = str(path.relative_to(self.dir))
        data = path.read_bytes()
        self.manifest.files = [f for f in self.manifest.files if f["path"] != rel]
        self.manifest.files.append({"path": rel, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def write_text(self, name, text):
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        self._record(p)
        return p

    def write_json(self, name, obj):
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def write_accumulator(self, name, acc: MomentAccumulator):
        p = self.dir / name
        acc.save(p)
        self._record(p)
        return p

    def write_snapshot(self, stem, psi, grid, t, label):
        for p in write_snapshot(self.dir / stem, psi, grid, t, label):
            self._record(p)

    def sub(self, name):
        return RunContext(self.dir / name, self.manifest, self.workers)

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.manifest.timings_s[name] = self.manifest.timings_s.get(name, 0.0) + time.perf_counter() - t0


# -- pipeline pieces ----------------------------------------------------------

def prepare(cfg: ExperimentConfig, ctx: RunContext):
    params = cfg.physics.build()
    grid = cfg.grid.build()
    with ctx.stage("ground_state"):
        gs = ground_state(params, grid, tol=cfg.integrator.ground_state_tol)
    return params, grid, gs


def resolve_t_pi(cfg, params, grid, gs, ctx: RunContext):
    """Configured T_pi, or the first overlap revival of a noise-free GPE run."""
    if cfg.sequence.kind == "explicit":
        return None, {}
    if cfg.sequence.t_pi_s is not None:
        return float(cfg.sequence.t_pi_s), {}
    lo, hi = cfg.sequence.t_pi_search_s
    with ctx.stage("t_pi_detection"):
        rows, _ = overlap_trace(params, grid, gs.psi, hi, cfg.integrator.dt_s, cfg.integrator.t_pi_resolution_s)
    ctx.write_text("t_pi_search.csv", _rows_csv(("t_s", "Q", "N_a", "N_b"), rows))
    sel = rows[:, 0] >= lo
    t_pi = detect_T_pi(rows[sel, 0], rows[sel, 1])
    k = int(np.argmin(abs(rows[:, 0] - t_pi)))
    return t_pi, {"Q_at_T_pi": float(rows[k, 1])}


def run_groundstate(cfg, ctx):
    params, grid, gs = prepare(cfg, ctx)
    ctx.write_snapshot("ground_state", gs.psi, grid, 0.0, "a")
    hbar_w = HBAR * params.omega_mean
    summary = {
        "energy_per_atom_J": gs.energy,
        "chemical_potential_J": gs.chemical_potential,
        "chemical_potential_hbar_omega": gs.chemical_potential / hbar_w,
        "iterations": gs.iterations,
    }
    ctx.write_json("summary.json", summary)
    return summary


def run_gpe(cfg, ctx):
    params, grid, gs = prepare(cfg, ctx)
    t_pi, extra = resolve_t_pi(cfg, params, grid, gs, ctx)
    seq = cfg.build_sequence(t_pi)
    with ctx.stage("gpe"):
        rows, final = overlap_trace(params, grid, gs.psi, seq.duration, cfg.integrator.dt_s,
                                    cfg.integrator.snapshot_interval_s, sequence=seq)
    ctx.write_text("overlap.csv", _rows_csv(("t_s", "Q", "N_a", "N_b"), rows))
    if cfg.write_snapshots:
        for c, label in enumerate("ab"):
            ctx.write_snapshot(f"final_{label}", final.psi[c], grid, final.time, label)
    summary = {"T_pi_s": t_pi, "duration_s": seq.duration, "Q_final": float(rows[-1, 1]),
               "N_a_final": float(rows[-1, 2]), "N_b_final": float(rows[-1, 3]), **extra}
    ctx.write_json("summary.json", summary)
    return summary


def _lambda_estimates(cfg, params, grid, gs, seq, ctx, with_chi=True):
    it = cfg.integrator
    out = {}
    if with_chi:
        with ctx.stage("lambda_chi"):
            trace = gpe_chi_trace(params, grid, gs.psi, seq, it.dt_s, it.chi_interval_s)
            ci = lambda_from_chi(trace)
        ctx.write_text("chi_trace.csv", trace.to_csv())
        out.update(lambda_rchi=ci.lam, lambda1=ci.lambda1, lambda2=ci.lambda2,
                   lambda_asymmetry=ci.asymmetry, lambda_asymmetric=bool(ci.asymmetric))
    with ctx.stage("lambda_phase"):
        probe = lambda_from_phase_diffusion(params, grid, gs.psi, seq, it.dt_s, it.chi_interval_s)
    rows = [(t, p, m) for t, p, m in zip(probe.phase_trace_plus[0], probe.phase_trace_plus[1],
                                         probe.phase_trace_minus[1])]
    ctx.write_text("phase_trace.csv", _rows_csv(("t_s", "phi_plus_rad", "phi_minus_rad"), rows))
    N = params.n_atoms
    out.update(lambda_rphi=probe.lambda_estimate, delta_phi=probe.delta_phi,
               phi_plus=probe.phi_plus, phi_minus=probe.phi_minus,
               lambda_opt=0.6 * N ** (-2 / 3), ratio_to_opt=probe.lambda_estimate / (0.6 * N ** (-2 / 3)))
    if with_chi:
        out["ratio_chi_over_phi"] = out["lambda_rchi"] / probe.lambda_estimate
    return out


def run_lambda_est(cfg, ctx):
    params, grid, gs = prepare(cfg, ctx)
    t_pi, extra = resolve_t_pi(cfg, params, grid, gs, ctx)
    seq = cfg.build_sequence(t_pi)
    est = _lambda_estimates(cfg, params, grid, gs, seq, ctx)
    thetas = cfg.theta_grid()
    cols, header = [thetas], ["theta_rad"]
    for key in ("lambda_rchi", "lambda_rphi"):
        pred = predict_squeezing(est[key], params.n_atoms, thetas, cfg.sequence.final_phi_rad)
        est[f"v_min_twomode_{key}"] = pred.v_min
        est[f"theta_opt_twomode_{key}"] = pred.theta_opt
        est[f"regime_{key}"] = pred.regime
        cols.append(pred.v)
        header.append(f"v_{key}")
    ctx.write_text("predicted_v.csv", _rows_csv(header, np.column_stack(cols)))
    summary = {"T_pi_s": t_pi, **extra, **est}
    ctx.write_json("summary.json", summary)
    return summary


def run_tw(cfg, ctx):
    params, grid, gs = prepare(cfg, ctx)
    t_pi, extra = resolve_t_pi(cfg, params, grid, gs, ctx)
    seq = cfg.build_sequence(t_pi)
    schedule = snapshot_grid(seq.duration, cfg.integrator.snapshot_interval_s)
    e = cfg.ensemble
    ens = WignerEnsembleConfig(params, grid, gs.psi, seq, tuple(schedule), int(e.n_trajectories),
                               int(e.master_seed), cfg.integrator.dt_s, int(e.batch_size),
                               str(ctx.dir / "trajectories") if e.debug_snapshots else None)
    with ctx.stage("tw_ensemble"):
        acc = run_ensemble(ens, workers=ctx.workers)
    if e.debug_snapshots:
        for p in sorted((ctx.dir / "trajectories").glob("*")):
            ctx._record(p)
    ctx.write_accumulator("accumulator.npz", acc)
    with ctx.stage("moments"):
        per_time = [corrected_moments(acc, grid, k) for k in range(len(schedule))]
        phi = cfg.sequence.final_phi_rad
        sweep = [corrected_moments(acc, grid, -1, th, phi) for th in cfg.theta_grid()]
    ctx.write_text("moments.csv", moments_to_csv(per_time))
    reports = [SqueezingReport.build(m.theta, m.v, m.Q, params.n_atoms, m.v_se, m.Q_se) for m in sweep]
    ctx.write_text("squeezing.csv", reports_to_csv(reports))
    summary = {"T_pi_s": t_pi, "duration_s": seq.duration, **extra, **reports_summary(reports),
               "Q_final": per_time[-1].Q, "Q_final_se": per_time[-1].Q_se,
               "Q_final_uncorrected": per_time[-1].Q_uncorrected,
               "n_trajectories": acc.count, "n_modes": grid.size,
               "vacuum_floor_M_over_N": grid.size / params.n_atoms,
               "accumulator_sha256": acc.digest()}
    ctx.write_json("summary.json", summary)
    return summary


def run_twomode(cfg, ctx):
    N = cfg.physics.n_atoms
    thetas = cfg.theta_grid()
    lams = [float(x) for x in cfg.twomode.lambdas]
    cols = [thetas] + [two_mode_variance(N, lam, thetas) for lam in lams]
    header = ["theta_rad"] + [f"v_lambda_{lam:.6g}" for lam in lams]
    ctx.write_text("v_theta.csv", _rows_csv(header, np.column_stack(cols)))
    summary = {"n_atoms": N, "lambdas": lams,
               "v_min": [predict_squeezing(lam, N, thetas).v_min for lam in lams]}
    if cfg.twomode.optimize and N >= 100:
        with ctx.stage("optimize"):
            summary["optimum"] = optimal_squeezing(N).to_dict()
    ctx.write_json("summary.json", summary)
    return summary


# -- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ("parameter", "value", "status", "error", "T_pi_s", "Q_at_T_pi", "Q_final",
                 "lambda_rphi", "lambda_rchi", "v_min", "theta_opt", "xi_min", "v_min_twomode")


def sweep_row(parameter, value, summary, error=None):
    """One aggregated sweep row from a sub-run summary."""
    row = {k: None for k in SWEEP_COLUMNS}
    row.update(parameter=parameter, value=float(value), status="ok" if error is None else "failed",
               error=error)
    if summary:
        for k in ("T_pi_s", "Q_at_T_pi", "Q_final", "lambda_rphi", "lambda_rchi", "v_min", "theta_opt", "xi_min"):
            if k in summary:
                row[k] = summary[k]
        lam = summary.get("lambda_rphi")
        n = summary.get("n_atoms")
        if lam is not None and n is not None:
            row["v_min_twomode"] = predict_squeezing(lam, n, [0.0]).v_min
    return row


def apply_sweep_value(cfg: ExperimentConfig, parameter, value):
    c = cfg.copy()
    c.mode = cfg.sweep.mode
    if parameter == "omega_r":
        c.physics.omega_rad_per_s = [float(value)] * 3
    elif parameter == "n_bounces":
        c.sequence.n_bounces = int(value)
    elif parameter == "n_atoms":
        c.physics.n_atoms = float(value)
    else:
        raise ValueError(f"parameter {parameter!r} is not swept through sub-runs")
    return c.validate()


def run_single_value(cfg: ExperimentConfig, ctx: RunContext):
    """Run a sweep sub-configuration and return its summary (TW runs also get lambda_rphi)."""
    summary = dict(PIPELINES[cfg.mode](cfg, ctx))
    summary["n_atoms"] = cfg.physics.n_atoms
    if cfg.mode == "tw" and "lambda_rphi" not in summary:
        params, grid, gs = prepare(cfg, ctx)
        seq = cfg.build_sequence(summary.get("T_pi_s"))
        summary.update(_lambda_estimates(cfg, params, grid, gs, seq, ctx, with_chi=False))
    return summary


def run_sweep(cfg, ctx):
    s = cfg.sweep
    rows = []
    if s.parameter == "theta" and s.values:
        # the ensemble does not depend on the readout angle: run it once
        base = cfg.copy()
        base.mode = s.mode
        base.readout.n_theta = 1
        try:
            sub = base.validate()
            if sub.mode != "tw":
                raise ValueError("theta sweeps need mode 'tw'")
            params, grid, gs = prepare(sub, ctx)
            t_pi, _ = resolve_t_pi(sub, params, grid, gs, ctx)
            seq = sub.build_sequence(t_pi)
            e = sub.ensemble
            ens = WignerEnsembleConfig(params, grid, gs.psi, seq, (seq.duration,), int(e.n_trajectories),
                                       int(e.master_seed), sub.integrator.dt_s, int(e.batch_size))
            with ctx.stage("tw_ensemble"):
                acc = run_ensemble(ens, workers=ctx.workers)
            for th in s.values:
                m = corrected_moments(acc, grid, -1, float(th), sub.sequence.final_phi_rad)
                rep = SqueezingReport.build(m.theta, m.v, m.Q, params.n_atoms, m.v_se, m.Q_se)
                rows.append(sweep_row("theta", th, {"T_pi_s": t_pi, "Q_final": m.Q, "v_min": m.v,
                                                    "theta_opt": m.theta, "xi_min": rep.xi_s}))
        except Exception as err:  # noqa: BLE001 - recorded per value
            rows = [sweep_row("theta", th, None, f"{type(err).__name__}: {err}") for th in s.values]
    else:
        for k, value in enumerate(s.values):
            try:
                sub = apply_sweep_value(cfg, s.parameter, value)
                summary = run_single_value(sub, ctx.sub(f"value_{k:03d}"))
                rows.append(sweep_row(s.parameter, value, summary))
            except Exception as err:  # noqa: BLE001 - recorded per value, sweep continues
                rows.append(sweep_row(s.parameter, value, None, f"{type(err).__name__}: {err}"))
    ctx.write_text("sweep.csv", _sweep_csv(rows))
    summary = {"parameter": s.parameter, "n_values": len(rows),
               "n_failed": sum(r["status"] != "ok" for r in rows), "rows": rows}
    ctx.write_json("summary.json", summary)
    return summary


def _sweep_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(["" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])
                    for k in SWEEP_COLUMNS])
    return buf.getvalue()


PIPELINES = {
    "groundstate": run_groundstate,
    "gpe": run_gpe,
    "tw": run_tw,
    "twomode": run_twomode,
    "lambda-est": run_lambda_est,
    "sweep": run_sweep,
}


def run_experiment(cfg: ExperimentConfig, workers=1, out_dir=None) -> RunManifest:
    """Validate, execute the configured pipeline and write outputs plus manifest.json.

    The run directory is ``<out_dir>/<mode>-<config hash[:12]>``.  On failure
    the manifest records the error, partial outputs stay in place and the
    exception is re-raised.
    """
    cfg.validate()
    h = cfg.config_hash()
    run_dir = Path(out_dir or cfg.out_dir) / f"{cfg.mode}-{h[:12]}"
    manifest = RunManifest(config_hash=h, mode=cfg.mode, run_dir=str(run_dir))
    ctx = RunContext(run_dir, manifest, workers)
    ctx.write_text("config.json", cfg.to_json() + "\n")
    t0 = time.perf_counter()
    try:
        manifest.summary = PIPELINES[cfg.mode](cfg, ctx)
        manifest.status = "ok"
    except Exception as err:
        manifest.status = "failed"
        manifest.error = {"type": type(err).__name__, "message": str(err),
                          "key": getattr(err, "key", None), "trajectory": getattr(err, "trajectory", None),
                          "step": getattr(err, "step", None), "traceback": traceback.format_exc()}
        raise
    finally:
        manifest.timings_s["total"] = time.perf_counter() - t0
        (run_dir / "manifest.json").write_text(manifest.to_json() + "\n")
        with open(run_dir / "runs.log", "a") as log:
            log.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {manifest.status} "
                      f"{manifest.timings_s['total']:.2f}s workers={workers}\n")
    return manifest
