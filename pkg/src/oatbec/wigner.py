"""Truncated-Wigner ensembles.

Each trajectory starts from the condensate mode plus half a quantum of complex
Gaussian noise per grid mode in both components, then evolves under the
coupled equations with the vacuum-density subtraction (no further noise).

Per trajectory and scheduled time we keep four real numbers,
[W_a, W_b, Re C, Im C], where W_i = sum_j |psi_i,j|^2 dv_j and C = sum_j
psi_a^* psi_b dv_j.  They suffice for every observable we need, including
any final rotation (theta, phi): the rotated difference is
cos(theta) (W_a - W_b) + 2 sin(theta) Im(e^{i phi} C).

Symmetric-ordering corrections, with M grid points per component:
<N_i> = mean(W_i) - M/2, and any quadratic form H = psi^dag K psi obeys
<H^2> = mean(H_W^2) - tr(K^2)/4, giving M/2 for (N_a - N_b)^2 (any rotation)
and M/8 for J_x^2.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationError
from .grid import Grid, integrate
from .meanfield import FieldPair, PhysicsParams, PulseSequence, make_stepper, run_sequence
from .observables import overlap_Q
from .snapshot import write_snapshot

FEATURES = ("W_a", "W_b", "re_C", "im_C")


def trajectory_rng(master_seed, index):
    """Counter-based stream for one trajectory: a pure function of (seed, index)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(grid: Grid, rng):
    """Two complex Gaussian fields with <|eta|^2> = 1/2 per point."""
    re = rng.standard_normal((2,) + grid.shape)
    im = rng.standard_normal((2,) + grid.shape)
    return 0.5 * (re + 1j * im)


def sample_initial(grid: Grid, psi_g, n_atoms, rng) -> FieldPair:
    """psi_a = sqrt(N) psi_g + eta_a / sqrt(dv), psi_b = eta_b / sqrt(dv)."""
    eta = sample_noise(grid, rng) / np.sqrt(grid.weights)
    eta[0] += np.sqrt(n_atoms) * np.asarray(psi_g, complex)
    return FieldPair(eta, grid, 0.0)


def sample_batch(grid: Grid, psi_g, n_atoms, master_seed, indices):
    """Stacked initial fields, shape (2, len(indices), *grid.shape)."""
    fields = [sample_initial(grid, psi_g, n_atoms, trajectory_rng(master_seed, i)).psi for i in indices]
    return np.stack(fields, axis=1)


def evolve_tw(fields: FieldPair, params: PhysicsParams, duration, dt, stepper=None) -> FieldPair:
    """Free evolution with the Wigner-corrected nonlinearity."""
    stepper = stepper or make_stepper(params, fields.grid, dt, wigner=True)
    return FieldPair(stepper.advance_time(fields.psi, duration), fields.grid, fields.time + duration)


def field_features(fields: FieldPair):
    """[W_a, W_b, Re C, Im C] for every batch entry, shape (*batch, 4)."""
    w = integrate(fields.grid, fields.psi.real ** 2 + fields.psi.imag ** 2)
    c = fields.cross_integral()
    return np.stack([w[0], w[1], np.real(c), np.imag(c)], axis=-1)


# -- accumulation -------------------------------------------------------------

@dataclass
class MomentAccumulator:
    """Per-trajectory feature rows at each scheduled time.

    ``rows`` has shape (n_times, n_traj, 4) ordered by trajectory index.
    Sums are evaluated with ``math.fsum`` (exactly rounded), so they do not
    depend on how trajectories were batched or merged.
    """

    times: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    rows: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.indices = np.asarray(self.indices, int)
        if self.rows is None:
            self.rows = np.zeros((self.times.size, 0, len(FEATURES)))

    @property
    def count(self):
        return int(self.indices.size)

    def add(self, index, rows):
        """Add one trajectory's (n_times, 4) rows."""
        other = MomentAccumulator(self.times, np.array([index]), np.asarray(rows, float)[:, None, :])
        merged = self.merge(other)
        self.indices, self.rows = merged.indices, merged.rows

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.times.shape != other.times.shape or not np.array_equal(self.times, other.times):
            raise ValueError("cannot merge accumulators with different schedules")
        idx = np.concatenate([self.indices, other.indices])
        if np.unique(idx).size != idx.size:
            raise ValueError("accumulators share trajectory indices")
        order = np.argsort(idx, kind="stable")
        rows = np.concatenate([self.rows, other.rows], axis=1)[:, order, :]
        return MomentAccumulator(self.times.copy(), idx[order], rows)

    def sums(self):
        """Exactly rounded first-moment sums, shape (n_times, 4)."""
        out = np.empty(self.rows.shape[::2])
        for t in range(self.rows.shape[0]):
            for k in range(self.rows.shape[2]):
                out[t, k] = math.fsum(self.rows[t, :, k].tolist())
        return out

    def second_sums(self):
        """Exactly rounded sums of feature outer products, shape (n_times, 4, 4)."""
        nt, _, nf = self.rows.shape
        out = np.empty((nt, nf, nf))
        for t in range(nt):
            r = self.rows[t]
            for k in range(nf):
                for l in range(k, nf):
                    out[t, k, l] = out[t, l, k] = math.fsum((r[:, k] * r[:, l]).tolist())
        return out

    def digest(self):
        h = hashlib.sha256()
        for arr in (self.times, self.indices, self.rows):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def save(self, path):
        np.savez(path, times=self.times, indices=self.indices, rows=self.rows)

    @classmethod
    def load(cls, path):
        d = np.load(path)
        return cls(d["times"], d["indices"], d["rows"])


# -- ensemble execution -------------------------------------------------------

@dataclass
class WignerEnsembleConfig:
    params: PhysicsParams
    grid: Grid
    psi_g: np.ndarray
    sequence: PulseSequence
    schedule: tuple
    n_trajectories: int = 1000
    master_seed: int = 0
    dt: float = 1e-6
    batch_size: int = 25
    debug_snapshot_dir: str | None = None

    def __post_init__(self):
        if int(self.n_trajectories) < 2:
            raise ConfigError("a Wigner ensemble needs at least 2 trajectories", key="ensemble.n_trajectories")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="ensemble.batch_size")
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ConfigError("master_seed must be a 64-bit unsigned integer", key="ensemble.master_seed")
        self.schedule = tuple(sorted(float(t) for t in self.schedule))
        if not self.schedule:
            raise ConfigError("observable schedule is empty", key="ensemble.schedule")

    def chunks(self):
        n, b = int(self.n_trajectories), int(self.batch_size)
        return [tuple(range(s, min(s + b, n))) for s in range(0, n, b)]

    @property
    def n_modes(self):
        return self.grid.size


def _run_indices(cfg: WignerEnsembleConfig, indices, fft_workers=None):
    psi0 = sample_batch(cfg.grid, cfg.psi_g, cfg.params.n_atoms, cfg.master_seed, indices)
    stepper = make_stepper(cfg.params, cfg.grid, cfg.dt, wigner=True, workers=fft_workers)
    final, feats = run_sequence(FieldPair(psi0, cfg.grid, 0.0), cfg.params, cfg.sequence, cfg.dt,
                                snapshot_times=cfg.schedule, observer=lambda t, f: field_features(f),
                                stepper=stepper)
    if cfg.debug_snapshot_dir:
        from pathlib import Path
        for j, i in enumerate(indices):
            for c, label in enumerate("ab"):
                write_snapshot(Path(cfg.debug_snapshot_dir) / f"traj{i:06d}_{label}", final.psi[c, j],
                               cfg.grid, final.time, label, extra={"trajectory": int(i)})
    rows = np.stack(feats, axis=0)        # (n_times, batch, 4)
    return MomentAccumulator(np.array(cfg.schedule), np.array(indices), rows)


def run_chunk(cfg: WignerEnsembleConfig, indices, fft_workers=None):
    """Integrate one batch; on failure, locate the offending trajectory and step."""
    try:
        return _run_indices(cfg, indices, fft_workers)
    except IntegrationError as err:
        for i in indices:
            try:
                _run_indices(cfg, (i,), fft_workers)
            except IntegrationError as single:
                raise IntegrationError(f"trajectory {i} failed at step {single.step}",
                                       step=single.step, trajectory=i) from single
        raise IntegrationError(f"batch {indices[0]}..{indices[-1]} failed at step {err.step}",
                               step=err.step, trajectory=indices[0]) from err


def run_ensemble(cfg: WignerEnsembleConfig, workers=1) -> MomentAccumulator:
    """Run all trajectories in fixed chunks and merge in chunk order.

    Chunk boundaries depend only on ``batch_size``, so the result is bitwise
    independent of ``workers``.  Any failure aborts the ensemble.
    """
    chunks = cfg.chunks()
    acc = MomentAccumulator(np.array(cfg.schedule))
    if workers is None or workers <= 1:
        for ch in chunks:
            acc = acc.merge(run_chunk(cfg, ch))
        return acc
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_chunk, cfg, ch, 1) for ch in chunks]
        try:
            for fut in futures:
                acc = acc.merge(fut.result())
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return acc


# -- corrected moments --------------------------------------------------------

@dataclass(frozen=True)
class CorrectedMoments:
    time: float
    theta: float
    phi: float
    n_trajectories: int
    N_a: float
    N_b: float
    mean_diff: float
    v: float
    Q: float
    Q_uncorrected: float
    Jx: float
    Jy: float
    VJx: float
    N_a_se: float
    N_b_se: float
    v_se: float
    Q_se: float
    Jx_se: float
    VJx_se: float

    @property
    def n_total(self):
        return self.N_a + self.N_b

    def as_row(self):
        return {k: getattr(self, k) for k in CSV_COLUMNS}


CSV_COLUMNS = ("time", "theta", "N_a", "N_a_se", "N_b", "N_b_se", "v", "v_se", "Q", "Q_se",
               "Jx", "Jx_se", "VJx", "VJx_se", "Q_uncorrected")


def rotated_difference(rows, theta, phi):
    """Per-trajectory W_a - W_b after a (theta, phi) pulse."""
    rows = np.asarray(rows)
    x = rows[..., 0] - rows[..., 1]
    c = rows[..., 2] + 1j * rows[..., 3]
    return np.cos(theta) * x + 2 * np.sin(theta) * np.imag(np.exp(1j * phi) * c)


def _estimates(m, n, M):
    """Physical moments from (possibly leave-one-out) feature means.

    ``m`` columns: W_a, W_b, Re C, Im C, Xc, Xc^2, Jc, Jc^2 where Xc and Jc are
    the rotated difference and Re C centred on their full-sample means;
    ``n`` is the sample size behind the means.
    """
    bessel = n / (n - 1)
    Na = m[..., 0] - M / 2
    Nb = m[..., 1] - M / 2
    varX = bessel * (m[..., 5] - m[..., 4] ** 2) - M / 2
    varJx = bessel * (m[..., 7] - m[..., 6] ** 2) - M / 8
    with np.errstate(divide="ignore", invalid="ignore"):
        v = varX / (Na + Nb)
        Q = np.hypot(m[..., 2], m[..., 3]) / np.sqrt(Na * Nb)
    return Na, Nb, v, Q, varJx, m[..., 2]


def corrected_moments(acc: MomentAccumulator, grid: Grid, time_index=-1, theta=0.0, phi=0.0):
    """Normal-ordered moments with jackknife standard errors at one scheduled time."""
    n = acc.count
    if n < 2:
        raise ConfigError("corrected moments need at least 2 trajectories", key="ensemble.n_trajectories")
    M = grid.size
    r = acc.rows[time_index]
    x = rotated_difference(r, theta, phi)
    xc = x - math.fsum(x.tolist()) / n
    jc = r[:, 2] - math.fsum(r[:, 2].tolist()) / n
    F = np.column_stack([r[:, 0], r[:, 1], r[:, 2], r[:, 3], xc, xc * xc, jc, jc * jc])
    tot = np.array([math.fsum(F[:, k].tolist()) for k in range(F.shape[1])])
    Na, Nb, v, Q, VJx, Jx = _estimates(tot / n, n, M)
    if n >= 3:
        jk = _estimates((tot[None, :] - F) / (n - 1), n - 1, M)
        se = [float(np.sqrt((n - 1) / n * np.sum((q - q.mean()) ** 2))) for q in jk]
    else:
        se = [float("nan")] * 6
    Wa, Wb, Jy = tot[0] / n, tot[1] / n, tot[3] / n
    q_raw = float(np.hypot(Jx, Jy) / np.sqrt(Wa * Wb)) if Wa > 0 and Wb > 0 else float("nan")
    return CorrectedMoments(
        time=float(acc.times[time_index]), theta=float(theta), phi=float(phi), n_trajectories=n,
        N_a=float(Na), N_b=float(Nb), mean_diff=float(tot[4] / n + math.fsum(x.tolist()) / n),
        v=float(v), Q=float(Q), Q_uncorrected=q_raw, Jx=float(Jx), Jy=float(Jy), VJx=float(VJx),
        N_a_se=se[0], N_b_se=se[1], v_se=se[2], Q_se=se[3], Jx_se=se[5], VJx_se=se[4],
    )


def overlap_from_accumulator(acc: MomentAccumulator, grid: Grid, time_index=-1):
    s = acc.sums()[time_index] / acc.count
    M = grid.size
    return overlap_Q(complex(s[2], s[3]), s[0] - M / 2, s[1] - M / 2)


def theta_sweep(acc: MomentAccumulator, grid: Grid, thetas, phi, time_index=-1):
    return [corrected_moments(acc, grid, time_index, th, phi) for th in thetas]


def moments_to_csv(moments):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in moments:
        w.writerow([repr(float(getattr(m, k))) for k in CSV_COLUMNS])
    return buf.getvalue()
