"""Experiment configuration: dataclasses, JSON round-trip, presets and overrides.

Keys carry their units (``omega_rad_per_s``, ``dt_s``, ``lengths_m``).  Trap
frequencies are literal angular frequencies in rad/s; a trap quoted as
"2 pi x 500 Hz" must be entered as 3141.59...  The presets spell out which
reading they use in their ``note`` field.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .constants import ATOMIC_MASS, BOHR_RADIUS, RB87_A11, RB87_A12, RB87_A22, RB87_MASS
from .errors import ConfigError
from .grid import MAX_POINTS, MIN_POINTS, Geometry, make_grid
from .meanfield import PhysicsParams, PulseSequence, PulseSpec, canonical_sequence

MODES = ("groundstate", "gpe", "tw", "twomode", "lambda-est", "sweep")
SWEEP_PARAMETERS = ("omega_r", "theta", "n_bounces", "n_atoms")
SWEEP_MODES = ("gpe", "tw", "lambda-est")
TWO_PI = 2 * np.pi


@dataclass
class PhysicsConfig:
    mass_amu: float = RB87_MASS / ATOMIC_MASS
    a11_bohr: float = RB87_A11
    a22_bohr: float = RB87_A22
    a12_bohr: float = RB87_A12
    omega_rad_per_s: list = field(default_factory=lambda: [TWO_PI * 200] * 3)
    n_atoms: float = 1.5e5
    detuning_rad_per_s: float = 0.0

    def build(self) -> PhysicsParams:
        return PhysicsParams(
            mass=self.mass_amu * ATOMIC_MASS,
            a11=self.a11_bohr * BOHR_RADIUS,
            a22=self.a22_bohr * BOHR_RADIUS,
            a12=self.a12_bohr * BOHR_RADIUS,
            omega=tuple(self.omega_rad_per_s),
            n_atoms=self.n_atoms,
            detuning=self.detuning_rad_per_s,
        )


@dataclass
class GridConfig:
    geometry: str = "spherical1d"
    points: list = field(default_factory=lambda: [256])
    lengths_m: list = field(default_factory=lambda: [20e-6])

    def build(self):
        return make_grid(self.geometry, self.points, self.lengths_m)


@dataclass
class IntegratorConfig:
    dt_s: float = 1e-6
    snapshot_interval_s: float = 1e-4
    t_pi_resolution_s: float = 1e-5
    chi_interval_s: float = 2e-5
    ground_state_tol: float = 1e-12


@dataclass
class SequenceConfig:
    kind: str = "canonical"           # canonical | explicit
    t_pi_s: float | None = None       # None: detect from a GPE overlap trace
    t_pi_search_s: list = field(default_factory=lambda: [0.0, 40e-3])
    n_bounces: int = 1
    final_phi_rad: float = np.pi / 2
    pulses: list = field(default_factory=list)   # explicit: [{theta_rad, phi_rad, time_s}]
    duration_s: float = 0.0


@dataclass
class EnsembleConfig:
    n_trajectories: int = 1000
    master_seed: int = 0
    batch_size: int = 25
    debug_snapshots: bool = False


@dataclass
class ReadoutConfig:
    theta_min_rad: float = 0.0
    theta_max_rad: float = np.pi
    n_theta: int = 100                # step pi/100 over [0, pi)


@dataclass
class TwoModeConfig:
    lambdas: list = field(default_factory=lambda: [1e-5, 3e-5, 1e-4, 2.8e-4])
    optimize: bool = True


@dataclass
class SweepConfig:
    parameter: str = "omega_r"
    values: list = field(default_factory=list)
    mode: str = "lambda-est"


@dataclass
class ExperimentConfig:
    mode: str = "gpe"
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    twomode: TwoModeConfig = field(default_factory=TwoModeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    out_dir: str = "runs"
    write_snapshots: bool = False
    note: str = ""

    # -- serialisation --------------------------------------------------------
    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "")

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def config_hash(self):
        """Hash of everything that affects results (output location and notes excluded)."""
        d = self.to_dict()
        d.pop("out_dir", None)
        d.pop("note", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def copy(self):
        return copy.deepcopy(self)

    # -- derived objects ------------------------------------------------------
    def theta_grid(self):
        r = self.readout
        return np.linspace(r.theta_min_rad, r.theta_max_rad, r.n_theta, endpoint=False)

    def build_sequence(self, t_pi=None, final=None) -> PulseSequence:
        s = self.sequence
        if s.kind == "explicit":
            pulses = [PulseSpec(p["theta_rad"], p.get("phi_rad", 0.0), p["time_s"]) for p in s.pulses]
            return PulseSequence(tuple(pulses), s.duration_s)
        t_pi = s.t_pi_s if t_pi is None else t_pi
        return canonical_sequence(t_pi, s.n_bounces, final=final)

    # -- validation -----------------------------------------------------------
    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}", key="mode")
        p = self.physics
        if not p.mass_amu > 0:
            raise ConfigError("mass must be positive", key="physics.mass_amu")
        if not p.n_atoms > 0:
            raise ConfigError("atom number must be positive", key="physics.n_atoms")
        if len(p.omega_rad_per_s) != 3:
            raise ConfigError("omega_rad_per_s needs three entries", key="physics.omega_rad_per_s")
        if any(not w > 0 for w in p.omega_rad_per_s):
            raise ConfigError("trap frequencies must be positive", key="physics.omega_rad_per_s")
        for k in ("a11_bohr", "a22_bohr", "a12_bohr"):
            if not np.isfinite(getattr(p, k)):
                raise ConfigError(f"{k} must be finite", key=f"physics.{k}")
        g = self.grid
        try:
            geom = Geometry(g.geometry)
        except ValueError:
            raise ConfigError(f"unknown geometry {g.geometry!r}", key="grid.geometry") from None
        want = 3 if geom is Geometry.CARTESIAN_3D else 1
        if len(g.points) != want or len(g.lengths_m) != want:
            raise ConfigError(f"{geom.value} needs {want} points/lengths entries", key="grid.points")
        if any(not (MIN_POINTS <= int(n) <= MAX_POINTS) for n in g.points):
            raise ConfigError(f"grid points must be in [{MIN_POINTS}, {MAX_POINTS}]", key="grid.points")
        if any(not L > 0 for L in g.lengths_m):
            raise ConfigError("grid lengths must be positive", key="grid.lengths_m")
        if geom is Geometry.SPHERICAL_RADIAL_1D and len(set(p.omega_rad_per_s)) != 1:
            raise ConfigError("the spherical grid needs an isotropic trap", key="physics.omega_rad_per_s")
        it = self.integrator
        for k in ("dt_s", "snapshot_interval_s", "t_pi_resolution_s", "chi_interval_s", "ground_state_tol"):
            if not getattr(it, k) > 0:
                raise ConfigError(f"{k} must be positive", key=f"integrator.{k}")
        s = self.sequence
        if s.kind not in ("canonical", "explicit"):
            raise ConfigError(f"unknown sequence kind {s.kind!r}", key="sequence.kind")
        if s.kind == "canonical":
            if s.t_pi_s is not None and not s.t_pi_s > 0:
                raise ConfigError("t_pi_s must be positive", key="sequence.t_pi_s")
            if int(s.n_bounces) < 1:
                raise ConfigError("n_bounces must be >= 1", key="sequence.n_bounces")
            lo, hi = s.t_pi_search_s
            if not (0 <= lo < hi):
                raise ConfigError("t_pi_search_s must be an increasing [lo, hi] window", key="sequence.t_pi_search_s")
        else:
            times = [pp.get("time_s") for pp in s.pulses]
            if any(t is None or t < 0 for t in times):
                raise ConfigError("explicit pulses need non-negative time_s", key="sequence.pulses")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError("pulse times must be strictly increasing", key="sequence.pulses")
            if times and times[-1] > s.duration_s:
                raise ConfigError("pulse scheduled after duration_s", key="sequence.duration_s")
            for pp in s.pulses:
                if not (0 <= pp.get("theta_rad", -1) < TWO_PI):
                    raise ConfigError("pulse theta_rad must lie in [0, 2pi)", key="sequence.pulses")
        e = self.ensemble
        if int(e.n_trajectories) < 2:
            raise ConfigError("n_trajectories must be >= 2", key="ensemble.n_trajectories")
        if int(e.batch_size) < 1:
            raise ConfigError("batch_size must be >= 1", key="ensemble.batch_size")
        if not (0 <= int(e.master_seed) < 2 ** 64):
            raise ConfigError("master_seed must be a 64-bit unsigned integer", key="ensemble.master_seed")
        r = self.readout
        if int(r.n_theta) < 1 or not r.theta_max_rad > r.theta_min_rad:
            raise ConfigError("readout theta range is empty", key="readout")
        if self.mode == "twomode" and any(not np.isfinite(x) for x in self.twomode.lambdas):
            raise ConfigError("lambdas must be finite", key="twomode.lambdas")
        if self.mode == "sweep":
            if self.sweep.parameter not in SWEEP_PARAMETERS:
                raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}", key="sweep.parameter")
            if self.sweep.mode not in SWEEP_MODES:
                raise ConfigError(f"sweep mode must be one of {SWEEP_MODES}", key="sweep.mode")
        return self


def _from_dict(cls, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object for {prefix or 'config'}", key=prefix or None)
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        key = f"{prefix}{sorted(unknown)[0]}"
        raise ConfigError(f"unknown config key {key!r}", key=key)
    kw = {}
    defaults = cls()
    for name, val in d.items():
        sub = getattr(defaults, name)
        if is_dataclass(sub):
            kw[name] = _from_dict(type(sub), val, f"{prefix}{name}.")
        else:
            kw[name] = val
    return cls(**kw)


# -- overrides ----------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ExperimentConfig, overrides):
    """Apply ``key=value`` strings with dotted keys; values are parsed as JSON when possible."""
    d = cfg.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", key=item)
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"unknown config key {key!r}", key=key)
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        node[parts[-1]] = _parse_value(raw)
    return ExperimentConfig.from_dict(d)


# -- presets ------------------------------------------------------------------

def _iso(w):
    return [w, w, w]


def preset(name) -> ExperimentConfig:
    """Named configurations; see ``PRESETS`` for the list."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}", key="preset")
    return PRESETS[name]()


def _ci_small():
    return ExperimentConfig(
        mode="tw",
        physics=PhysicsConfig(omega_rad_per_s=_iso(TWO_PI * 500), n_atoms=1e4),
        grid=GridConfig("spherical1d", [128], [8e-6]),
        sequence=SequenceConfig(t_pi_search_s=[0.0, 10e-3]),
        ensemble=EnsembleConfig(n_trajectories=100, master_seed=1),
        note="desk-scale: spherical 1D, omega = 2pi x 500 rad/s, N_t = 1e4, 100 trajectories",
    )


def _paper_3d():
    return ExperimentConfig(
        mode="tw",
        physics=PhysicsConfig(omega_rad_per_s=_iso(TWO_PI * 200), n_atoms=1.5e5),
        grid=GridConfig("cartesian3d", [32, 32, 32], [24e-6] * 3),
        sequence=SequenceConfig(t_pi_search_s=[0.0, 25e-3]),
        ensemble=EnsembleConfig(n_trajectories=1000, master_seed=2013),
        note="32^3 box, N_t = 1.5e5, omega = 2pi x 200 rad/s (the literal 200 rad/s reading shows no "
             "revival near 13 ms; use --set physics.omega_rad_per_s=[200,200,200] to try it)",
    )


def _large_1d():
    c = _paper_3d()
    c.grid = GridConfig("spherical1d", [256], [20e-6])
    c.note = "spherical 1D counterpart of paper-3d"
    return c


def _omega500_1d():
    return ExperimentConfig(
        mode="tw",
        physics=PhysicsConfig(omega_rad_per_s=_iso(TWO_PI * 500), n_atoms=1.5e5),
        grid=GridConfig("spherical1d", [256], [12e-6]),
        sequence=SequenceConfig(t_pi_search_s=[0.0, 10e-3]),
        ensemble=EnsembleConfig(n_trajectories=1000, master_seed=500),
        note="spherical 1D, omega = 2pi x 500 rad/s, N_t = 1.5e5",
    )


def _multibounce_1d():
    c = _omega500_1d()
    c.sequence = SequenceConfig(t_pi_s=5.3e-3, n_bounces=4)
    c.note = "spherical 1D, omega = 2pi x 500 rad/s, T_pi fixed at 5.3 ms, four bounces"
    return c


def _omega_sweep_1d():
    c = _omega500_1d()
    c.mode = "sweep"
    c.sweep = SweepConfig("omega_r", [TWO_PI * f for f in (100, 200, 300, 400, 500)], "tw")
    c.grid = GridConfig("spherical1d", [256], [20e-6])
    c.sequence = SequenceConfig(t_pi_search_s=[0.0, 40e-3])
    c.note = "omega_r scan 2pi x {100..500} rad/s, spherical 1D TW"
    return c


def _cylindrical_3d():
    return ExperimentConfig(
        mode="tw",
        physics=PhysicsConfig(omega_rad_per_s=[TWO_PI * 500, TWO_PI * 500, TWO_PI * 100], n_atoms=1.5e5),
        grid=GridConfig("cartesian3d", [32, 32, 64], [16e-6, 16e-6, 64e-6]),
        sequence=SequenceConfig(t_pi_search_s=[0.0, 15e-3]),
        ensemble=EnsembleConfig(n_trajectories=1000, master_seed=7),
        note="cigar trap 2pi x (500, 500, 100) rad/s",
    )


PRESETS = {
    "ci-small": _ci_small,
    "paper-3d": _paper_3d,
    "large-1d": _large_1d,
    "omega500-1d": _omega500_1d,
    "multibounce-1d": _multibounce_1d,
    "omega-sweep-1d": _omega_sweep_1d,
    "cylindrical-3d": _cylindrical_3d,
}
