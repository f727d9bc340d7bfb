"""Coupled two-component Gross-Pitaevskii evolution, pulses and ground states.

All equations are integrated in the frame rotating with the hyperfine
splitting (psi_b -> psi_b e^{i delta t}), so the detuning never enters the
dynamics; :func:`to_lab_frame` undoes the transformation for output.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov
from scipy.sparse.linalg import LinearOperator

from .constants import BOHR_RADIUS, HBAR, RB87_A11, RB87_A12, RB87_A22, RB87_MASS
from .errors import ConfigError, ConvergenceError
from .grid import (Geometry, Grid, SplitStepper, apply_kinetic, from_spectral, integrate,
                   kinetic_phase_factors, neg_laplacian, norm, to_spectral)

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class PhysicsParams:
    """Species and trap.  Lengths in metres, frequencies in rad/s."""

    mass: float = RB87_MASS
    a11: float = RB87_A11 * BOHR_RADIUS
    a22: float = RB87_A22 * BOHR_RADIUS
    a12: float = RB87_A12 * BOHR_RADIUS
    omega: tuple = (200.0, 200.0, 200.0)
    n_atoms: float = 1.5e5
    detuning: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in np.broadcast_to(self.omega, 3)))
        self.validate()

    @classmethod
    def from_bohr(cls, a11, a22, a12, **kw):
        return cls(a11=a11 * BOHR_RADIUS, a22=a22 * BOHR_RADIUS, a12=a12 * BOHR_RADIUS, **kw)

    def validate(self):
        if not self.mass > 0:
            raise ConfigError("mass must be positive", key="physics.mass_kg")
        if not self.n_atoms > 0:
            raise ConfigError("total atom number must be positive", key="physics.n_atoms")
        for w in self.omega:
            if not w > 0:
                raise ConfigError(f"trap frequencies must be positive, got {w}", key="physics.omega")
        for name in ("a11", "a22", "a12"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite", key=f"physics.{name}_bohr")

    @cached_property
    def U(self):
        """2x2 interaction matrix U_ij = 4 pi hbar^2 a_ij / m (J m^3)."""
        g = 4 * np.pi * HBAR ** 2 / self.mass
        U = g * np.array([[self.a11, self.a12], [self.a12, self.a22]])
        U.setflags(write=False)
        return U

    @property
    def isotropic(self):
        return self.omega[0] == self.omega[1] == self.omega[2]

    @property
    def omega_r(self):
        if not self.isotropic:
            raise ConfigError("trap is not spherically symmetric", key="physics.omega")
        return self.omega[0]

    @property
    def omega_mean(self):
        return float(np.prod(self.omega) ** (1 / 3))

    def swapped(self):
        """Same system with the roles of |a> and |b> exchanged."""
        return replace(self, a11=self.a22, a22=self.a11)


@dataclass
class FieldPair:
    """psi has shape (2, *batch, *grid.shape); index 0 is |a>, 1 is |b>."""

    psi: np.ndarray
    grid: Grid
    time: float = 0.0

    @property
    def psi_a(self):
        return self.psi[0]

    @property
    def psi_b(self):
        return self.psi[1]

    def populations(self):
        n = norm(self.grid, self.psi)
        return n[0], n[1]

    def total_norm(self):
        na, nb = self.populations()
        return na + nb

    def cross_integral(self):
        """int psi_a^* psi_b d^3r (per batch entry)."""
        return integrate(self.grid, np.conj(self.psi[0]) * self.psi[1])

    def copy(self):
        return FieldPair(self.psi.copy(), self.grid, self.time)

    @classmethod
    def from_components(cls, psi_a, psi_b, grid, time=0.0):
        return cls(np.stack([np.asarray(psi_a, complex), np.asarray(psi_b, complex)]), grid, time)


@dataclass(frozen=True)
class PulseSpec:
    theta: float
    phi: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if not (0 <= self.theta < TWO_PI):
            raise ConfigError(f"pulse angle must lie in [0, 2pi), got {self.theta}", key="sequence.pulses")
        if self.time < 0:
            raise ConfigError("pulse time must be non-negative", key="sequence.pulses")


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple = ()
    duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        times = [p.time for p in self.pulses]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("pulse times must be strictly increasing", key="sequence.pulses")
        if self.duration < 0:
            raise ConfigError("sequence duration must be non-negative", key="sequence.duration_s")
        if times and times[-1] > self.duration:
            raise ConfigError("pulse scheduled after the end of the sequence", key="sequence.pulses")

    def with_first_pulse(self, theta, phi=None):
        first = self.pulses[0]
        p = PulseSpec(theta, first.phi if phi is None else phi, first.time)
        return PulseSequence((p,) + self.pulses[1:], self.duration)

    def free_windows(self):
        """Free-evolution intervals between pulses, in order."""
        edges = [p.time for p in self.pulses]
        if not edges or edges[-1] < self.duration:
            edges.append(self.duration)
        if edges[0] > 0:
            edges.insert(0, 0.0)
        return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


def canonical_sequence(t_pi, n_bounces=1, first_theta=np.pi / 2, first_phi=0.0, final=None):
    """pi/2 at t=0, pi pulses every t_pi, readout at 2 n_bounces t_pi.

    ``final`` is an optional (theta, phi) readout pulse placed at the end; by
    default the sequence stops just before it so the readout angle can be
    swept on the final state.
    """
    if t_pi <= 0:
        raise ConfigError("T_pi must be positive", key="sequence.t_pi_s")
    if n_bounces < 1:
        raise ConfigError("n_bounces must be >= 1", key="sequence.n_bounces")
    total = 2 * n_bounces * t_pi
    pulses = [PulseSpec(first_theta, first_phi, 0.0)]
    pulses += [PulseSpec(np.pi, 0.0, k * t_pi) for k in range(1, 2 * n_bounces)]
    if final is not None:
        pulses.append(PulseSpec(final[0], final[1], total))
    return PulseSequence(tuple(pulses), total)


# -- pointwise physics ---------------------------------------------------------

def potential(params: PhysicsParams, grid: Grid):
    m = params.mass
    if grid.geometry is Geometry.SPHERICAL_RADIAL_1D:
        return 0.5 * m * params.omega_r ** 2 * grid.r_squared
    x, y, z = grid.mesh()
    wx, wy, wz = params.omega
    return 0.5 * m * (wx ** 2 * x ** 2 + wy ** 2 * y ** 2 + wz ** 2 * z ** 2)


def make_stepper(params: PhysicsParams, grid: Grid, dt, wigner=False, workers=None):
    """Split-step integrator for the coupled equations with the coupling off.

    ``wigner=True`` subtracts the symmetric-ordering vacuum densities, 1/dv for
    the self term and 1/(2 dv) for the cross term.
    """
    if dt <= 0:
        raise ConfigError("time step must be positive", key="integrator.dt_s")
    V = potential(params, grid)
    U = params.U
    if wigner:
        inv = 1.0 / grid.weights
        Va = V - U[0, 0] * inv - U[0, 1] * inv / 2
        Vb = V - U[1, 1] * inv - U[0, 1] * inv / 2
    else:
        Va = Vb = V

    def energy(psi):
        dens = psi.real ** 2 + psi.imag ** 2
        na, nb = dens[0], dens[1]
        return np.stack([Va + U[0, 0] * na + U[0, 1] * nb,
                         Vb + U[0, 1] * na + U[1, 1] * nb])

    return SplitStepper(grid, params.mass, dt, energy, workers)


def apply_pulse(fields: FieldPair, pulse: PulseSpec) -> FieldPair:
    """Instantaneous resonant rotation by theta with coupling phase phi."""
    c, s = np.cos(pulse.theta / 2), np.sin(pulse.theta / 2)
    a, b = fields.psi[0], fields.psi[1]
    e = np.exp(1j * pulse.phi)
    new = np.stack([c * a - 1j * s * e * b, c * b - 1j * s * np.conj(e) * a])
    return FieldPair(new, fields.grid, fields.time)


def to_lab_frame(fields: FieldPair, detuning):
    psi = fields.psi.copy()
    psi[1] *= np.exp(-1j * detuning * fields.time)
    return FieldPair(psi, fields.grid, fields.time)


# -- ground state --------------------------------------------------------------

@dataclass
class GroundState:
    psi: np.ndarray          # normalised to 1
    energy: float            # GPE energy per atom (J)
    chemical_potential: float
    iterations: int


def gpe_energy(psi, grid, params, component=0, n_atoms=None):
    """Energy per atom and chemical potential of a normalised single-component field."""
    n_atoms = params.n_atoms if n_atoms is None else n_atoms
    g = params.U[component, component] * n_atoms
    V = potential(params, grid)
    dens = np.abs(psi) ** 2
    kin = HBAR ** 2 / (2 * params.mass) * integrate(grid, np.conj(psi) * neg_laplacian(grid, psi)).real
    pot = integrate(grid, V * dens)
    inter = integrate(grid, g * dens ** 2)
    return kin + pot + 0.5 * inter, kin + pot + inter


def _initial_guess(params, grid, component, n_atoms):
    V = potential(params, grid)
    g = params.U[component, component] * n_atoms
    wbar = params.omega_mean
    abar = np.sqrt(HBAR / (params.mass * wbar))
    if g > 0:
        a = params.a11 if component == 0 else params.a22
        mu = 0.5 * HBAR * wbar * (15 * n_atoms * a / abar) ** 0.4
        tf = np.clip(mu - V, 0, None) / g
        guess = np.sqrt(tf) + 1e-3 * np.sqrt(tf.max()) * np.exp(-V / (HBAR * wbar))
    else:
        guess = np.exp(-V / (HBAR * wbar))
    guess = guess.astype(complex)
    return guess / np.sqrt(norm(grid, guess))


def _polish(psi, params, grid, idx, n_atoms, mu0, tol=1e-13):
    """Newton-Krylov solve of H psi = mu psi, |psi| = 1 for a real field.

    Normalised imaginary-time stepping has a fixed point that is off by O(dtau);
    this removes that bias.  The Krylov solver is preconditioned with the
    spectral inverse of (T + mu).
    """
    V = potential(params, grid)
    g = params.U[idx, idx] * n_atoms
    T = HBAR ** 2 / (2 * params.mass) * grid.k_squared
    scale = np.sqrt(integrate(grid, np.ones(grid.shape)))   # makes x of order one
    x0 = psi.real * scale

    def F(x):
        x = x.reshape(grid.shape)
        Hx = from_spectral(grid, T * to_spectral(grid, x)).real + (V + g * x * x / scale ** 2) * x
        xx = integrate(grid, x * x)
        mu = integrate(grid, x * Hx) / xx
        return ((Hx - mu * x) / mu0 + (xx / scale ** 2 - 1) * x).ravel()

    def precondition(v):
        v = v.reshape(grid.shape)
        return from_spectral(grid, to_spectral(grid, v) / (T / mu0 + 1)).real.ravel()

    M = LinearOperator((grid.size, grid.size), matvec=precondition)
    try:
        x = newton_krylov(F, x0.ravel(), inner_M=M, f_tol=tol * np.abs(x0).max(), method="lgmres", maxiter=50)
    except NoConvergence as err:
        raise ConvergenceError("ground-state Newton polish did not converge") from err
    x = x.reshape(grid.shape) / scale
    return (x / np.sqrt(integrate(grid, x * x))).astype(complex)


def ground_state(params: PhysicsParams, grid: Grid, component="a", tol=1e-12,
                 max_iter=400_000, stages=(2e-2, 5e-3, 1e-3), n_atoms=None, polish=True) -> GroundState:
    """Ground state of the single-component GPE.

    Imaginary-time stepping brings the field close: ``stages`` are imaginary
    time steps in units of 1/omega_max, each run until the relative energy
    change per iteration drops below its tolerance (``tol`` for the last
    stage).  With ``polish`` a Newton-Krylov solve then converges the discrete
    stationary equation to round-off.
    """
    idx = {"a": 0, "b": 1}[component]
    n_atoms = params.n_atoms if n_atoms is None else n_atoms
    g = params.U[idx, idx] * n_atoms
    V = potential(params, grid)
    psi = _initial_guess(params, grid, idx, n_atoms)
    wmax = max(params.omega)
    E_old = gpe_energy(psi, grid, params, idx, n_atoms)[0]
    it = 0
    for s, dtau_w in enumerate(stages):
        dtau = dtau_w / wmax
        stage_tol = tol if s == len(stages) - 1 else max(tol, 1e-9)
        half = kinetic_phase_factors(grid, dtau / 2, params.mass, imaginary=True)
        while True:
            psi = apply_kinetic(grid, psi, half)
            psi = psi * np.exp(-dtau / HBAR * (V + g * np.abs(psi) ** 2))
            psi = apply_kinetic(grid, psi, half)
            psi = psi / np.sqrt(norm(grid, psi))
            it += 1
            E = gpe_energy(psi, grid, params, idx, n_atoms)[0]
            if abs(E - E_old) <= stage_tol * abs(E):
                E_old = E
                break
            E_old = E
            if it >= max_iter:
                raise ConvergenceError(f"ground state not converged after {it} iterations")
    # fix the global phase so the peak is real and positive
    k = np.argmax(np.abs(psi))
    psi = psi * np.exp(-1j * np.angle(psi.flat[k]))
    if polish:
        psi = _polish(psi, params, grid, idx, n_atoms, gpe_energy(psi, grid, params, idx, n_atoms)[1])
    E, mu = gpe_energy(psi, grid, params, idx, n_atoms)
    return GroundState(psi, float(E), float(mu), it)


def initial_state(grid: Grid, psi_g, n_atoms) -> FieldPair:
    """All atoms in |a> occupying the normalised mode psi_g."""
    a = np.sqrt(n_atoms) * np.asarray(psi_g, complex)
    return FieldPair.from_components(a, np.zeros_like(a), grid, 0.0)


# -- time evolution ------------------------------------------------------------

def evolve_gpe(fields: FieldPair, params: PhysicsParams, duration, dt, stepper=None) -> FieldPair:
    """Advance both components by ``duration`` with the coupling off."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    stepper = stepper or make_stepper(params, fields.grid, dt)
    psi = stepper.advance_time(fields.psi, duration)
    return FieldPair(psi, fields.grid, fields.time + duration)


def run_sequence(fields: FieldPair, params: PhysicsParams, sequence: PulseSequence, dt,
                 snapshot_times=(), observer=None, wigner=False, stepper=None):
    """Alternate free evolution and pulses, reporting at ``snapshot_times``.

    Pulses scheduled at a snapshot time are applied before the snapshot is
    taken.  ``observer(t, fields)`` is called at every snapshot; without an
    observer copies of the fields are returned.
    """
    t0 = fields.time
    if sequence.pulses and sequence.pulses[0].time < t0 - 1e-15:
        raise ConfigError("sequence starts before the current field time", key="sequence")
    snaps = sorted({float(t) for t in snapshot_times})
    if snaps and (snaps[0] < t0 - 1e-15 or snaps[-1] > sequence.duration * (1 + 1e-12) + 1e-15):
        raise ConfigError("snapshot times must lie within the sequence", key="integrator.snapshot_interval_s")
    pulse_at = {}
    for p in sequence.pulses:
        pulse_at.setdefault(p.time, []).append(p)
    events = sorted(set(pulse_at) | set(snaps) | {sequence.duration})
    stepper = stepper or make_stepper(params, fields.grid, dt, wigner=wigner)
    snapset = set(snaps)
    out = []
    cur = fields
    for t in events:
        if t > cur.time:
            cur = FieldPair(stepper.advance_time(cur.psi, t - cur.time), cur.grid, t)
        for p in pulse_at.get(t, ()):
            cur = apply_pulse(cur, p)
        if t in snapset:
            out.append(observer(t, cur) if observer else cur.copy())
    return cur, out


def snapshot_grid(duration, interval):
    """Evenly spaced snapshot times 0, interval, ..., duration (endpoint included)."""
    n = int(round(duration / interval))
    if n < 1:
        return np.array([0.0, duration]) if duration > 0 else np.array([0.0])
    times = np.linspace(0.0, n * interval, n + 1)
    if abs(times[-1] - duration) > 1e-12 * max(duration, 1e-30):
        times = np.append(times[times < duration], duration)
    return times
