"""Mean-field estimates of the effective squeezing parameter lambda.

Two routes are provided.  The overlap route integrates the one-axis twisting
rates chi_ij(t) built from normalised GPE mode functions.  The phase-diffusion
route runs two GPE simulations whose initial number difference differs by the
projection noise and converts the spread of the final relative phase into
lambda = delta_phi / (2 sqrt(N_t)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR
from .errors import ConfigError, UndefinedObservable
from .grid import integrate
from .meanfield import (FieldPair, PhysicsParams, PulseSequence, apply_pulse, initial_state,
                        make_stepper)
from .twomode import (ChiIntegrals, ChiTrace, chi_integrals, minimize_over_theta,
                      two_mode_variance, READOUT_PHI)

OVERLAP_FLOOR = 1e-6


def window_samples(t0, t1, interval):
    n = max(2, int(np.ceil((t1 - t0) / interval - 1e-9)) + 1)
    return np.linspace(t0, t1, n)


def walk_windows(fields: FieldPair, params: PhysicsParams, sequence: PulseSequence, dt, interval,
                 callback, stepper=None):
    """Evolve through ``sequence`` calling ``callback(k, t, fields)`` on every sample.

    Each free window is sampled on an even grid including both ends; pulses
    at a window start are applied before its first sample, so a pulse instant
    is seen twice (end of window k, start of window k + 1).  A pulse at the
    very end of the sequence is not applied.  Returns the final fields.
    """
    stepper = stepper or make_stepper(params, fields.grid, dt)
    pulses = {}
    for p in sequence.pulses:
        pulses.setdefault(p.time, []).append(p)
    cur = fields
    for k, (t0, t1) in enumerate(sequence.free_windows()):
        if t0 > cur.time:
            cur = FieldPair(stepper.advance_time(cur.psi, t0 - cur.time), cur.grid, t0)
        for p in pulses.get(t0, ()):
            cur = apply_pulse(cur, p)
        for t in window_samples(t0, t1, interval):
            if t > cur.time:
                cur = FieldPair(stepper.advance_time(cur.psi, t - cur.time), cur.grid, t)
            callback(k, t, cur)
    return cur


def chi_rates(fields: FieldPair, params: PhysicsParams):
    """(chi_aa, chi_bb, chi_ab) in rad/s from u_i = psi_i / sqrt(N_i)."""
    na, nb = fields.populations()
    if not (na > 0 and nb > 0):
        raise UndefinedObservable("mode functions undefined for an empty component")
    ua = (fields.psi[0].real ** 2 + fields.psi[0].imag ** 2) / na
    ub = (fields.psi[1].real ** 2 + fields.psi[1].imag ** 2) / nb
    U = params.U
    g = fields.grid
    return (U[0, 0] / (2 * HBAR) * integrate(g, ua * ua),
            U[1, 1] / (2 * HBAR) * integrate(g, ub * ub),
            U[0, 1] / (2 * HBAR) * integrate(g, ua * ub))


def gpe_chi_trace(params: PhysicsParams, grid, psi_g, sequence: PulseSequence, dt, interval=2e-5):
    """Run the noise-free GPE through ``sequence`` recording chi_ij(t) per window."""
    windows = sequence.free_windows()
    segs = [([], []) for _ in windows]

    def record(k, t, f):
        segs[k][0].append(t)
        segs[k][1].append(chi_rates(f, params))

    f0 = initial_state(grid, psi_g, params.n_atoms)
    walk_windows(f0, params, sequence, dt, interval, record)
    return ChiTrace(list(windows), [(np.array(t), np.array(c, float)) for t, c in segs])


def lambda_from_chi(trace: ChiTrace) -> ChiIntegrals:
    return chi_integrals(trace)


@dataclass
class PhaseDiffusionProbe:
    imbalance: float          # |N_a - N_b| / 2 of each probe at preparation
    phi_plus: float
    phi_minus: float
    n_total: float
    t_readout: float
    phase_trace_plus: tuple = field(default=(), repr=False)
    phase_trace_minus: tuple = field(default=(), repr=False)

    @property
    def delta_phi(self):
        return self.phi_plus - self.phi_minus

    @property
    def lambda_estimate(self):
        # delta_phi / (2 sqrt(N_t)) at the nominal imbalance sqrt(N_t)/4, scaled linearly otherwise
        nominal = np.sqrt(self.n_total) / 4
        return self.delta_phi / (2 * np.sqrt(self.n_total)) * nominal / self.imbalance


def probe_theta(n_total, sign, scale=1.0):
    """First-pulse angle giving N_a - N_b = sign * scale * sqrt(N_t) / 2."""
    c = sign * scale / (2 * np.sqrt(n_total))
    if abs(c) >= 1:
        raise ConfigError("probe imbalance exceeds the atom number", key="physics.n_atoms")
    return float(np.arccos(c))


def relative_phase_trace(params: PhysicsParams, grid, psi_g, sequence: PulseSequence, dt, interval=2e-5):
    """Continuously unwrapped arg(int psi_b^* psi_a) through the sequence.

    Interior pulses must be pi pulses; across a pi pulse with phase phi_p the
    relative phase maps to -phase + 2 phi_p, which is applied to the
    unwrapped value so the trace stays continuous.  Returns (times, phases,
    final fields).
    """
    pulse_at = {p.time: p for p in sequence.pulses}
    for p in sequence.pulses[1:]:
        if p.time < sequence.duration and not np.isclose(p.theta, np.pi):
            raise ConfigError("phase tracking needs pi pulses between free windows", key="sequence.pulses")
    times, phases = [], []
    state = {"k": -1, "phase": None}

    def record(k, t, f):
        c = integrate(f.grid, np.conj(f.psi[1]) * f.psi[0])
        raw = float(np.angle(c))
        if state["phase"] is None:
            cont = raw
        else:
            prev = state["phase"]
            if k != state["k"]:
                p = pulse_at.get(t)
                if p is not None and t > 0:
                    prev = -prev + 2 * p.phi
            cont = prev + (raw - prev + np.pi) % (2 * np.pi) - np.pi
        state["k"], state["phase"] = k, cont
        times.append(t)
        phases.append(cont)

    f0 = initial_state(grid, psi_g, params.n_atoms)
    final = walk_windows(f0, params, sequence, dt, interval, record)
    return np.array(times), np.array(phases), final


def lambda_from_phase_diffusion(params: PhysicsParams, grid, psi_g, sequence: PulseSequence, dt,
                                interval=2e-5, imbalance_scale=1.0) -> PhaseDiffusionProbe:
    """Two GPE probes with N_a - N_b = +/- imbalance_scale * sqrt(N_t)/2 at preparation."""
    N = params.n_atoms
    if np.sqrt(N) / 4 < 1:
        raise ConfigError("phase-diffusion probe needs sqrt(N_t)/4 >= 1", key="physics.n_atoms")
    out = {}
    for sign in (+1, -1):
        seq = sequence.with_first_pulse(probe_theta(N, sign, imbalance_scale))
        t, ph, final = relative_phase_trace(params, grid, psi_g, seq, dt, interval)
        na, nb = final.populations()
        c = integrate(grid, np.conj(final.psi[1]) * final.psi[0])
        if abs(c) < OVERLAP_FLOOR * np.sqrt(na * nb):
            raise UndefinedObservable("overlap too small at readout for a well-defined relative phase")
        out[sign] = (ph[-1], (t, ph))
    return PhaseDiffusionProbe(imbalance_scale * np.sqrt(N) / 4, out[1][0], out[-1][0], N,
                               sequence.duration, out[1][1], out[-1][1])


@dataclass
class SqueezingPrediction:
    lam: float
    n_total: float
    thetas: np.ndarray
    v: np.ndarray
    theta_opt: float
    v_min: float

    @property
    def lambda_opt(self):
        return 0.6 * self.n_total ** (-2 / 3)

    @property
    def ratio_to_opt(self):
        return self.lam / self.lambda_opt

    @property
    def regime(self):
        r = self.ratio_to_opt
        if r < 0.5:
            return "under-squeezed"
        if r > 2:
            return "over-squeezed"
        return "near-optimal"


def predict_squeezing(lam, n_total, thetas, phi=READOUT_PHI) -> SqueezingPrediction:
    thetas = np.asarray(thetas, float)
    v = two_mode_variance(n_total, lam, thetas, phi)
    v_min, th = minimize_over_theta(n_total, lam, phi=phi)
    return SqueezingPrediction(float(lam), float(n_total), thetas, v, th, v_min)
