"""Two-mode Kerr model: coherent states dephased by number-dependent phases.

After the pi/2 pulse the two modes hold coherent amplitudes alpha, beta.  The
spatial dynamics enter only through the accumulated Kerr phases
Phi(n1, n2) = lambda1 n1 (n1 - 1) + lambda2 n2 (n2 - 1), and a final rotation
(theta, phi) maps number difference onto a mixture of N_a - N_b and the
in-plane spin.  This module evaluates the resulting moments in closed form and,
independently, by summing over a truncated Fock basis.

The readout pulse uses the same map as :func:`oatbec.meanfield.apply_pulse`.
The spin-echo pi pulse maps the prepared amplitudes (alpha, -i alpha) to
(-alpha, -i alpha); for that echoed state the squeezed quadrature appears at
small positive theta when phi = pi/2, the default here (``READOUT_PHI``).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import ConfigError, ConvergenceError, TruncationError

READOUT_PHI = np.pi / 2
ASYMMETRY_THRESHOLD = 0.05


@dataclass(frozen=True)
class TwoModeState:
    alpha: complex
    beta: complex
    lam: float
    n_total: float

    @classmethod
    def split(cls, n_total, lam):
        """Canonical pi/2 preparation: alpha = sqrt(N/2), beta = -i sqrt(N/2)."""
        if n_total <= 0:
            raise ConfigError("N_t must be positive", key="twomode.n_atoms")
        a0 = np.sqrt(n_total)
        return cls(a0 / np.sqrt(2), -1j * a0 / np.sqrt(2), float(lam), float(n_total))

    @classmethod
    def echo(cls, n_total, lam):
        """Split state after the pi pulse (phi = 0): alpha = -sqrt(N/2), beta = -i sqrt(N/2)."""
        s = cls.split(n_total, lam)
        return cls(-1j * s.beta, -1j * s.alpha, s.lam, s.n_total)


# -- closed forms -------------------------------------------------------------

def kerr_expectations(state: TwoModeState):
    """Operator expectation values in the dephased coherent state (lambda1 = lambda2)."""
    a, b, lam = complex(state.alpha), complex(state.beta), state.lam
    na, nb = abs(a) ** 2, abs(b) ** 2
    e2p, e2m = np.exp(2j * lam), np.exp(-2j * lam)
    adb = np.conj(a) * b * np.exp(na * (e2p - 1) + nb * (e2m - 1))
    shift = np.exp(na * (e2m - 1) + nb * (e2p - 1))
    out = {
        "ad_a": na,
        "bd_b": nb,
        "ad_b": adb,
        "bd_a": np.conj(adb),
        "ad_a_bd_b": na * nb,
        "ad_a_ad_a": na ** 2 + na,
        "bd_b_bd_b": nb ** 2 + nb,
        "ad_a_a_bd": a * np.conj(b) * na * e2m * shift,
        "a_bd_bd_b": a * np.conj(b) * nb * e2p * shift,
        # no extra e^{2i lambda} prefactor: checked against the Fock sum
        "ad_ad_b_b": np.conj(a) ** 2 * b ** 2 * np.exp(na * (np.exp(4j * lam) - 1)
                                                         + nb * (np.exp(-4j * lam) - 1)),
    }
    return out


def variance_from_moments(m, theta, phi=READOUT_PHI):
    """v(N_a - N_b) after a (theta, phi) rotation, assembled from raw moments.

    ``m`` is a dict with the keys produced by :func:`kerr_expectations`.
    The rotated difference is cos(theta) Z + sin(theta) Y with Z = n_a - n_b
    and Y = i(e^{-i phi} a b^dag - e^{i phi} a^dag b).
    """
    theta = np.asarray(theta, float)
    n_tot = (m["ad_a"] + m["bd_b"]).real
    K = np.conj(m["ad_b"])                   # <a b^dag>
    z1 = (m["ad_a"] - m["bd_b"]).real
    z2 = (m["ad_a_ad_a"] + m["bd_b_bd_b"] - 2 * m["ad_a_bd_b"]).real
    ph = 1j * np.exp(-1j * phi)
    y1 = 2 * (ph * K).real
    y2 = (2 * m["ad_a_bd_b"] + m["ad_a"] + m["bd_b"]).real - 2 * (np.exp(2j * phi) * m["ad_ad_b_b"]).real
    zy = 4 * (ph * (m["ad_a_a_bd"] - m["a_bd_bd_b"])).real
    c, s = np.cos(theta), np.sin(theta)
    second = c * c * z2 + s * s * y2 + s * c * zy
    first = c * z1 + s * y1
    return (second - first ** 2) / n_tot


def two_mode_variance(n_total, lam, theta, phi=READOUT_PHI, small_lambda=False):
    """Closed-form v(N_a - N_b) for the echoed state :meth:`TwoModeState.echo`.

    v = 1 + (N/2) sin^2(theta) (1 + cos(2 phi) E2) - N sin^2(theta) cos^2(phi) E1^2
          - N sin(phi) E1 sin(2 lambda) sin(2 theta),
    E1 = exp(-2 N sin^2 lambda), E2 = exp(N (cos 4 lambda - 1)).
    Without the echo (:meth:`TwoModeState.split`) the last term changes sign.

    ``small_lambda=True`` returns the expansion to leading order in lambda
    (valid for phi = pi/2 only).
    """
    if n_total <= 0:
        raise ConfigError("N_t must be positive", key="twomode.n_atoms")
    N = float(n_total)
    theta = np.asarray(theta, float)
    s2 = np.sin(theta) ** 2
    if small_lambda:
        if not np.isclose(phi, READOUT_PHI):
            raise ValueError("the small-lambda form is only available at phi = pi/2")
        return 1 + 0.25 * (N + np.exp(-8 * lam ** 2 * N) * N * (np.cos(2 * theta) - 1)
                           - N * np.cos(2 * theta)
                           - 8 * lam * np.exp(-2 * lam ** 2 * N) * N * np.sin(2 * theta))
    E1 = np.exp(-2 * N * np.sin(lam) ** 2)
    E2 = np.exp(N * (np.cos(4 * lam) - 1))
    return (1 + 0.5 * N * s2 * (1 + np.cos(2 * phi) * E2)
            - N * s2 * np.cos(phi) ** 2 * E1 ** 2
            - N * np.sin(phi) * E1 * np.sin(2 * lam) * np.sin(2 * theta))


def quadrature_variance(n_total, lam):
    """Var(a^dag b + a b^dag) = N + (N^2/2)(1 - exp(N (cos 4 lambda - 1)))."""
    N = float(n_total)
    return N + 0.5 * N * N * (-np.expm1(N * (np.cos(4 * lam) - 1)))


# -- Fock-basis oracle --------------------------------------------------------

@dataclass
class FockOracle:
    """Truncated two-mode state with helpers for direct expectation values."""

    n_max: int
    psi: np.ndarray          # amplitudes, shape (n_max + 1, n_max + 1)
    tail_weight: float

    @property
    def n(self):
        return np.arange(self.n_max + 1)

    def _sq(self):
        return np.sqrt(self.n[1:])

    def a(self, p):
        out = np.zeros_like(p)
        out[:-1, :] = self._sq()[:, None] * p[1:, :]
        return out

    def ad(self, p):
        out = np.zeros_like(p)
        out[1:, :] = self._sq()[:, None] * p[:-1, :]
        return out

    def b(self, p):
        out = np.zeros_like(p)
        out[:, :-1] = self._sq()[None, :] * p[:, 1:]
        return out

    def bd(self, p):
        out = np.zeros_like(p)
        out[:, 1:] = self._sq()[None, :] * p[:, :-1]
        return out

    def ev(self, p):
        return np.vdot(self.psi, p)

    def expectations(self):
        s = self.psi
        na = self.ad(self.a(s))
        nb = self.bd(self.b(s))
        return {
            "ad_a": self.ev(na),
            "bd_b": self.ev(nb),
            "ad_b": self.ev(self.ad(self.b(s))),
            "bd_a": self.ev(self.bd(self.a(s))),
            "ad_a_bd_b": self.ev(self.ad(self.a(nb))),
            "ad_a_ad_a": self.ev(self.ad(self.a(na))),
            "bd_b_bd_b": self.ev(self.bd(self.b(nb))),
            "ad_a_a_bd": self.ev(self.ad(self.a(self.a(self.bd(s))))),
            "a_bd_bd_b": self.ev(self.a(self.bd(self.bd(self.b(s))))),
            "ad_ad_b_b": self.ev(self.ad(self.ad(self.b(self.b(s))))),
        }

    def variance(self, theta, phi=READOUT_PHI):
        """v(N_a - N_b) after the rotation, by applying operators to the state."""
        s = self.psi
        z = self.ad(self.a(s)) - self.bd(self.b(s))
        y = 1j * (np.exp(-1j * phi) * self.a(self.bd(s)) - np.exp(1j * phi) * self.ad(self.b(s)))
        n_tot = self.ev(self.ad(self.a(s)) + self.bd(self.b(s))).real
        z1, y1 = self.ev(z).real, self.ev(y).real
        z2, y2 = np.vdot(z, z).real, np.vdot(y, y).real
        zy = 2 * np.vdot(z, y).real
        theta = np.asarray(theta, float)
        c, si = np.cos(theta), np.sin(theta)
        return (c * c * z2 + si * si * y2 + si * c * zy - (c * z1 + si * y1) ** 2) / n_tot

    def quadrature_variance(self):
        s = self.psi
        p = self.ad(self.b(s)) + self.a(self.bd(s))
        return np.vdot(p, p).real - self.ev(p).real ** 2


def _coherent_amplitudes(amp, n):
    r = abs(amp)
    if r == 0:
        c = np.zeros(n.size, complex)
        c[0] = 1.0
        return c
    logmag = -r * r / 2 + n * np.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(amp))


def fock_oracle(state: TwoModeState, n_max=None, lam2=None, tol=1e-14) -> FockOracle:
    """Build the dephased state sum_{n1,n2} C_{n1 n2} e^{-i Phi} |n1, n2> directly.

    ``lam2`` sets a different phase coefficient for the second mode; by default
    lambda1 = lambda2 = state.lam.  Raises TruncationError when the coherent
    weight beyond ``n_max`` in either mode exceeds ``tol``.
    """
    na, nb = abs(state.alpha) ** 2, abs(state.beta) ** 2
    if n_max is None:
        big = max(na, nb)
        n_max = int(np.ceil(big + 10 * np.sqrt(big) + 20))
    tail = float(max(poisson.sf(n_max, na), poisson.sf(n_max, nb)))
    if tail > tol:
        raise TruncationError(f"coherent tail weight {tail:.2e} beyond n_max={n_max} exceeds {tol:.0e}")
    n = np.arange(n_max + 1)
    l1 = state.lam
    l2 = state.lam if lam2 is None else lam2
    ca = _coherent_amplitudes(state.alpha, n)
    cb = _coherent_amplitudes(state.beta, n)
    phase = l1 * (n * (n - 1))[:, None] + l2 * (n * (n - 1))[None, :]
    psi = np.outer(ca, cb) * np.exp(-1j * phase)
    return FockOracle(int(n_max), psi, tail)


# -- optimisation -------------------------------------------------------------

@dataclass(frozen=True)
class OptimalSqueezing:
    n_total: float
    lambda_opt: float
    theta_opt: float
    v_min: float

    @property
    def lambda_asymptotic(self):
        return 0.6 * self.n_total ** (-2 / 3)

    @property
    def v_asymptotic(self):
        return self.n_total ** (-2 / 3)

    def to_dict(self):
        return {
            "n_total": self.n_total,
            "lambda_opt": self.lambda_opt,
            "theta_opt": self.theta_opt,
            "v_min": self.v_min,
            "lambda_asymptotic": self.lambda_asymptotic,
            "v_asymptotic": self.v_asymptotic,
        }


def minimize_over_theta(n_total, lam, n_theta=20001, phi=READOUT_PHI):
    """(v_min, theta_opt) over theta in [0, pi): dense grid then bounded refinement."""
    th = np.linspace(0, np.pi, n_theta)
    v = two_mode_variance(n_total, lam, th, phi)
    i = int(np.argmin(v))
    lo, hi = th[max(i - 1, 0)], th[min(i + 1, n_theta - 1)]
    if hi <= lo:
        return float(v[i]), float(th[i])
    r = minimize_scalar(lambda t: two_mode_variance(n_total, lam, t, phi), bounds=(lo, hi),
                        method="bounded", options={"xatol": 1e-14})
    if r.fun <= v[i]:
        return float(r.fun), float(r.x % np.pi)
    return float(v[i]), float(th[i])


def optimal_squeezing(n_total, phi=READOUT_PHI) -> OptimalSqueezing:
    """Minimise v over (lambda, theta); lambda is searched on a log scale."""
    if n_total < 100:
        raise ConfigError("optimal_squeezing targets the asymptotic regime N_t >= 100", key="twomode.n_atoms")
    scale = n_total ** (-2 / 3)
    bounds = (np.log(1e-3 * scale), np.log(1e2 * scale))
    r = minimize_scalar(lambda x: minimize_over_theta(n_total, np.exp(x), phi=phi)[0],
                        bounds=bounds, method="bounded", options={"xatol": 1e-10, "maxiter": 500})
    if not r.success:
        raise ConvergenceError(f"lambda optimisation failed: {r.message}")
    lam = float(np.exp(r.x))
    if min(abs(r.x - bounds[0]), abs(r.x - bounds[1])) < 1e-6:
        raise ConvergenceError("lambda optimum hit the search boundary")
    v, th = minimize_over_theta(n_total, lam, phi=phi)
    return OptimalSqueezing(float(n_total), lam, th, v)


# -- chi traces ---------------------------------------------------------------

@dataclass
class ChiTrace:
    """chi_aa, chi_bb, chi_ab (rad/s) sampled over consecutive free-evolution windows.

    ``segments[k]`` is ``(times, chi)`` with ``chi`` of shape (n, 3) in column
    order (aa, bb, ab); ``windows[k]`` is the (start, end) of that window.
    Keeping the windows separate preserves both values at a pulse instant.
    """

    windows: list
    segments: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window", "t_s", "chi_aa_rad_per_s", "chi_bb_rad_per_s", "chi_ab_rad_per_s"])
        for k, (t, chi) in enumerate(self.segments):
            for ti, row in zip(t, chi):
                w.writerow([k, repr(float(ti))] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def constant(cls, chi_aa, chi_bb, chi_ab, windows, samples=11):
        segs = []
        for t0, t1 in windows:
            t = np.linspace(t0, t1, samples)
            segs.append((t, np.tile([chi_aa, chi_bb, chi_ab], (samples, 1)).astype(float)))
        return cls(list(windows), segs)


@dataclass(frozen=True)
class ChiIntegrals:
    lambda1: float
    lambda2: float

    @property
    def lam(self):
        return 0.5 * (self.lambda1 + self.lambda2)

    @property
    def asymmetry(self):
        if self.lam == 0:
            return 0.0 if self.lambda1 == self.lambda2 else np.inf
        return abs(self.lambda1 - self.lambda2) / abs(self.lam)

    @property
    def asymmetric(self):
        return self.asymmetry > ASYMMETRY_THRESHOLD


def chi_integrals(trace: ChiTrace) -> ChiIntegrals:
    """Trapezoidal lambda1, lambda2; windows alternate roles after each pi pulse."""
    if not trace.segments or len(trace.segments) != len(trace.windows):
        raise ValueError("chi trace must hold one segment per window")
    l1 = l2 = 0.0
    for k, ((t0, t1), (t, chi)) in enumerate(zip(trace.windows, trace.segments)):
        t = np.asarray(t, float)
        chi = np.asarray(chi, float)
        tol = 1e-9 * max(abs(t1 - t0), 1e-30)
        if t.size < 2 or abs(t[0] - t0) > tol or abs(t[-1] - t1) > tol:
            raise ValueError(f"chi trace does not cover window {k} [{t0}, {t1}]")
        I = np.trapezoid(chi, t, axis=0) if hasattr(np, "trapezoid") else np.trapz(chi, t, axis=0)
        d1, d2 = I[0] - I[2], I[1] - I[2]
        if k % 2 == 0:
            l1, l2 = l1 + d1, l2 + d2
        else:
            l1, l2 = l1 + d2, l2 + d1
    return ChiIntegrals(float(l1), float(l2))


def theta_curve_csv(thetas, values, header=("theta_rad", "v")):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t, v in zip(thetas, values):
        w.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()
