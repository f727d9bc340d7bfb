"""Collective-spin diagnostics: overlap, number-difference variance, Wineland xi.

Spin components use J_x = Re C, J_y = Im C, J_z = (N_a - N_b)/2 with the
cross integral C = int psi_a^* psi_b d^3r.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import UndefinedObservable


def overlap_Q(cross, n_a, n_b):
    """Q = |<int psi_a^* psi_b>| / sqrt(N_a N_b)."""
    n_a, n_b = float(np.real(n_a)), float(np.real(n_b))
    if not (n_a > 0 and n_b > 0):
        raise UndefinedObservable(f"overlap undefined for populations N_a={n_a}, N_b={n_b}")
    return float(abs(cross) / np.sqrt(n_a * n_b))


def number_difference_variance(second_moment, first_moment, n_total):
    """v = (<(N_a-N_b)^2> - <N_a-N_b>^2) / <N_a+N_b>."""
    if not n_total > 0:
        raise UndefinedObservable(f"number-difference variance undefined for total population {n_total}")
    return float((second_moment - first_moment ** 2) / n_total)


def wineland_xi(v, Q, n_total=None):
    """Return (xi_s, delta_phi); delta_phi = xi_s / sqrt(N_t) is None without N_t."""
    if not Q > 0:
        raise UndefinedObservable("Wineland parameter undefined for zero visibility")
    if v < 0:
        raise ValueError(f"variance must be non-negative, got {v}")
    xi = float(np.sqrt(v) / Q)
    dphi = None if n_total is None else float(xi / np.sqrt(n_total))
    return xi, dphi


def xi_from_spin(n_total, jz2, j_perp):
    """xi_s = sqrt(N_t <J_z^2>) / J_perp."""
    if not j_perp > 0:
        raise UndefinedObservable("Wineland parameter undefined for zero transverse spin")
    return float(np.sqrt(n_total * jz2) / j_perp)


@dataclass(frozen=True)
class SpinMoments:
    """First moments (Jx, Jy, Jz) and the symmetrised second-moment matrix <{J_k, J_l}>/2."""

    mean: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, float).reshape(3))
        s = np.asarray(self.second, float).reshape(3, 3)
        object.__setattr__(self, "second", 0.5 * (s + s.T))

    @property
    def Jx(self):
        return float(self.mean[0])

    @property
    def Jy(self):
        return float(self.mean[1])

    @property
    def Jz(self):
        return float(self.mean[2])

    @property
    def Jz2(self):
        return float(self.second[2, 2])

    @property
    def var_z(self):
        return float(self.second[2, 2] - self.mean[2] ** 2)

    @property
    def J_perp(self):
        return float(np.hypot(self.mean[0], self.mean[1]))

    @classmethod
    def from_fields(cls, fields):
        """Mean-field spin vector of a FieldPair (second moments are products of means)."""
        na, nb = fields.populations()
        c = fields.cross_integral()
        m = np.array([np.real(c), np.imag(c), 0.5 * (na - nb)], float)
        return cls(m, np.outer(m, m))


def mz_rotation(phi):
    """Bloch-sphere rotation of a 50/50 - phase phi - 50/50 interferometer.

    Built from the mode map a_out = -i sin(phi/2) a - i cos(phi/2) b,
    b_out = -i cos(phi/2) a + i sin(phi/2) b as R_kl = tr(U^dag s_k U s_l)/2.
    """
    s, c = np.sin(phi / 2), np.cos(phi / 2)
    U = np.array([[-1j * s, -1j * c], [-1j * c, 1j * s]])
    paulis = (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))
    return np.array([[0.5 * np.trace(U.conj().T @ pk @ U @ pl).real for pl in paulis] for pk in paulis])


def mz_transform(moments: SpinMoments, phi) -> SpinMoments:
    R = mz_rotation(phi)
    return SpinMoments(R @ moments.mean, R @ moments.second @ R.T)


def mz_sensitivity(moments: SpinMoments, phi):
    """Delta phi = sqrt(V(J_z,out)) / |d<J_z,out>/d phi| for the interferometer input ``moments``."""
    out = mz_transform(moments, phi)
    slope = np.cos(phi) * moments.Jx + np.sin(phi) * moments.Jz
    if slope == 0:
        raise UndefinedObservable("zero signal slope")
    return float(np.sqrt(max(out.var_z, 0.0)) / abs(slope))


@dataclass
class SqueezingReport:
    theta: float
    v: float
    Q: float
    xi_s: float
    delta_phi: float
    v_stderr: float = float("nan")
    Q_stderr: float = float("nan")

    @classmethod
    def build(cls, theta, v, Q, n_total, v_stderr=float("nan"), Q_stderr=float("nan")):
        xi, dphi = wineland_xi(max(v, 0.0), Q, n_total)
        return cls(float(theta), float(v), float(Q), xi, dphi, float(v_stderr), float(Q_stderr))


REPORT_COLUMNS = ("theta", "v", "v_stderr", "Q", "xi_s", "delta_phi")


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        d = asdict(r)
        w.writerow([repr(float(d[k])) for k in REPORT_COLUMNS])
    return buf.getvalue()


def reports_summary(reports):
    """Minima over a theta sweep as a JSON-ready dict."""
    if not reports:
        return {"theta_opt": None, "v_min": None, "xi_min": None}
    best = min(reports, key=lambda r: r.v)
    return {
        "theta_opt": best.theta,
        "theta_opt_over_pi": best.theta / np.pi,
        "v_min": best.v,
        "v_min_stderr": best.v_stderr,
        "Q_at_v_min": best.Q,
        "xi_min": min(r.xi_s for r in reports),
    }


def summary_json(reports):
    return json.dumps(reports_summary(reports), indent=2, sort_keys=True)
