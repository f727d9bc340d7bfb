import numpy as np
import pytest

from oatbec.constants import HBAR
from oatbec.errors import ConfigError
from oatbec.grid import integrate
from oatbec.meanfield import (PhysicsParams, PulseSequence, PulseSpec, apply_pulse, canonical_sequence,
                              ground_state, initial_state)
from oatbec.estimators import (PhaseDiffusionProbe, chi_rates, gpe_chi_trace, lambda_from_chi,
                               lambda_from_phase_diffusion, predict_squeezing, probe_theta,
                               relative_phase_trace, walk_windows, window_samples)

SEQ = canonical_sequence(0.5e-3)


def test_window_samples_cover_both_ends():
    t = window_samples(1e-3, 2e-3, 3e-4)
    assert t[0] == 1e-3 and t[-1] == 2e-3 and np.all(np.diff(t) <= 3e-4 + 1e-15)


def test_walk_windows_visits_each_window(ci_small):
    _, p, g, gs = ci_small
    seen = []
    final = walk_windows(initial_state(g, gs.psi, p.n_atoms), p, SEQ, 1e-6, 1e-4,
                         lambda k, t, f: seen.append((k, t, f.populations()[1])))
    ks = [s[0] for s in seen]
    assert ks[0] == 0 and ks[-1] == 1
    assert seen[0][2] == pytest.approx(p.n_atoms / 2, rel=1e-12)    # pi/2 applied before the first sample
    assert final.time == pytest.approx(SEQ.duration)


def test_static_modes_give_constant_chi(ci_small):
    _, p, g, gs = ci_small
    f = apply_pulse(initial_state(g, gs.psi, p.n_atoms), PulseSpec(np.pi / 2))
    caa, cbb, cab = chi_rates(f, p)
    u4 = integrate(g, np.abs(gs.psi) ** 4)
    U = p.U
    assert caa == pytest.approx(U[0, 0] / (2 * HBAR) * u4, rel=1e-12)
    assert cab == pytest.approx(U[0, 1] / (2 * HBAR) * u4, rel=1e-12)
    T = 1e-3
    lam = T * (caa + cbb - 2 * cab)
    assert lam == pytest.approx(T * (U[0, 0] + U[1, 1] - 2 * U[0, 1]) / (2 * HBAR) * u4, rel=1e-12)


def test_symmetric_scattering_gives_zero_lambda(ci_small):
    _, p, g, _ = ci_small
    q = PhysicsParams.from_bohr(100.0, 100.0, 100.0, omega=p.omega, n_atoms=p.n_atoms)
    gs = ground_state(q, g)
    ci = lambda_from_chi(gpe_chi_trace(q, g, gs.psi, SEQ, 1e-6, 1e-4))
    chi_scale = q.U[0, 0] / (2 * HBAR) * integrate(g, np.abs(gs.psi) ** 4) * SEQ.duration
    assert abs(ci.lam) < 1e-10 * chi_scale


def test_noninteracting_gas_has_no_phase_diffusion(ci_small):
    _, p, g, _ = ci_small
    q = PhysicsParams(a11=0.0, a22=0.0, a12=0.0, omega=p.omega, n_atoms=p.n_atoms)
    gs = ground_state(q, g)
    probe = lambda_from_phase_diffusion(q, g, gs.psi, SEQ, 1e-6, 1e-4)
    assert abs(probe.delta_phi) < 1e-10
    assert abs(probe.lambda_estimate) < 1e-12


@pytest.fixture(scope="module")
def probes(ci_small):
    _, p, g, gs = ci_small
    base = lambda_from_phase_diffusion(p, g, gs.psi, SEQ, 1e-6, 1e-4)
    double = lambda_from_phase_diffusion(p, g, gs.psi, SEQ, 1e-6, 1e-4, imbalance_scale=2.0)
    shifted = lambda_from_phase_diffusion(p, g, gs.psi * np.exp(0.9j), SEQ, 1e-6, 1e-4)
    return base, double, shifted


def test_probe_linearity(probes):
    base, double, _ = probes
    assert double.delta_phi / base.delta_phi == pytest.approx(2.0, rel=0.1)
    assert double.lambda_estimate == pytest.approx(base.lambda_estimate, rel=0.1)


def test_probe_invariant_under_global_phase(probes):
    base, _, shifted = probes
    assert shifted.lambda_estimate == pytest.approx(base.lambda_estimate, rel=1e-10, abs=1e-16)


def test_probe_definitions(probes):
    base = probes[0]
    assert base.delta_phi == base.phi_plus - base.phi_minus
    assert base.lambda_estimate == pytest.approx(base.delta_phi / (2 * np.sqrt(base.n_total)))
    assert base.imbalance == pytest.approx(np.sqrt(base.n_total) / 4)


def test_swapping_probes_negates_delta_phi(ci_small):
    _, p, g, gs = ci_small
    N = p.n_atoms
    out = {}
    for sign in (+1, -1):
        seq = SEQ.with_first_pulse(probe_theta(N, sign))
        out[sign] = relative_phase_trace(p, g, gs.psi, seq, 1e-6, 1e-4)[1][-1]
    swapped = PhaseDiffusionProbe(np.sqrt(N) / 4, out[-1], out[+1], N, SEQ.duration)
    direct = PhaseDiffusionProbe(np.sqrt(N) / 4, out[+1], out[-1], N, SEQ.duration)
    assert swapped.delta_phi == -direct.delta_phi
    assert abs(swapped.lambda_estimate) == abs(direct.lambda_estimate)


def test_probe_populations():
    N = 1e4
    for sign in (+1, -1):
        th = probe_theta(N, sign)
        # cos^2 - sin^2 of theta/2 sets the fractional imbalance
        assert N * np.cos(th) == pytest.approx(sign * np.sqrt(N) / 2)
    with pytest.raises(ConfigError):
        probe_theta(0.1, 1)


def test_phase_probe_needs_enough_atoms(ci_small):
    _, p, g, gs = ci_small
    q = PhysicsParams(omega=p.omega, n_atoms=10.0)
    with pytest.raises(ConfigError):
        lambda_from_phase_diffusion(q, g, gs.psi, SEQ, 1e-6, 1e-4)


def test_phase_tracking_rejects_non_pi_interior_pulses(ci_small):
    _, p, g, gs = ci_small
    seq = PulseSequence((PulseSpec(np.pi / 2, 0, 0.0), PulseSpec(1.0, 0, 1e-4)), 2e-4)
    with pytest.raises(ConfigError):
        relative_phase_trace(p, g, gs.psi, seq, 1e-6, 1e-4)


def test_phase_trace_is_continuous(ci_small):
    _, p, g, gs = ci_small
    t, ph, _ = relative_phase_trace(p, g, gs.psi, canonical_sequence(1e-3), 1e-6, 2e-5)
    i = int(np.flatnonzero(np.diff(t) == 0)[0])       # pulse instant, sampled twice
    assert ph[i + 1] == pytest.approx(-ph[i], abs=1e-9)
    steps = np.abs(np.diff(ph))
    steps[i] = 0.0
    assert steps.max() < 0.1


def test_prediction_regimes():
    N = 1.5e5
    th = np.linspace(0, np.pi, 100, endpoint=False)
    flat = predict_squeezing(0.0, N, th)
    np.testing.assert_allclose(flat.v, 1.0, atol=1e-12)
    assert flat.regime == "under-squeezed"
    opt = predict_squeezing(0.6 * N ** (-2 / 3), N, th)
    assert opt.regime == "near-optimal"
    assert opt.v_min == pytest.approx(N ** (-2 / 3), rel=0.25)
    assert predict_squeezing(1e-2, N, th).regime == "over-squeezed"


def test_prediction_for_reported_lambda():
    N = 1.5e5
    pred = predict_squeezing(9.18e-6, N, np.linspace(0, np.pi, 100, endpoint=False))
    assert pred.ratio_to_opt < 0.5
    assert 0.0 < pred.theta_opt < 0.2 * np.pi
