import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oatbec.errors import ConfigError, TruncationError
from oatbec.twomode import (READOUT_PHI, ChiTrace, TwoModeState, chi_integrals, fock_oracle,
                            minimize_over_theta, optimal_squeezing, quadrature_variance, kerr_expectations,
                            two_mode_variance, variance_from_moments)

GRID_N = (5, 20, 50)
GRID_LAM = (0.0, 1e-3, 0.05)
GRID_THETA = (0.0, 0.1 * np.pi, 0.5 * np.pi)


@pytest.mark.parametrize("N", GRID_N)
@pytest.mark.parametrize("lam", GRID_LAM)
def test_closed_form_matches_fock_oracle(N, lam):
    oracle = fock_oracle(TwoModeState.echo(N, lam))
    th = np.array(GRID_THETA)
    np.testing.assert_allclose(two_mode_variance(N, lam, th), oracle.variance(th), rtol=0, atol=1e-9)


@pytest.mark.parametrize("phi", [0.0, 0.3, -np.pi / 2, 2.0])
def test_general_phase_matches_oracle(phi):
    oracle = fock_oracle(TwoModeState.echo(20, 0.05))
    th = np.linspace(0, np.pi, 9)
    np.testing.assert_allclose(two_mode_variance(20, 0.05, th, phi), oracle.variance(th, phi), atol=1e-9)


def test_without_echo_the_twist_term_flips():
    # the bare pi/2 state squeezes at -theta for the same readout phase
    N, lam = 20, 0.05
    th = np.linspace(0, np.pi, 7)
    bare = fock_oracle(TwoModeState.split(N, lam)).variance(th)
    np.testing.assert_allclose(bare, two_mode_variance(N, lam, -th), atol=1e-9)


@pytest.mark.parametrize("N,lam", [(20, 0.05), (5, 1e-3), (50, 0.02)])
def test_kerr_moments_values_match_fock_sums(N, lam):
    for state in (TwoModeState.split(N, lam), TwoModeState.echo(N, lam)):
        closed = kerr_expectations(state)
        brute = fock_oracle(state).expectations()
        for k, v in closed.items():
            assert abs(v - brute[k]) <= 1e-10 * max(1.0, abs(v)), k


def test_kerr_moments_zero_lambda_has_no_dephasing():
    s = TwoModeState(1.3 + 0.2j, -0.4 + 2.0j, 0.0, 0.0)
    m = kerr_expectations(s)
    assert m["ad_b"] == pytest.approx(np.conj(s.alpha) * s.beta, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(ar=st.floats(-3, 3), ai=st.floats(-3, 3), br=st.floats(-3, 3), bi=st.floats(-3, 3),
       lam=st.floats(-0.5, 0.5))
def test_kerr_moments_properties(ar, ai, br, bi, lam):
    s = TwoModeState(complex(ar, ai), complex(br, bi), lam, 0.0)
    m = kerr_expectations(s)
    assert m["bd_a"] == np.conj(m["ad_b"])
    na = abs(s.alpha) ** 2
    assert m["ad_a_ad_a"] == pytest.approx(na * na + na, rel=1e-14, abs=1e-14)


def test_second_route_from_moments():
    for N, lam in [(20, 0.05), (1e4, 1e-4), (1.5e5, 9.18e-6)]:
        m = kerr_expectations(TwoModeState.echo(N, lam))
        th = np.linspace(0, np.pi, 41)
        np.testing.assert_allclose(variance_from_moments(m, th), two_mode_variance(N, lam, th),
                                   rtol=1e-8, atol=1e-8)


def test_trivial_limits():
    th = np.linspace(0, np.pi, 100)
    np.testing.assert_allclose(two_mode_variance(1e5, 0.0, th), 1.0, atol=1e-12)
    lams = np.linspace(0, 0.1, 100)
    np.testing.assert_allclose([two_mode_variance(1e5, lam, 0.0) for lam in lams], 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(N=st.floats(1, 1e6), lam=st.floats(0, 0.01), th=st.floats(-10, 10), phi=st.floats(-4, 4))
def test_period_pi_in_theta(N, lam, th, phi):
    a = two_mode_variance(N, lam, th, phi)
    b = two_mode_variance(N, lam, th + np.pi, phi)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=60, deadline=None)
@given(N=st.floats(10, 1e6), lam=st.floats(0, 0.01), th=st.floats(0, np.pi))
def test_readout_phase_shift_mirrors_theta(N, lam, th):
    a = two_mode_variance(N, lam, th, READOUT_PHI)
    b = two_mode_variance(N, lam, -th, READOUT_PHI + np.pi)
    assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_small_lambda_expansion():
    N = 1e4
    th = np.linspace(0.01, np.pi - 0.01, 50)
    for lam in (1e-5, 1e-4, 1e-3):
        assert lam ** 2 * N <= 0.01
        exact = two_mode_variance(N, lam, th)
        approx = two_mode_variance(N, lam, th, small_lambda=True)
        np.testing.assert_allclose(approx, exact, rtol=0.01)
    with pytest.raises(ValueError):
        two_mode_variance(N, 1e-4, th, 0.0, small_lambda=True)


@pytest.mark.parametrize("N", [5, 20, 50])
def test_quadrature_variance_expansion(N):
    for lam in (1e-4, 1e-3, 0.1 / N):
        assert lam ** 2 * N ** 2 <= 0.01
        brute = fock_oracle(TwoModeState.split(N, lam)).quadrature_variance()
        assert brute == pytest.approx(quadrature_variance(N, lam), rel=1e-9)
        assert brute == pytest.approx(N + 4 * lam ** 2 * N ** 3, rel=0.01)


def test_oracle_truncation_signal():
    with pytest.raises(TruncationError):
        fock_oracle(TwoModeState.split(50, 0.01), n_max=30)


def test_oracle_zero_lambda_is_coherent():
    o = fock_oracle(TwoModeState.split(20, 0.0))
    m = o.expectations()
    assert m["ad_b"] == pytest.approx(np.conj(np.sqrt(10)) * (-1j * np.sqrt(10)), abs=1e-12)
    np.testing.assert_allclose(o.variance(np.linspace(0, np.pi, 5)), 1.0, atol=1e-12)


@pytest.mark.parametrize("N", [1e4, 1e5, 1e6])
def test_optimum_follows_asymptotics(N):
    opt = optimal_squeezing(N)
    assert opt.lambda_opt == pytest.approx(opt.lambda_asymptotic, rel=0.25)
    assert opt.v_min == pytest.approx(opt.v_asymptotic, rel=0.25)
    assert minimize_over_theta(N, opt.lambda_opt / 2)[0] > opt.v_min
    assert minimize_over_theta(N, 2 * opt.lambda_opt)[0] > opt.v_min


def test_optimum_needs_large_n():
    with pytest.raises(ConfigError):
        optimal_squeezing(50)


def test_paper_lambda_gives_small_positive_theta():
    v, th = minimize_over_theta(1.5e5, 9.18e-6)
    assert 0 < th < 0.25 * np.pi
    assert v < 1


def test_chi_integrals_constant_rates():
    windows = [(0.0, 2e-3), (2e-3, 4e-3)]
    tr = ChiTrace.constant(3.0, 2.0, 1.5, windows)
    ci = chi_integrals(tr)
    assert ci.lambda1 == pytest.approx((3.0 - 1.5) * 2e-3 + (2.0 - 1.5) * 2e-3, rel=1e-14)
    assert ci.lambda1 == pytest.approx(ci.lambda2)
    assert ci.lam == pytest.approx((3.0 + 2.0 - 2 * 1.5) * 2e-3, rel=1e-14)
    assert not ci.asymmetric


def test_chi_integrals_symmetric_scattering():
    ci = chi_integrals(ChiTrace.constant(1.0, 1.0, 1.0, [(0.0, 1e-3), (1e-3, 2e-3)]))
    assert ci.lam == 0 and ci.asymmetry == 0


def test_chi_integrals_flags_asymmetry_and_coverage():
    t = np.linspace(0, 1e-3, 5)
    a = np.tile([5.0, 1.0, 1.0], (5, 1))
    ci = chi_integrals(ChiTrace([(0.0, 1e-3)], [(t, a)]))
    assert ci.asymmetric
    with pytest.raises(ValueError):
        chi_integrals(ChiTrace([(0.0, 2e-3)], [(t, a)]))


def test_chi_trace_csv_header():
    text = ChiTrace.constant(1.0, 2.0, 3.0, [(0.0, 1.0)], samples=3).to_csv()
    assert text.splitlines()[0] == "window,t_s,chi_aa_rad_per_s,chi_bb_rad_per_s,chi_ab_rad_per_s"
    assert len(text.splitlines()) == 4
