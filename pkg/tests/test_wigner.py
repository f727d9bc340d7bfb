import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oatbec.errors import ConfigError, IntegrationError
from oatbec.grid import make_grid
from oatbec.meanfield import (FieldPair, PhysicsParams, PulseSequence, PulseSpec, apply_pulse,
                              canonical_sequence, evolve_gpe, ground_state)
from oatbec.wigner import (CSV_COLUMNS, MomentAccumulator, WignerEnsembleConfig, corrected_moments,
                           evolve_tw, field_features, moments_to_csv, rotated_difference, run_ensemble,
                           sample_initial, sample_noise, trajectory_rng)

W = 2 * np.pi * 500


@pytest.fixture(scope="module")
def small():
    p = PhysicsParams(omega=(W,) * 3, n_atoms=2e3)
    g = make_grid("spherical1d", [32], [6e-6])
    return p, g, ground_state(p, g).psi


def _cfg(small, n=12, seed=3, batch=4, duration=2e-4, **kw):
    p, g, psi = small
    seq = canonical_sequence(duration / 2)
    return WignerEnsembleConfig(p, g, psi, seq, (0.0, duration / 2, duration), n, seed, 1e-6, batch, **kw)


def test_rng_is_pure_function_of_seed_and_index():
    a = trajectory_rng(7, 3).standard_normal(5)
    np.testing.assert_array_equal(a, trajectory_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, trajectory_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, trajectory_rng(8, 3).standard_normal(5))


@settings(max_examples=10, deadline=None)
@given(n=st.sampled_from([8, 16, 64]), seed=st.integers(0, 2 ** 63))
def test_noise_quadrature_law(n, seed):
    g = make_grid("spherical1d", [n], [5e-6])
    rng = trajectory_rng(seed, 0)
    eta = np.stack([sample_noise(g, rng) for _ in range(4000 // n + 200)])
    q = np.concatenate([eta.real.reshape(-1), eta.imag.reshape(-1)])
    se = 0.25 * np.sqrt(2 / q.size)
    assert abs(q.var() - 0.25) < 4 * se
    # distinct points and components are uncorrelated
    x = eta.real.reshape(eta.shape[0], -1)
    c = np.corrcoef(x.T)
    off = c[~np.eye(c.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) < 6 / np.sqrt(eta.shape[0])


def test_initial_samples(small):
    p, g, psi = small
    n = 3000
    fields = np.stack([sample_initial(g, psi, p.n_atoms, trajectory_rng(11, i)).psi for i in range(n)], axis=1)
    mean_a = fields[0].mean(axis=0)
    np.testing.assert_allclose(mean_a * np.sqrt(g.weights), np.sqrt(p.n_atoms) * psi * np.sqrt(g.weights),
                               atol=4 * np.sqrt(0.5 / n))
    wb = np.sum(np.abs(fields[1]) ** 2 * g.weights, axis=-1)
    M = g.size
    assert abs(wb.mean() - M / 2) < 3 * wb.std(ddof=1) / np.sqrt(n)
    per_point = np.abs(fields[1] * np.sqrt(g.weights)) ** 2
    assert np.all(np.abs(per_point.mean(axis=0) - 0.5) < 4 * per_point.std(axis=0, ddof=1) / np.sqrt(n))


def test_noise_free_tw_is_gpe_up_to_global_phase():
    p = PhysicsParams(omega=(W,) * 3, n_atoms=1e3)
    g = make_grid("cartesian3d", [8, 8, 8], [8e-6] * 3)
    psi = ground_state(p, g).psi
    f = apply_pulse(FieldPair.from_components(np.sqrt(p.n_atoms) * psi, 0 * psi, g), PulseSpec(np.pi / 2))
    t = 5e-5
    a = evolve_gpe(f, p, t, 1e-6)
    b = evolve_tw(f, p, t, 1e-6)
    U = p.U
    from oatbec.constants import HBAR
    shift = np.array([U[0, 0] + U[0, 1] / 2, U[1, 1] + U[0, 1] / 2]) / g.dv
    expect = a.psi * np.exp(1j * shift * t / HBAR)[:, None, None, None]
    np.testing.assert_allclose(b.psi, expect, atol=1e-9 * np.abs(a.psi).max())


def test_features_match_definitions(small):
    p, g, psi = small
    f = sample_initial(g, psi, p.n_atoms, trajectory_rng(1, 0))
    x = field_features(f)
    assert x[0] == pytest.approx(np.sum(np.abs(f.psi_a) ** 2 * g.weights))
    assert complex(x[2], x[3]) == pytest.approx(np.sum(np.conj(f.psi_a) * f.psi_b * g.weights))


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0, 2 * np.pi, exclude_max=True), phi=st.floats(-4, 4), seed=st.integers(0, 1000))
def test_rotated_difference_matches_pulse(theta, phi, seed):
    g = make_grid("spherical1d", [8], [3e-6])
    r = np.random.default_rng(seed)
    f = FieldPair(r.standard_normal((2, 8)) + 1j * r.standard_normal((2, 8)), g)
    after = field_features(apply_pulse(f, PulseSpec(theta, phi)))
    pred = rotated_difference(field_features(f), theta, phi)
    assert pred == pytest.approx(after[0] - after[1], abs=1e-9 * (abs(pred) + 1))


def _random_acc(seed, indices, n_times=2):
    r = np.random.default_rng(seed)
    return MomentAccumulator(np.linspace(0, 1, n_times), np.array(indices),
                             r.standard_normal((n_times, len(indices), 4)) * 1e5)


@settings(max_examples=40, deadline=None)
@given(st.permutations(list(range(12))), st.integers(1, 10), st.integers(1, 10), st.integers(0, 10 ** 6))
def test_merge_is_associative_and_order_free(perm, i, j, seed):
    i, j = min(i, j), max(i, j) + 1
    full = _random_acc(seed, range(12))
    part = lambda idx: MomentAccumulator(full.times, np.array(idx), full.rows[:, idx, :])
    a, b, c = part(perm[:i]), part(perm[i:j]), part(perm[j:])
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    swapped = c.merge(a).merge(b)
    for other in (right, swapped):
        np.testing.assert_array_equal(left.rows, other.rows)
        np.testing.assert_array_equal(left.sums(), other.sums())


def test_merge_rejects_overlap_and_schedule_mismatch():
    a = _random_acc(0, [0, 1])
    with pytest.raises(ValueError):
        a.merge(_random_acc(1, [1, 2]))
    with pytest.raises(ValueError):
        a.merge(_random_acc(1, [5], n_times=3))


def test_accumulator_round_trip(tmp_path):
    a = _random_acc(4, [3, 1, 2])
    a.save(tmp_path / "acc.npz")
    b = MomentAccumulator.load(tmp_path / "acc.npz")
    assert a.digest() == b.digest()


def test_ensemble_reproducible_and_worker_independent(small):
    cfg = _cfg(small)
    a = run_ensemble(cfg, workers=1)
    b = run_ensemble(cfg, workers=1)
    c = run_ensemble(cfg, workers=2)
    assert a.digest() == b.digest() == c.digest()
    assert a.count == 12 and list(a.indices) == list(range(12))


def test_batched_equals_single_batch(small):
    a = run_ensemble(_cfg(small, n=8, batch=2))
    b = run_ensemble(_cfg(small, n=8, batch=8))
    np.testing.assert_allclose(a.rows, b.rows, rtol=1e-12, atol=0)
    np.testing.assert_allclose(a.sums(), b.sums(), rtol=1e-12)


def test_vacuum_has_zero_population():
    g = make_grid("spherical1d", [32], [5e-6])
    p = PhysicsParams(omega=(W,) * 3, n_atoms=1.0)
    rows = np.stack([field_features(sample_initial(g, np.zeros(32), 0.0, trajectory_rng(5, i)))
                     for i in range(400)])
    acc = MomentAccumulator([0.0], np.arange(400), rows[None])
    m = corrected_moments(acc, g)
    assert abs(m.N_a) < 3 * m.N_a_se and abs(m.N_b) < 3 * m.N_b_se


def test_shot_noise_calibration_small(small):
    p, g, psi = small
    seq = PulseSequence((PulseSpec(np.pi / 2, 0.0, 0.0),), 0.0)
    cfg = WignerEnsembleConfig(p, g, psi, seq, (0.0,), 400, 21, 1e-6, 100)
    m = corrected_moments(run_ensemble(cfg), g)
    assert abs(m.v - 1) < 3 * m.v_se
    assert abs(m.N_a + m.N_b - p.n_atoms) < 3 * np.hypot(m.N_a_se, m.N_b_se) + 1e-6 * p.n_atoms
    assert abs(m.VJx - p.n_atoms / 4) < 3 * m.VJx_se


def test_failure_reports_trajectory_and_step(small):
    p, g, psi = small
    bad = psi.copy()
    bad[5] = np.inf
    seq = canonical_sequence(1e-5)
    cfg = WignerEnsembleConfig(p, g, bad, seq, (0.0, 2e-5), 4, 0, 1e-6, 2)
    with pytest.raises(IntegrationError) as err, np.errstate(invalid="ignore"):
        run_ensemble(cfg)
    assert err.value.trajectory == 0
    assert err.value.step is not None


def test_config_validation(small):
    with pytest.raises(ConfigError):
        _cfg(small, n=1)
    with pytest.raises(ConfigError):
        _cfg(small, seed=-1)


def test_moments_csv(small):
    acc = run_ensemble(_cfg(small, n=4, batch=4))
    text = moments_to_csv([corrected_moments(acc, small[1], k) for k in range(3)])
    lines = text.splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 4
