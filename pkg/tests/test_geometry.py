import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stabsaddle import geometry as G
from stabsaddle import oracles

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def vec(d):
    return arrays(np.float64, d, elements=finite)


# ---------------------------------------------------------------- divergences


def test_bregman_euclidean_identity():
    dgf = G.DistanceGenerator.euclidean(np.zeros(2))
    assert G.bregman_divergence(dgf, [3, -1], [3, -1]) == 0.0


def test_bregman_entropy_identity():
    dgf = G.DistanceGenerator.negative_entropy(2)
    assert G.bregman_divergence(dgf, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)


def test_bregman_euclidean_half_square():
    dgf = G.DistanceGenerator.euclidean(np.zeros(2))
    assert G.bregman_divergence(dgf, [1, 0], [0, 0]) == pytest.approx(0.5)


def test_bregman_entropy_rejects_zero_reference():
    dgf = G.DistanceGenerator.negative_entropy(2)
    with pytest.raises(G.DomainError):
        G.bregman_divergence(dgf, [0.5, 0.5], [1.0, 0.0])


def test_bregman_dimension_mismatch():
    dgf = G.DistanceGenerator.euclidean(np.zeros(2))
    with pytest.raises(ValueError):
        G.bregman_divergence(dgf, [1, 0, 0], [0, 0])


def test_bregman_entropy_matches_kl():
    rng = np.random.default_rng(0)
    dgf = G.DistanceGenerator.negative_entropy(5)
    for _ in range(50):
        p, q = rng.dirichlet(np.ones(5), size=2)
        assert G.bregman_divergence(dgf, p, q) == pytest.approx(float(np.sum(p * np.log(p / q))), abs=1e-13)


def test_bregman_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    dgf = G.DistanceGenerator.quadratic(A)
    d = np.array([1.0, -2.0])
    assert G.bregman_divergence(dgf, d, [0, 0]) == pytest.approx(0.5 * d @ A @ d)
    assert dgf.strong_convexity_modulus == pytest.approx(np.linalg.eigvalsh(A)[0])


@given(st.integers(1, 6).flatmap(lambda d: st.tuples(vec(d), vec(d))))
def test_bregman_euclidean_is_half_squared_distance(pq):
    p, q = pq
    dgf = G.DistanceGenerator.euclidean(np.zeros(p.size))
    d = G.bregman_divergence(dgf, p, q)
    assert d >= 0
    assert d == pytest.approx(0.5 * float((p - q) @ (p - q)), rel=1e-12, abs=1e-12)
    assert G.bregman_divergence(dgf, p, p) == 0.0


@settings(max_examples=200)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_bregman_entropy_nonnegative(d, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(d), size=2)
    dgf = G.DistanceGenerator.negative_entropy(d)
    assert G.bregman_divergence(dgf, p, q) >= -1e-15
    assert G.bregman_divergence(dgf, p, p) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------- strong convexity


def test_strong_convexity_euclidean():
    rng = np.random.default_rng(1)
    dgf = G.DistanceGenerator.euclidean(np.zeros(3))
    pairs = [rng.normal(size=(2, 3)) for _ in range(100)]
    assert G.check_strong_convexity(dgf, G.NormTag.L2, 1.0, pairs)


def test_strong_convexity_pinsker():
    rng = np.random.default_rng(2)
    dgf = G.DistanceGenerator.negative_entropy(4)
    pairs = [rng.dirichlet(np.ones(4), size=2) for _ in range(1000)]
    assert G.check_strong_convexity(dgf, G.NormTag.L1, 1.0, pairs)


def test_strong_convexity_overclaimed_modulus():
    dgf = G.DistanceGenerator.euclidean(np.zeros(2))
    report = G.check_strong_convexity(dgf, G.NormTag.L2, 2.0, [([1, 0], [0, 0])])
    assert not report
    assert report.violations == [0]


def test_quadratic_rejects_indefinite():
    with pytest.raises(G.ParameterError):
        G.DistanceGenerator.quadratic([[1.0, 0.0], [0.0, -1.0]])


def test_dual_norms():
    v = np.array([3.0, -4.0])
    assert G.dual_norm(v, G.NormTag.L2) == pytest.approx(5.0)
    assert G.dual_norm(v, G.NormTag.L1) == pytest.approx(4.0)
    assert G.dual_norm(v, G.NormTag.LINF) == pytest.approx(7.0)


# ------------------------------------------------------------- Euclidean prox


def test_euclidean_prox_no_stabilizer():
    stab = G.Stabilizer(0.0, [5.0, 5.0])
    np.testing.assert_allclose(G.prox_euclidean_composite([1, 0], [2, 0], 0.5, stab), [0, 0])


def test_euclidean_prox_stabilized_example():
    stab = G.Stabilizer(1.0, [0.0, 0.0])
    np.testing.assert_allclose(G.prox_euclidean_composite([1, 0], [2, 0], 0.5, stab), [0, 0], atol=1e-15)


def test_euclidean_prox_stationary_point():
    stab = G.Stabilizer(3.0, [2.0, 2.0])
    np.testing.assert_allclose(G.prox_euclidean_composite([2, 2], [0, 0], 0.7, stab), [2, 2])


def test_euclidean_prox_rejects_bad_step():
    with pytest.raises(G.ParameterError):
        G.prox_euclidean_composite([1.0], [1.0], 0.0, G.Stabilizer(1.0, [0.0]))


def test_euclidean_prox_matches_first_order_conditions():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        d = int(rng.integers(1, 8))
        cur, g, c = rng.normal(size=(3, d))
        step, w = rng.uniform(0.01, 5.0), rng.uniform(0.0, 5.0)
        got = G.prox_euclidean_composite(cur, g, step, G.Stabilizer(w, c))
        np.testing.assert_allclose(got, oracles.euclidean_prox_first_order(cur, g, step, w, c), atol=1e-12, rtol=0)


# ------------------------------------------------------------------- KL prox


def test_kl_prox_zero_gradient_is_identity():
    cur = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(G.prox_kl_simplex(cur, np.zeros(3), 0.9), cur, atol=1e-15)


def test_kl_prox_constant_gradient_is_identity():
    cur = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(G.prox_kl_simplex(cur, np.full(3, -4.2), 2.0), cur, atol=1e-15)


def test_kl_prox_hand_example():
    out = G.prox_kl_simplex([0.5, 0.5], [np.log(2.0), 0.0], 1.0)
    np.testing.assert_allclose(out, [1 / 3, 2 / 3], atol=1e-15)


def test_kl_prox_rejects_boundary():
    with pytest.raises(G.DomainError):
        G.prox_kl_simplex([1.0, 0.0], [0.0, 0.0], 1.0)


@settings(max_examples=300)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1), st.floats(0.01, 5.0), st.floats(-50, 50))
def test_kl_prox_stays_on_simplex_and_is_shift_invariant(d, seed, step, shift):
    rng = np.random.default_rng(seed)
    cur = rng.dirichlet(np.ones(d))
    g = rng.normal(scale=10.0, size=d)
    p = G.prox_kl_simplex(cur, g, step)
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all(p > 0)
    np.testing.assert_allclose(G.prox_kl_simplex(cur, g + shift, step), p, atol=1e-12, rtol=0)


# ------------------------------------------------------------- sup-norm prox


def test_inf_prox_without_weight_is_gradient_step():
    np.testing.assert_allclose(G.prox_inf_norm_squared_composite([1.0, 2.0], [1.0, -1.0], 0.5, 0.0), [0.5, 2.5])


def test_inf_prox_scalar_example():
    np.testing.assert_allclose(G.prox_inf_norm_squared_composite([1.0], [0.0], 1.0, 1.0), [1 / 3])


def test_inf_prox_origin():
    np.testing.assert_array_equal(G.prox_inf_norm_squared_composite(np.zeros(3), np.zeros(3), 1.0, 2.0), 0.0)


def test_inf_prox_rejects_bad_step():
    with pytest.raises(G.ParameterError):
        G.prox_inf_norm_squared_composite([1.0], [0.0], -1.0, 1.0)


def test_inf_prox_two_coordinate_hand_example():
    # z = (3, 1), lam = 1: top coordinate alone gives t = 3 / 3 = 1, not below the second entry
    np.testing.assert_allclose(G.prox_inf_norm_squared_composite([3.0, 1.0], [0.0, 0.0], 1.0, 1.0), [1.0, 1.0])
    # z = (3, 2): one active gives t = 1 < 2, so both are active and t = 5 / 4
    np.testing.assert_allclose(G.prox_inf_norm_squared_composite([3.0, 2.0], [0.0, 0.0], 1.0, 1.0), [1.25, 1.25])


def test_inf_prox_local_optimality_probe():
    rng = np.random.default_rng(4)
    for d in (1, 3, 6):
        cur, g = rng.normal(size=(2, d))
        step, w = 0.7, 1.3
        v = G.prox_inf_norm_squared_composite(cur, g, step, w)
        base = oracles.inf_sq_objective(v, cur, g, step, w)
        probes = v + rng.normal(scale=1e-3, size=(10_000, d))
        D = probes - cur
        vals = probes @ g + w * np.abs(probes).max(axis=1) ** 2 + (D * D).sum(axis=1) / (2 * step)
        assert np.all(vals >= base - 1e-12)


def test_inf_prox_matches_brute_force_small_sample():
    rng = np.random.default_rng(5)
    for d in range(1, 6):
        for _ in range(10):
            cur, g = rng.normal(size=(2, d))
            step, w = rng.uniform(0.05, 2.0, size=2)
            fast = G.prox_inf_norm_squared_composite(cur, g, step, w)
            np.testing.assert_allclose(fast, oracles.brute_force_inf_sq_prox(cur, g, step, w), atol=1e-6, rtol=0)


@given(st.integers(1, 8).flatmap(vec), st.floats(0.01, 10.0))
def test_clip_level_satisfies_optimality(z, lam):
    # optimality of clip(z, tau): 2 lam tau = sum of the clipped excess
    tau = G.clip_level_inf_norm_squared(z, lam)
    excess = np.clip(np.abs(z) - tau, 0, None).sum()
    assert tau >= 0
    if np.abs(z).max() > 0:
        assert 2 * lam * tau == pytest.approx(excess, rel=1e-9, abs=1e-9)
    else:
        assert tau == 0


# ------------------------------------------------------------- dispatch


def test_composite_prox_euclidean_with_sup_stabilizer_matches_direct_objective():
    rng = np.random.default_rng(6)
    cur, g, c = rng.normal(size=(3, 4))
    dgf = G.DistanceGenerator.euclidean(np.zeros(4))
    stab = G.Stabilizer(0.8, c, G.StabilizerKind.LINF_SQUARED)
    v = G.composite_prox(dgf, cur, g, 0.5, stab)
    obj = lambda x: x @ g + stab.value(x) + ((x - cur) @ (x - cur)) / (2 * 0.5)
    for _ in range(2000):
        assert obj(v) <= obj(v + rng.normal(scale=1e-3, size=4)) + 1e-12


def test_composite_prox_quadratic_first_order_condition():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    dgf = G.DistanceGenerator.quadratic(A)
    cur, g, c = np.array([1.0, -1.0]), np.array([0.5, 2.0]), np.array([0.2, 0.1])
    step, w = 0.4, 1.5
    x = G.composite_prox(dgf, cur, g, step, G.Stabilizer(w, c))
    np.testing.assert_allclose(g + w * (x - c) + A @ (x - cur) / step, 0.0, atol=1e-12)


def test_composite_prox_entropy_rejects_active_stabilizer():
    dgf = G.DistanceGenerator.negative_entropy(2)
    with pytest.raises(G.ConfigurationError):
        G.composite_prox(dgf, [0.5, 0.5], [0.0, 0.0], 1.0, G.Stabilizer(1.0, [0.5, 0.5]))


def test_composite_prox_quadratic_rejects_sup_stabilizer():
    dgf = G.DistanceGenerator.quadratic(np.eye(2))
    with pytest.raises(G.ConfigurationError):
        G.composite_prox(dgf, [0.0, 0.0], [1.0, 0.0], 1.0, G.Stabilizer(1.0, [0, 0], G.StabilizerKind.LINF_SQUARED))
