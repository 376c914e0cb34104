import numpy as np
import pytest

from biased_sgd import (OracleBounds, additive_bias_oracle, exact_oracle,
                        gaussian_noise_oracle, gaussian_smoothing_oracle,
                        gs_bounds, huber_shifted_oracle, inexact_oracle,
                        make_nesterov_worst, synthetic_tight_oracle,
                        tightness_oracle, uniform_direction)
from biased_sgd.problems import Problem
from biased_sgd._rng import stream


def test_bounds_validation():
    with pytest.raises(ValueError):
        OracleBounds(m=1.0)
    with pytest.raises(ValueError):
        OracleBounds(m=-0.1)
    with pytest.raises(ValueError):
        OracleBounds(zeta_sq=-1.0)
    with pytest.raises(ValueError):
        OracleBounds(sigma_sq=-1e-9)


def test_noise_bound_vs_gradient():
    b = OracleBounds(m=0.5, zeta_sq=2.0, M=3.0, sigma_sq=1.0)
    M_bar, s_bar = b.noise_bound_vs_gradient()
    assert M_bar == 2 * 3.0 * 1.5
    assert s_bar == 1.0 + 2 * 3.0 * 2.0


def test_exact_oracle_values():
    p = make_nesterov_worst(2)
    o = exact_oracle(p)
    rng = stream(0)
    g = o.query(np.array([1.0, 0.0]), rng)
    assert np.allclose(g, [2.0, -1.0], atol=0)
    assert np.allclose(o.query(p.x_star, rng), 0.0, atol=0)
    assert o.bounds == OracleBounds(0.0, 0.0, 0.0, 0.0)
    assert o.deterministic


def test_gaussian_noise_second_moment():
    p = make_nesterov_worst(10)
    o = gaussian_noise_oracle(p, 1.0)
    x = p.default_x0
    G = o.query_many(x, 100_000, stream(1))
    n = G - p.grad(x)
    emp = float(np.mean(np.einsum("ij,ij->i", n, n)))
    assert 0.97 <= emp <= 1.03  # chi-square concentration at 1e6 dof
    mean_norm = float(np.linalg.norm(n.mean(axis=0)))
    assert mean_norm < 5 * np.sqrt(1.0 / 100_000)


def test_gaussian_noise_zero_is_identity():
    p = make_nesterov_worst(4)
    inner = exact_oracle(p)
    assert gaussian_noise_oracle(p, 0.0, inner) is inner
    with pytest.raises(ValueError):
        gaussian_noise_oracle(p, -1.0)


def test_additive_bias_oracle():
    p = make_nesterov_worst(10)
    inner = exact_oracle(p)
    assert additive_bias_oracle(inner, 0.0, uniform_direction(10)) is inner
    e1 = np.zeros(10)
    e1[0] = 1.0
    o = additive_bias_oracle(inner, 0.1, e1)
    g = o.query(p.x_star, stream(2))
    expected = np.zeros(10)
    expected[0] = 0.1
    assert np.allclose(g, expected, atol=0)
    # squared bias is exactly 0.01 everywhere
    rng = stream(3)
    for _ in range(10):
        x = rng.standard_normal(10)
        dev = o.expected_query(x) - p.grad(x)
        assert dev @ dev == pytest.approx(0.01, rel=1e-12)
    assert o.bounds.zeta_sq == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ValueError):
        additive_bias_oracle(inner, 0.1, np.ones(10))  # not unit norm


def test_tightness_oracle_bias_exactly_tight():
    p = make_nesterov_worst(10)
    m, zeta_sq = 0.5, 0.01
    b = np.sqrt(zeta_sq) * uniform_direction(10)
    o = tightness_oracle(p, m, zeta_sq, b)
    rng = stream(4)
    for _ in range(20):
        x = 3 * rng.standard_normal(10)
        g = p.grad(x)
        dev = o.query(x, rng) - g
        assert dev @ dev == pytest.approx(zeta_sq + m * (g @ g), rel=1e-12)
    # rho(x*) = 1, so the query at the optimum is exactly b
    assert np.allclose(o.query(p.x_star, rng), b, atol=0)
    assert o.bounds == OracleBounds(m=m, zeta_sq=zeta_sq)


def test_tightness_oracle_validation():
    p = make_nesterov_worst(4)
    with pytest.raises(ValueError):
        tightness_oracle(p, 0.5, 0.0, np.zeros(4))
    with pytest.raises(ValueError):
        tightness_oracle(p, 0.5, 0.01, uniform_direction(4))  # wrong norm


def _linear_problem(dim, c):
    c = np.asarray(c, dtype=float)
    return Problem(
        name="linear", dim=dim,
        value=lambda x: float(c @ x),
        grad=lambda x: c.copy(),
        smoothness_L=1.0,
        value_many=lambda X: X @ c,
    )


def test_gaussian_smoothing_unbiased_on_linear():
    c = np.array([1.5, -2.0, 0.5])
    p = _linear_problem(3, c)
    o = gaussian_smoothing_oracle(p, 0.1)
    G = o.query_many(np.zeros(3), 200_000, stream(5))
    mean = G.mean(axis=0)
    se = G.std(axis=0, ddof=1) / np.sqrt(len(G))
    assert np.all(np.abs(mean - c) < 5 * se)


def test_gaussian_smoothing_bounds_formula():
    p = make_nesterov_worst(10)
    L = p.smoothness_L
    b = gs_bounds(10, L, 0.01)
    assert b.m == 0.0
    assert b.zeta_sq == pytest.approx((1e-4 / 4) * L**2 * 13**3, rel=1e-12)
    assert b.M == 4 * 14
    assert b.sigma_sq == pytest.approx(3 * 1e-4 * L**2 * 14**3, rel=1e-12)
    with pytest.raises(ValueError):
        gaussian_smoothing_oracle(p, 0.0)


def test_gaussian_smoothing_bias_within_envelope():
    p = make_nesterov_worst(2)
    tau = 0.1
    o = gaussian_smoothing_oracle(p, tau)
    x = np.array([0.7, -0.4])
    G = o.query_many(x, 1_000_000, stream(6))
    mean = G.mean(axis=0)
    dev = mean - p.grad(x)
    envelope = (tau**2 / 4) * p.smoothness_L**2 * 125  # (d+3)^3 at d=2
    assert float(dev @ dev) <= envelope


def test_inexact_oracle():
    p = make_nesterov_worst(10)
    o0 = inexact_oracle(p, 0.0)
    rng = stream(7)
    x = p.default_x0
    assert np.allclose(o0.query(x, rng), p.grad(x), atol=0)
    o = inexact_oracle(p, 0.1)
    assert o.bounds.zeta_sq == pytest.approx(2 * 0.1 * p.smoothness_L, rel=1e-12)
    assert o.deterministic
    dev = o.query(x, rng) - p.grad(x)
    assert dev @ dev == pytest.approx(o.bounds.zeta_sq, rel=1e-12)
    os = inexact_oracle(p, 0.1, noise_sigma_sq=1.0)
    assert os.bounds == OracleBounds(0.0, 2 * 0.1 * p.smoothness_L, 0.0, 1.0)
    assert not os.deterministic
    with pytest.raises(ValueError):
        inexact_oracle(p, -0.1)


def test_huber_shifted_oracle():
    p, o = huber_shifted_oracle()
    rng = stream(8)
    assert o.query(np.array([2.0]), rng)[0] == -1.0
    assert o.query(np.array([0.0]), rng)[0] == -2.0
    assert o.bounds == OracleBounds(0.0, 4.0, 0.0, 0.0)
    assert p.name == "huber"


def test_variance_bounds_battery():
    """Assumption-3/4 and the gradient-referenced composition at random points."""
    p = make_nesterov_worst(10)
    oracles = [
        gaussian_noise_oracle(p, 1.0),
        additive_bias_oracle(gaussian_noise_oracle(p, 1.0), 0.1,
                             uniform_direction(10)),
        synthetic_tight_oracle(p, 0.3, 0.05, 2.0, 0.5),
    ]
    rng = stream(9)
    for o in oracles:
        b = o.bounds
        M_bar, s_bar = b.noise_bound_vs_gradient()
        for _ in range(20):
            x = 2 * rng.standard_normal(10)
            g = p.grad(x)
            gns = float(g @ g)
            G = o.query_many(x, 20_000, stream(10))
            mean = G.mean(axis=0)
            bias = (o.expected_query(x) - g) if o.expected_query else (mean - g)
            # Assumption 4
            assert float(bias @ bias) <= b.m * gns + b.zeta_sq + 1e-9
            dev = G - mean
            q = np.einsum("ij,ij->i", dev, dev)
            var = float(q.mean())
            se = float(q.std(ddof=1) / np.sqrt(len(q)))
            mg = g + bias
            # Assumption 3 and its gradient-referenced corollary
            assert var <= b.M * float(mg @ mg) + b.sigma_sq + 5 * se
            assert var <= M_bar * gns + s_bar + 5 * se


def test_query_stream_determinism():
    p = make_nesterov_worst(10)
    o1 = gaussian_noise_oracle(p, 1.0)
    o2 = gaussian_noise_oracle(p, 1.0)
    r1, r2 = stream(42), stream(42)
    x = p.default_x0
    for _ in range(50):
        assert np.array_equal(o1.query(x, r1), o2.query(x, r2))


def test_query_many_matches_expected_mean():
    p = make_nesterov_worst(10)
    o = additive_bias_oracle(gaussian_noise_oracle(p, 1.0), 0.1,
                             uniform_direction(10))
    x = 2 * p.default_x0
    G = o.query_many(x, 100_000, stream(11))
    mean = G.mean(axis=0)
    se = G.std(axis=0, ddof=1) / np.sqrt(len(G))
    assert np.all(np.abs(mean - o.expected_query(x)) < 5 * se)


def test_synthetic_tight_oracle_is_exactly_tight():
    p = make_nesterov_worst(10)
    o = synthetic_tight_oracle(p, 0.4, 0.02, 1.5, 0.3)
    rng = stream(12)
    for _ in range(5):
        x = rng.standard_normal(10)
        g = p.grad(x)
        bias = o.expected_query(x) - g
        assert float(bias @ bias) == pytest.approx(
            0.4 * float(g @ g) + 0.02, rel=1e-12)
        G = o.query_many(x, 5000, stream(13))
        dev = G - o.expected_query(x)
        q = np.einsum("ij,ij->i", dev, dev)
        mg = o.expected_query(x)
        target = 1.5 * float(mg @ mg) + 0.3
        # per-draw equality by construction
        assert np.allclose(q, target, rtol=1e-10)
