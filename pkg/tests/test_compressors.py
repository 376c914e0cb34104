import itertools

import numpy as np
import pytest

from biased_sgd import (UnsupportedCompositionError, compressed_oracle,
                        exact_oracle, gaussian_noise_oracle,
                        make_nesterov_worst, rand_k, rand_k_compressor,
                        rand_k_unbiased, rand_k_unbiased_compressor,
                        scale_compressor, synthetic_tight_oracle, top_k,
                        top_k_compressor)
from biased_sgd.compressors import empirical_contraction
from biased_sgd.estimators import verify_declared
from biased_sgd._rng import stream


def enumerate_rand_k(g, k, scale=1.0):
    """Brute-force distribution of rand-k over all k-subsets (the test oracle)."""
    g = np.asarray(g, dtype=float)
    d = len(g)
    outputs = []
    for subset in itertools.combinations(range(d), k):
        out = np.zeros(d)
        out[list(subset)] = scale * g[list(subset)]
        outputs.append(out)
    return np.array(outputs)


def test_top_k_examples():
    assert np.array_equal(top_k(np.array([3.0, -1.0, 2.0]), 2), [3.0, 0.0, 2.0])
    g = np.array([0.3, -1.2, 5.0, 0.0])
    assert np.array_equal(top_k(g, 4), g)
    g = np.ones(4)
    err = top_k(g, 1) - g
    assert float(err @ err) == 3.0  # ((d-k)/d)||g||^2 exactly on constant vectors


def test_top_k_tie_break_lowest_index():
    g = np.array([1.0, -1.0, 1.0])
    assert np.array_equal(top_k(g, 1), [1.0, 0.0, 0.0])
    assert np.array_equal(top_k(g, 2), [1.0, -1.0, 0.0])


def test_top_k_k_range_errors():
    with pytest.raises(ValueError):
        top_k(np.ones(3), 0)
    with pytest.raises(ValueError):
        top_k(np.ones(3), 4)
    with pytest.raises(ValueError):
        rand_k(np.ones(3), 0, stream(0))


def test_top_k_deterministic_bound_random_vectors():
    rng = stream(1)
    d = 10
    for _ in range(10_000):
        g = rng.standard_normal(d)
        k = int(rng.integers(1, d + 1))
        err = top_k(g, k) - g
        assert float(err @ err) <= (d - k) / d * float(g @ g) + 1e-12


def test_top_k_permutation_and_sign_equivariance():
    rng = stream(2)
    for _ in range(200):
        g = rng.standard_normal(8)  # continuous, ties have measure zero
        k = int(rng.integers(1, 9))
        perm = rng.permutation(8)
        signs = rng.choice([-1.0, 1.0], size=8)
        lhs = top_k(signs * g[perm], k)
        rhs = signs * top_k(g, k)[perm]
        assert np.array_equal(lhs, rhs)


@pytest.mark.parametrize("d,k", [(d, k) for d in range(2, 7) for k in range(1, 7) if k <= d])
def test_rand_k_exact_identities_by_enumeration(d, k):
    rng = stream(3)
    g = rng.standard_normal(d)
    outs = enumerate_rand_k(g, k)
    mean = outs.mean(axis=0)
    assert np.allclose(mean, (k / d) * g, atol=1e-12)
    err = outs - g
    e_err = float(np.mean(np.einsum("ij,ij->i", err, err)))
    assert e_err == pytest.approx((d - k) / d * float(g @ g), abs=1e-12)
    assert float(mean @ mean) == pytest.approx((k / d) ** 2 * float(g @ g), abs=1e-12)
    e_sq = float(np.mean(np.einsum("ij,ij->i", outs, outs)))
    assert e_sq == pytest.approx((k / d) * float(g @ g), abs=1e-12)


def test_rand_k_linearity_by_enumeration():
    rng = stream(4)
    for d, k in [(3, 1), (4, 2), (5, 3)]:
        a, b = rng.standard_normal(d), rng.standard_normal(d)
        lhs = enumerate_rand_k(a + b, k).mean(axis=0)
        rhs = enumerate_rand_k(a, k).mean(axis=0) + enumerate_rand_k(b, k).mean(axis=0)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_rand_k_sampling_matches_enumeration():
    g = np.array([3.0, 0.0, 0.0])
    rng = stream(5)
    draws = np.array([rand_k(g, 1, rng) for _ in range(30_000)])
    assert np.allclose(draws.mean(axis=0), [1.0, 0.0, 0.0], atol=0.05)
    # every subset appears with the uniform frequency
    counts = (draws[:, 0] != 0).mean()
    assert counts == pytest.approx(1 / 3, abs=0.02)


def test_rand_k_k_equals_d_identity():
    g = np.arange(5.0)
    rng = stream(6)
    assert np.array_equal(rand_k(g, 5, rng), g)
    assert np.array_equal(rand_k_unbiased(g, 5, rng), g)


def test_rand_k_unbiased_enumeration():
    g = np.array([1.0, 0.0])
    outs = enumerate_rand_k(g, 1, scale=2.0)
    assert sorted(map(tuple, outs)) == [(0.0, 0.0), (2.0, 0.0)]
    assert np.allclose(outs.mean(axis=0), g, atol=1e-15)
    g = np.array([1.0, 1.0])
    outs = enumerate_rand_k(g, 1, scale=2.0)
    err = outs - g
    assert float(np.mean(np.einsum("ij,ij->i", err, err))) == pytest.approx(
        2.0, abs=1e-12)  # (d/k - 1) ||g||^2


def test_batch_rows_match_distributions():
    rng = stream(7)
    G = np.tile(np.array([1.0, 2.0, 3.0, 4.0]), (40_000, 1))
    c = rand_k_compressor(2, 4)
    out = c.apply_rows(G, rng)
    assert np.allclose(out.mean(axis=0), 0.5 * G[0], atol=0.05)
    kept = (out != 0).sum(axis=1)
    assert np.all(kept == 2)
    ct = top_k_compressor(2, 4)
    out_t = ct.apply_rows(G, rng)
    assert np.array_equal(out_t[0], [0.0, 0.0, 3.0, 4.0])


def test_contraction_invariant():
    rng = stream(8)
    for c in (top_k_compressor(3, 10), scale_compressor(0.36, 10)):
        worst = empirical_contraction(c, rng, n_vectors=1000)
        assert worst <= (1 - c.delta) + 1e-12  # deterministic: exact, no slack
    c = rand_k_compressor(3, 10)
    worst = empirical_contraction(c, rng, n_vectors=200, samples=400)
    assert worst <= (1 - c.delta) + 5 * (1 - c.delta) / np.sqrt(400)


def test_composed_bounds_top_k():
    p = make_nesterov_worst(10)
    o = compressed_oracle(top_k_compressor(1, 10), exact_oracle(p), p)
    assert o.bounds.m == pytest.approx(0.9, rel=1e-12)
    assert o.bounds.zeta_sq == 0.0
    assert o.bounds.M == 0.0
    assert o.bounds.sigma_sq == 0.0


def test_composed_bounds_rand_k_stochastic():
    p = make_nesterov_worst(10)
    noisy = gaussian_noise_oracle(p, 1.0)
    o = compressed_oracle(rand_k_compressor(1, 10), noisy, p)
    assert o.bounds.M == pytest.approx(9.0, rel=1e-12)
    assert o.bounds.sigma_sq == pytest.approx(0.1, rel=1e-12)
    assert o.bounds.m == pytest.approx(0.9, rel=1e-12)
    ou = compressed_oracle(rand_k_unbiased_compressor(1, 10), noisy, p)
    assert ou.bounds.m == 0.0
    assert ou.bounds.M == pytest.approx(9.0, rel=1e-12)
    assert ou.bounds.sigma_sq == pytest.approx(10.0, rel=1e-12)


def test_composed_bounds_delta_one_is_exact():
    p = make_nesterov_worst(10)
    o = compressed_oracle(scale_compressor(1.0, 10), exact_oracle(p), p)
    assert o.bounds.m == 0.0
    x = p.default_x0
    assert np.allclose(o.query(x, stream(9)), p.grad(x), atol=0)


def test_unsupported_composition_errors():
    p = make_nesterov_worst(10)
    biased_inner = compressed_oracle(top_k_compressor(1, 10), exact_oracle(p), p)
    with pytest.raises(UnsupportedCompositionError):
        compressed_oracle(rand_k_compressor(1, 10), biased_inner, p)
    with pytest.raises(UnsupportedCompositionError):
        compressed_oracle(top_k_compressor(1, 10), gaussian_noise_oracle(p, 1.0), p)
    # estimated mode accepts the same pair
    o = compressed_oracle(top_k_compressor(1, 10), gaussian_noise_oracle(p, 1.0),
                          p, bounds_mode="estimated", estimate_seed=3)
    assert 0 <= o.bounds.m < 1


@pytest.mark.parametrize("k,M_b,s_b",
                         [(k, M_b, s_b) for k in (1, 2)
                          for M_b in (0.0, 1.0) for s_b in (0.0, 1.0)])
def test_composed_bounds_lemma_monte_carlo(k, M_b, s_b):
    """The derived (m, M, sigma^2) of rand-k over tight (M_b, s_b) noise hold."""
    p = make_nesterov_worst(4)
    inner = synthetic_tight_oracle(p, 0.0, 0.0, M_b, s_b) \
        if (M_b or s_b) else exact_oracle(p)
    o = compressed_oracle(rand_k_compressor(k, 4), inner, p)
    rep = verify_declared(o, p, n_points=6, samples=30_000, seed=11)
    assert rep.ok, (rep.bias, rep.noise)
