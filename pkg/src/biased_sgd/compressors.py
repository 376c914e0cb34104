"""Sparsification operators and their composition with gradient oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .oracles import BiasedOracle, OracleBounds
from .problems import Problem


class UnsupportedCompositionError(ValueError):
    """Raised when composed bound formulas do not cover an oracle/compressor pair."""


def _check_k(k: int, dim: int) -> None:
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")


def top_k(g: np.ndarray, k: int) -> np.ndarray:
    """Keep the k entries of largest magnitude, zero the rest.

    Ties are broken toward the lowest index, so the output is deterministic.
    """
    g = np.asarray(g, dtype=float)
    _check_k(k, g.shape[-1])
    if k == g.shape[-1]:
        return g.copy()
    keep = np.argsort(-np.abs(g), kind="stable")[:k]
    out = np.zeros_like(g)
    out[keep] = g[keep]
    return out


def _top_k_rows(G: np.ndarray, k: int) -> np.ndarray:
    if k == G.shape[1]:
        return G.copy()
    order = np.argsort(-np.abs(G), axis=1, kind="stable")[:, :k]
    out = np.zeros_like(G)
    np.put_along_axis(out, order, np.take_along_axis(G, order, axis=1), axis=1)
    return out


def rand_k(g: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Keep a uniformly random k-subset of coordinates, zero the rest."""
    g = np.asarray(g, dtype=float)
    _check_k(k, g.shape[-1])
    if k == g.shape[-1]:
        return g.copy()
    keep = rng.permutation(g.shape[-1])[:k]
    out = np.zeros_like(g)
    out[keep] = g[keep]
    return out


def _rand_k_rows(G: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # k smallest of d iid uniform keys per row = uniform k-subset per row
    if k == G.shape[1]:
        return G.copy()
    keys = rng.random(G.shape)
    thresh = np.partition(keys, k - 1, axis=1)[:, k - 1 : k]
    return G * (keys <= thresh)


def rand_k_unbiased(g: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Scaled random sparsifier (d/k) * rand_k(g); unbiased, higher variance."""
    g = np.asarray(g, dtype=float)
    _check_k(k, g.shape[-1])
    return (g.shape[-1] / k) * rand_k(g, k, rng)


@dataclass(frozen=True)
class Compressor:
    """A vector map with (optionally) a contraction factor delta in (0, 1].

    `delta` promises E||C(g) - g||^2 <= (1 - delta) * ||g||^2 for all g; it is
    None for operators (like the unbiased rand-k) that do not contract.
    """

    name: str
    kind: str  # top_k | rand_k | rand_k_unbiased | scale | custom
    dim: int
    apply: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    apply_rows: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    delta: Optional[float] = None
    k: Optional[int] = None
    deterministic: bool = False


def top_k_compressor(k: int, dim: int) -> Compressor:
    _check_k(k, dim)
    return Compressor(
        name=f"top_k(k={k})", kind="top_k", dim=dim,
        apply=lambda g, rng: top_k(g, k),
        apply_rows=lambda G, rng: _top_k_rows(G, k),
        delta=k / dim, k=k, deterministic=True,
    )


def rand_k_compressor(k: int, dim: int) -> Compressor:
    _check_k(k, dim)
    return Compressor(
        name=f"rand_k(k={k})", kind="rand_k", dim=dim,
        apply=lambda g, rng: rand_k(g, k, rng),
        apply_rows=lambda G, rng: _rand_k_rows(G, k, rng),
        delta=k / dim, k=k, deterministic=False,
    )


def rand_k_unbiased_compressor(k: int, dim: int) -> Compressor:
    _check_k(k, dim)
    scale = dim / k
    return Compressor(
        name=f"rand_k_unbiased(k={k})", kind="rand_k_unbiased", dim=dim,
        apply=lambda g, rng: scale * rand_k(g, k, rng),
        apply_rows=lambda G, rng: scale * _rand_k_rows(G, k, rng),
        delta=None, k=k, deterministic=False,
    )


def scale_compressor(delta: float, dim: int) -> Compressor:
    """Deterministic shrink C(g) = (1 - sqrt(1-delta)) * g; exactly a delta-compressor."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    c = 1.0 - np.sqrt(1.0 - delta)
    return Compressor(
        name=f"scale(delta={delta:g})", kind="scale", dim=dim,
        apply=lambda g, rng: c * np.asarray(g, dtype=float),
        apply_rows=lambda G, rng: c * np.asarray(G, dtype=float),
        delta=delta, deterministic=True,
    )


def empirical_contraction(c: Compressor, rng: np.random.Generator,
                          n_vectors: int = 1000, samples: int = 200) -> float:
    """Worst observed E||C(g)-g||^2 / ||g||^2 over random test vectors.

    Validates a claimed delta without trusting it: the result should not
    exceed 1 - delta (up to Monte-Carlo error for stochastic compressors).
    """
    worst = 0.0
    reps = 1 if c.deterministic else samples
    for _ in range(n_vectors):
        g = rng.standard_normal(c.dim)
        G = np.tile(g, (reps, 1))
        err = c.apply_rows(G, rng) - G
        ratio = float(np.mean(np.einsum("ij,ij->i", err, err))) / float(g @ g)
        worst = max(worst, ratio)
    return worst


def compressed_oracle(c: Compressor, inner: BiasedOracle, p: Problem,
                      bounds_mode: str = "derived",
                      estimate_seed: int = 0,
                      estimate_points: int = 10,
                      estimate_samples: int = 4000) -> BiasedOracle:
    """Compose compressor and oracle into a single biased oracle.

    In "derived" mode the bound parameters follow the closed-form composition
    rules, which require an unbiased inner oracle (and, for deterministic
    compressors, a noiseless one). "estimated" mode fits the bounds
    empirically instead (and refuses if the fitted bias slope reaches 1, which
    the bound parameterization cannot represent). "query_only" attaches
    all-zero placeholder bounds for consumers that use just the query stream.
    """
    if bounds_mode not in ("derived", "estimated", "query_only"):
        raise ValueError(f"unknown bounds_mode {bounds_mode!r}")
    d = c.dim
    if inner.dim != d or p.dim != d:
        raise ValueError("dimension mismatch between compressor, oracle, and problem")

    ib = inner.bounds
    expected = None
    if bounds_mode == "derived":
        if ib.m != 0.0 or ib.zeta_sq != 0.0:
            raise UnsupportedCompositionError(
                "derived composition needs an unbiased inner oracle "
                "(use bounds_mode='estimated')")
        if c.kind == "rand_k":
            ratio = d / c.k
            bounds = OracleBounds(m=1.0 - c.k / d, zeta_sq=0.0,
                                  M=(1.0 + ib.M) * ratio - 1.0,
                                  sigma_sq=(c.k / d) * ib.sigma_sq)
            if inner.expected_query is not None:
                inner_exp = inner.expected_query
                expected = lambda x: (c.k / d) * inner_exp(x)  # noqa: E731
        elif c.kind == "rand_k_unbiased":
            ratio = d / c.k
            bounds = OracleBounds(m=0.0, zeta_sq=0.0,
                                  M=(1.0 + ib.M) * ratio - 1.0,
                                  sigma_sq=ratio * ib.sigma_sq)
            expected = inner.expected_query
        elif c.deterministic and c.delta is not None:
            if ib.M != 0.0 or ib.sigma_sq != 0.0:
                raise UnsupportedCompositionError(
                    f"no derived bounds for {c.name} over a stochastic oracle "
                    "(use bounds_mode='estimated')")
            bounds = OracleBounds(m=1.0 - c.delta, zeta_sq=0.0)
            if inner.expected_query is not None:
                inner_exp = inner.expected_query
                expected = lambda x: c.apply(inner_exp(x), None)  # noqa: E731
        else:
            raise UnsupportedCompositionError(
                f"no derived bounds for compressor kind {c.kind!r}")

    def query(x, rng):
        return c.apply(inner.query(x, rng), rng)

    def query_many(x, n, rng):
        return c.apply_rows(inner.query_many(x, n, rng), rng)

    def query_batch(X, rng):
        return c.apply_rows(inner.query_batch(X, rng), rng)

    oracle = BiasedOracle(
        name=f"{c.name}({inner.name})", dim=d,
        bounds=OracleBounds(),  # placeholder, replaced below
        _query=query, _query_many=query_many, _query_batch=query_batch,
        expected_query=expected,
        deterministic=inner.deterministic and c.deterministic,
    )
    if bounds_mode == "derived":
        return oracle.with_bounds(bounds)
    if bounds_mode == "query_only":
        return oracle

    from . import estimators  # local import; estimators depends on oracles

    fitted = estimators.fit_oracle_bounds(
        oracle, p, n_points=estimate_points, samples=estimate_samples,
        seed=estimate_seed)
    if not fitted.feasible:
        raise UnsupportedCompositionError(
            f"fitted bias slope for {oracle.name} reaches 1; the bound "
            "parameterization requires m < 1")
    return oracle.with_bounds(fitted.bounds)
