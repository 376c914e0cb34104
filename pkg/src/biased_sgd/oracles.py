"""Biased gradient oracles g(x) = grad f(x) + b(x) + n(x, xi).

Each oracle carries the bound parameters (m, zeta^2) on its bias and
(M, sigma^2) on its zero-mean noise:

    ||b(x)||^2        <= m * ||grad f(x)||^2 + zeta^2,        0 <= m < 1
    E ||n(x, xi)||^2  <= M * ||grad f(x) + b(x)||^2 + sigma^2

Queries take an explicit numpy Generator; a fixed draw order makes every
oracle stream bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .problems import Problem, make_huber_problem


@dataclass(frozen=True)
class OracleBounds:
    """The (m, zeta^2, M, sigma^2) tuple of the bias and noise bounds."""

    m: float = 0.0
    zeta_sq: float = 0.0
    M: float = 0.0
    sigma_sq: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.m < 1.0:
            raise ValueError(f"m must lie in [0, 1), got {self.m}")
        for label in ("zeta_sq", "M", "sigma_sq"):
            if getattr(self, label) < 0.0:
                raise ValueError(f"{label} must be nonnegative")

    def noise_bound_vs_gradient(self) -> tuple[float, float]:
        """(M_bar, sigma_bar^2) bounding the noise against ||grad f||^2 alone.

        M_bar = 2M(1+m) and sigma_bar^2 = sigma^2 + 2M*zeta^2; follows from
        ||a+b||^2 <= 2||a||^2 + 2||b||^2 applied to grad f + b.
        """
        return 2.0 * self.M * (1.0 + self.m), self.sigma_sq + 2.0 * self.M * self.zeta_sq

    def as_dict(self) -> dict:
        return {"m": self.m, "zeta_sq": self.zeta_sq, "M": self.M,
                "sigma_sq": self.sigma_sq}


EXACT_BOUNDS = OracleBounds(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BiasedOracle:
    """A stochastic gradient map with declared bound parameters.

    `query` evaluates one draw at one point. `query_many` draws n times at a
    fixed point (Monte-Carlo estimation); `query_batch` evaluates one draw at
    each row of a state matrix (batched SGD lanes). Both have loop fallbacks.
    `expected_query` gives grad f(x) + b(x) in closed form when available.
    """

    name: str
    dim: int
    bounds: OracleBounds
    _query: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    _query_many: Optional[Callable] = None
    _query_batch: Optional[Callable] = None
    expected_query: Optional[Callable[[np.ndarray], np.ndarray]] = None
    deterministic: bool = False

    def query(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._query(x, rng)

    def query_many(self, x: np.ndarray, n: int,
                   rng: np.random.Generator) -> np.ndarray:
        if self._query_many is not None:
            return self._query_many(x, n, rng)
        return np.stack([self._query(x, rng) for _ in range(n)])

    def query_batch(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self._query_batch is not None:
            return self._query_batch(X, rng)
        return np.stack([self._query(x, rng) for x in X])

    def with_bounds(self, bounds: OracleBounds) -> "BiasedOracle":
        """Same query stream with different declared bounds."""
        return replace(self, bounds=bounds)


def exact_oracle(p: Problem) -> BiasedOracle:
    """Deterministic oracle returning the true gradient; all bounds zero."""
    grad_many = p.grad_many

    def query(x, rng):
        return p.grad(x)

    def query_many(x, n, rng):
        return np.tile(p.grad(x), (n, 1))

    query_batch = (lambda X, rng: grad_many(X)) if grad_many is not None else None

    return BiasedOracle(
        name="exact", dim=p.dim, bounds=EXACT_BOUNDS,
        _query=query, _query_many=query_many, _query_batch=query_batch,
        expected_query=p.grad, deterministic=True,
    )


def gaussian_noise_oracle(p: Problem, sigma_sq: float,
                          inner: Optional[BiasedOracle] = None) -> BiasedOracle:
    """Adds isotropic Gaussian noise with total second moment sigma_sq.

    Per-coordinate variance is sigma_sq / dim, so E||n||^2 = sigma_sq and the
    noise knob coincides with the sigma^2 bound parameter.
    """
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be nonnegative")
    if inner is None:
        inner = exact_oracle(p)
    if sigma_sq == 0.0:
        return inner
    scale = np.sqrt(sigma_sq / p.dim)
    b = inner.bounds

    def query(x, rng):
        return inner.query(x, rng) + scale * rng.standard_normal(p.dim)

    def query_many(x, n, rng):
        return inner.query_many(x, n, rng) + scale * rng.standard_normal((n, p.dim))

    def query_batch(X, rng):
        return inner.query_batch(X, rng) + scale * rng.standard_normal(X.shape)

    return BiasedOracle(
        name=f"{inner.name}+noise({sigma_sq:g})", dim=p.dim,
        bounds=replace(b, sigma_sq=b.sigma_sq + sigma_sq),
        _query=query, _query_many=query_many, _query_batch=query_batch,
        expected_query=inner.expected_query, deterministic=False,
    )


def additive_bias_oracle(inner: BiasedOracle, zeta: float,
                         direction: np.ndarray) -> BiasedOracle:
    """Adds the constant vector zeta * direction to every query."""
    direction = np.asarray(direction, dtype=float)
    if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    if zeta == 0.0:
        return inner
    bias = zeta * direction
    b = inner.bounds
    expected = inner.expected_query

    def query(x, rng):
        return inner.query(x, rng) + bias

    def query_many(x, n, rng):
        return inner.query_many(x, n, rng) + bias

    def query_batch(X, rng):
        return inner.query_batch(X, rng) + bias

    return BiasedOracle(
        name=f"{inner.name}+bias({zeta:g})", dim=inner.dim,
        bounds=replace(b, zeta_sq=b.zeta_sq + zeta * zeta),
        _query=query, _query_many=query_many, _query_batch=query_batch,
        expected_query=(lambda x: expected(x) + bias) if expected else None,
        deterministic=inner.deterministic,
    )


def tightness_oracle(p: Problem, m: float, zeta_sq: float,
                     b: np.ndarray) -> BiasedOracle:
    """Deterministic oracle whose bias bound holds with equality everywhere.

    g(x) = grad f(x) + rho(x) * b with rho(x)^2 = 1 + (m/zeta^2)||grad f(x)||^2
    (positive root), so ||g - grad f||^2 = m||grad f||^2 + zeta^2 exactly and
    any stationary point of the oracle field has ||grad f||^2 = zeta^2/(1-m).
    """
    if not 0.0 <= m < 1.0:
        raise ValueError(f"m must lie in [0, 1), got {m}")
    if zeta_sq <= 0.0:
        raise ValueError("zeta_sq must be positive (rho is undefined at 0)")
    b = np.asarray(b, dtype=float)
    if abs(float(b @ b) - zeta_sq) > 1e-8 * max(1.0, zeta_sq):
        raise ValueError("||b||^2 must equal zeta_sq")

    def expected(x):
        g = p.grad(x)
        rho = np.sqrt(1.0 + (m / zeta_sq) * float(g @ g))
        return g + rho * b

    def query_batch(X, rng):
        G = p.grad_many(X)
        rho = np.sqrt(1.0 + (m / zeta_sq) * np.einsum("ij,ij->i", G, G))
        return G + rho[:, None] * b

    return BiasedOracle(
        name=f"tightness(m={m:g},zeta_sq={zeta_sq:g})", dim=p.dim,
        bounds=OracleBounds(m=m, zeta_sq=zeta_sq),
        _query=lambda x, rng: expected(x),
        _query_many=lambda x, n, rng: np.tile(expected(x), (n, 1)),
        _query_batch=query_batch if p.grad_many is not None else None,
        expected_query=expected, deterministic=True,
    )


def gs_bounds(dim: int, L: float, tau: float) -> OracleBounds:
    """Bound parameters of the Gaussian-smoothing finite-difference estimator."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return OracleBounds(
        m=0.0,
        zeta_sq=(tau ** 2 / 4.0) * L ** 2 * (dim + 3) ** 3,
        M=4.0 * (dim + 4),
        sigma_sq=3.0 * tau ** 2 * L ** 2 * (dim + 4) ** 3,
    )


def gaussian_smoothing_oracle(p: Problem, tau: float) -> BiasedOracle:
    """Two-point zeroth-order estimator ((f(x + tau*u) - f(x)) / tau) * u.

    u is standard Gaussian (identity covariance). The declared bounds scale as
    tau^2 in both zeta^2 and sigma^2 and as d in M.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    bounds = gs_bounds(p.dim, p.smoothness_L, tau)

    def query(x, rng):
        u = rng.standard_normal(p.dim)
        return ((p.value(x + tau * u) - p.value(x)) / tau) * u

    def query_many(x, n, rng):
        U = rng.standard_normal((n, p.dim))
        fx = p.value(x)
        if p.value_many is not None:
            vals = p.value_many(x + tau * U)
        else:
            vals = np.array([p.value(x + tau * u) for u in U])
        return ((vals - fx) / tau)[:, None] * U

    def query_batch(X, rng):
        U = rng.standard_normal(X.shape)
        vplus = p.value_many(X + tau * U)
        v0 = p.value_many(X)
        return ((vplus - v0) / tau)[:, None] * U

    return BiasedOracle(
        name=f"gaussian_smoothing(tau={tau:g})", dim=p.dim, bounds=bounds,
        _query=query, _query_many=query_many,
        _query_batch=query_batch if p.value_many is not None else None,
        expected_query=None, deterministic=False,
    )


def uniform_direction(dim: int) -> np.ndarray:
    """The fixed unit vector (1, ..., 1)/sqrt(dim) used for constant biases."""
    return np.ones(dim) / np.sqrt(dim)


def inexact_oracle(p: Problem, delta: float,
                   bias_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   noise_sigma_sq: float = 0.0) -> BiasedOracle:
    """Inexact first-order oracle with accuracy delta: ||b(x)||^2 <= 2*delta*L.

    The default bias is the constant vector of squared norm exactly 2*delta*L,
    which makes the declared zeta^2 = 2*delta*L tight. A nonzero
    `noise_sigma_sq` gives the stochastic variant.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if noise_sigma_sq < 0:
        raise ValueError("noise_sigma_sq must be nonnegative")
    zeta_sq = 2.0 * delta * p.smoothness_L
    default_bias = None
    if bias_map is None:
        default_bias = np.sqrt(zeta_sq) * uniform_direction(p.dim)
        bias_map = lambda x: default_bias  # noqa: E731

    def expected(x):
        return p.grad(x) + bias_map(x)

    scale = np.sqrt(noise_sigma_sq / p.dim) if noise_sigma_sq > 0 else 0.0

    def query(x, rng):
        g = expected(x)
        if scale:
            g = g + scale * rng.standard_normal(p.dim)
        return g

    def query_many(x, n, rng):
        G = np.tile(expected(x), (n, 1))
        if scale:
            G = G + scale * rng.standard_normal((n, p.dim))
        return G

    query_batch = None
    if default_bias is not None and p.grad_many is not None:
        def query_batch(X, rng):
            G = p.grad_many(X) + default_bias
            if scale:
                G = G + scale * rng.standard_normal(X.shape)
            return G

    tag = "stochastic_inexact" if noise_sigma_sq > 0 else "inexact"
    return BiasedOracle(
        name=f"{tag}(delta={delta:g})", dim=p.dim,
        bounds=OracleBounds(m=0.0, zeta_sq=zeta_sq, sigma_sq=noise_sigma_sq),
        _query=query, _query_many=query_many, _query_batch=query_batch,
        expected_query=expected, deterministic=noise_sigma_sq == 0.0,
    )


def huber_shifted_oracle() -> tuple[Problem, BiasedOracle]:
    """The 1-D shifted-derivative oracle g(x) = h'(x) - 2 on the Huber problem.

    Constant shift of magnitude 2, so zeta^2 = 4; SGD started right of the
    kink walks away from the minimizer forever.
    """
    p = make_huber_problem()
    shift = np.array([2.0])

    def expected(x):
        return p.grad(x) - shift

    return p, BiasedOracle(
        name="huber_shifted", dim=1,
        bounds=OracleBounds(m=0.0, zeta_sq=4.0),
        _query=lambda x, rng: expected(x),
        _query_many=lambda x, n, rng: np.tile(expected(x), (n, 1)),
        _query_batch=lambda X, rng: p.grad_many(X) - shift,
        expected_query=expected, deterministic=True,
    )


def synthetic_tight_oracle(p: Problem, m: float, zeta_sq: float,
                           M: float, sigma_sq: float) -> BiasedOracle:
    """Oracle meeting both bound inequalities with equality; calibration target.

    Bias uses the tightness construction (or is zero when m = zeta^2 = 0);
    noise is an isotropic Gaussian rescaled per point so that
    E||n||^2 = M||grad f + b||^2 + sigma^2 exactly.
    """
    if not 0.0 <= m < 1.0:
        raise ValueError(f"m must lie in [0, 1), got {m}")
    if m > 0.0 and zeta_sq == 0.0:
        raise ValueError("the tight construction needs zeta_sq > 0 when m > 0")
    b = np.sqrt(zeta_sq) * uniform_direction(p.dim) if zeta_sq > 0 else None

    def expected(x):
        g = p.grad(x)
        if b is None:
            return g
        rho = np.sqrt(1.0 + (m / zeta_sq) * float(g @ g))
        return g + rho * b

    def query(x, rng):
        mean = expected(x)
        scale = np.sqrt((M * float(mean @ mean) + sigma_sq) / p.dim)
        w = rng.standard_normal(p.dim)
        return mean + scale * (w / np.sqrt(float(w @ w) / p.dim))

    def query_many(x, n, rng):
        mean = expected(x)
        scale = np.sqrt((M * float(mean @ mean) + sigma_sq) / p.dim)
        W = rng.standard_normal((n, p.dim))
        norms = np.sqrt(np.einsum("ij,ij->i", W, W) / p.dim)
        return mean + scale * (W / norms[:, None])

    return BiasedOracle(
        name=f"synthetic_tight(m={m:g},zeta_sq={zeta_sq:g},M={M:g},sigma_sq={sigma_sq:g})",
        dim=p.dim, bounds=OracleBounds(m=m, zeta_sq=zeta_sq, M=M, sigma_sq=sigma_sq),
        _query=query, _query_many=query_many,
        expected_query=expected, deterministic=False,
    )
