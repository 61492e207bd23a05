"""Polynomial lower-triangular automorphisms and their quantitative bounds.

Component ``v`` of a lower-triangular map reads ``c_v z_v + h_v(z_1..z_{v-1})``.
Such a map is invertible iff no ``c_v`` vanishes, the inverse is again lower
triangular (back substitution), and iterated compositions have degree at most
``d**(n-1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb, factorial
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundOverflowError, DimensionError, NotAttractingError
from .polyalg import PolyJetMap, _basis, compose_truncated, evaluate
from .spectral import operator_norm

__all__ = [
    "LowerTriangularAuto",
    "PointwiseChain",
    "invert_exact",
    "compose_chain",
    "linear_growth_constant",
    "gamma_chain_bound",
    "log_gamma_chain_bound",
    "containment_gamma",
    "inverse_linear_bound",
    "iterates_to_zero_check",
    "IterateReport",
]

LOG_OVERFLOW = math.log(1e300)


def _triangular_violation(f: PolyJetMap) -> str | None:
    exps = f.basis.exps
    for j, k in zip(*np.nonzero(f.coeffs)):
        a = exps[k]
        if a[j + 1:].any():
            return f"component {j + 1} depends on a later variable via {tuple(a)}"
        if a[j] and a.sum() != 1:
            return f"component {j + 1} is not affine in z_{j + 1} ({tuple(a)})"
    return None


class LowerTriangularAuto:
    """Exact polynomial lower-triangular automorphism of C^n fixing 0."""

    __slots__ = ("map",)

    def __init__(self, poly: PolyJetMap):
        if not poly.exact:
            raise ValueError("a lower-triangular automorphism must be an exact polynomial")
        bad = _triangular_violation(poly)
        if bad:
            raise ValueError(f"not lower triangular: {bad}")
        diag = np.diag(poly.linear_part)
        if np.any(diag == 0):
            raise ValueError(f"zero diagonal element in {diag.tolist()}: not an automorphism")
        self.map = poly.trimmed()

    @classmethod
    def from_parts(cls, diagonal: Sequence[complex], terms: Iterable = ()) -> "LowerTriangularAuto":
        """``diagonal`` gives ``c_v``; ``terms`` are ``(component, exponents, coeff)`` of the ``h_v``."""
        n = len(diagonal)
        lin = [(v, tuple(int(v == t) for t in range(n)), c) for v, c in enumerate(diagonal)]
        return cls(PolyJetMap.from_terms(n, lin + list(terms)))

    @classmethod
    def linear(cls, matrix) -> "LowerTriangularAuto":
        return cls(PolyJetMap.linear(matrix))

    @property
    def n(self) -> int:
        return self.map.n

    @property
    def degree(self) -> int:
        return self.map.degree

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.map.linear_part)

    @property
    def linear_part(self) -> np.ndarray:
        return self.map.linear_part

    def nonlinear_part(self) -> PolyJetMap:
        c = np.array(self.map.coeffs)
        c[:, 1:self.n + 1] = 0
        return PolyJetMap(c, self.map.order, exact=True)

    def jet(self, order: int) -> PolyJetMap:
        return self.map.with_order(order)

    def evaluate(self, z) -> np.ndarray:
        return evaluate(self.map, z)

    __call__ = evaluate

    def __repr__(self) -> str:
        return f"LowerTriangularAuto(n={self.n}, degree={self.degree}, diagonal={self.diagonal.tolist()})"


def invert_exact(G: LowerTriangularAuto) -> LowerTriangularAuto:
    """Inverse by back substitution: ``w_v = (z_v - h_v(w_1..w_{v-1})) / c_v``."""
    n, d = G.n, max(G.degree, 1)
    N = max(d ** (n - 1), 1)
    size = _basis(n, N).size
    c = G.diagonal
    full = G.map.with_order(N).coeffs
    W = np.zeros((n, size), dtype=complex)
    W[0, 1] = 1.0 / c[0]
    for v in range(1, n):
        hv = np.zeros((n, size), dtype=complex)
        hv[v] = full[v]
        hv[v, 1 + v] = 0.0
        subst = compose_truncated(PolyJetMap(hv, N, exact=True), PolyJetMap(W, N, exact=True), N)
        row = -subst.coeffs[v]
        row[1 + v] += 1.0
        W[v] = row / c[v]
    return LowerTriangularAuto(PolyJetMap(W, N, exact=True))


class PointwiseChain:
    """Composition ``G_k o ... o G_1`` evaluated point by point.

    Used when exact expansion would exceed the monomial budget; no degree
    information is available.
    """

    degree = None

    def __init__(self, maps: Sequence[LowerTriangularAuto]):
        self.maps = tuple(maps)
        self.n = self.maps[0].n

    def evaluate(self, z) -> np.ndarray:
        for G in self.maps:
            z = G.evaluate(z)
        return z

    __call__ = evaluate


def compose_chain(Gs: Sequence[LowerTriangularAuto], budget: int = 512):
    """Exact ``G_k o ... o G_1`` for ``Gs = [G_1, ..., G_k]``.

    Intermediate expansions are limited to ``budget`` monomials per component;
    past that a :class:`PointwiseChain` is returned with a warning and degree
    checks are unavailable.
    """
    if not Gs:
        raise ValueError("empty chain")
    n = Gs[0].n
    if any(G.n != n for G in Gs):
        raise DimensionError("chain members live in different dimensions")
    acc = Gs[0].map
    for G in Gs[1:]:
        N = max(G.degree, 1) * max(acc.degree, 1)
        if _basis(n, N).size > budget:
            warnings.warn(f"chain expansion to degree {N} exceeds the {budget}-monomial budget; "
                          "falling back to pointwise evaluation, degree bound not checked",
                          stacklevel=2)
            return PointwiseChain(Gs)
        acc = compose_truncated(G.map, acc, N).trimmed()
    return LowerTriangularAuto(acc)


def _monomial_sphere_max(exps: np.ndarray) -> np.ndarray:
    """``max |z**alpha|`` over the unit sphere: ``prod (alpha_i/m)**(alpha_i/2)``."""
    m = exps.sum(axis=1, keepdims=True).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(exps > 0, exps / np.where(m > 0, m, 1), 1.0)
        return np.prod(ratio ** (exps / 2.0), axis=1)


def linear_growth_constant(G, rho: float) -> float:
    """Certified ``C`` with ``||G(z)|| <= C ||z||`` on the ball of radius ``rho``.

    ``C = ||A||_2 + || (b_1..b_n) ||`` where ``A`` is the linear part and
    ``b_j = sum_{|alpha|>=2} |c_{j,alpha}| max_{|z|=1}|z**alpha| rho**(|alpha|-1)``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    f = G.map if isinstance(G, LowerTriangularAuto) else G
    if not f.exact:
        raise ValueError("growth constant needs an exact polynomial map")
    A = f.linear_part
    exps = f.basis.exps
    deg = exps.sum(axis=1)
    w = _monomial_sphere_max(exps) * float(rho) ** np.maximum(deg - 1, 0)
    w[deg <= 1] = 0.0
    b = np.abs(f.coeffs) @ w
    return operator_norm(A) + float(np.linalg.norm(b))


def log_gamma_chain_bound(d: int, n: int, C: float) -> float:
    """``log`` of ``sum_{i=1}^{d**(n-1)} Q(i) sqrt(n)**i C**i`` (``-inf`` when C=0)."""
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    if C < 0:
        raise ValueError("C must be non-negative")
    if C == 0:
        return -math.inf
    top = d ** (n - 1)
    i = np.arange(1, top + 1)
    logq = np.array([math.log(comb(k + n - 1, n - 1)) for k in i])
    return _logsumexp(logq + i * (0.5 * math.log(n) + math.log(C)))


def _logsumexp(x: np.ndarray) -> float:
    top = float(np.max(x))
    if math.isinf(top):
        return top
    return top + math.log(float(np.sum(np.exp(x - top))))


def _finite_exp(log_value: float, what: str) -> float:
    if log_value > LOG_OVERFLOW:
        raise BoundOverflowError(
            f"{what} = exp({log_value:.1f}) exceeds 1e300; reduce p or the degree d")
    return math.exp(log_value)


def gamma_chain_bound(d: int, n: int, C: float) -> float:
    """Growth rate ``gamma`` with ``G_{1,k}`` mapping the small polydisc into ``Delta_{gamma**k}``."""
    return _finite_exp(log_gamma_chain_bound(d, n, C), "gamma")


def containment_gamma(G: LowerTriangularAuto, rho: float) -> tuple[float, float, float]:
    """``(rho_used, C, gamma)`` for the chain containment bound.

    The containment bound needs ``rho < 1``; larger radii are clamped to 0.99 with a warning.
    """
    if rho >= 1:
        warnings.warn(f"rho={rho} clamped to 0.99 (containment bound needs rho < 1)", stacklevel=2)
        rho = 0.99
    C = linear_growth_constant(G, rho)
    return rho, C, gamma_chain_bound(max(G.degree, 1), G.n, C)


def inverse_linear_bound(n: int, s: float, C: float, delta: float = 1.0) -> tuple[float, float]:
    """Radius and constant for ``||G^{-1}(z)|| <= K ||z||``.

    ``K = sqrt(n) (n-1)! (1+C)**(n-1) / s**n``; the estimate holds on the ball of
    radius ``delta / K``.
    """
    if not 0 < s < 1:
        raise ValueError("need 0 < s < 1")
    if C < 0 or delta <= 0:
        raise ValueError("need C >= 0 and delta > 0")
    K = math.sqrt(n) * factorial(n - 1) * (1 + C) ** (n - 1) / s ** n
    return delta / K, K


@dataclass(frozen=True)
class IterateReport:
    steps: tuple[int | None, ...]  # first k with ||G^k(z)|| < eps, None if beyond k_max
    k_max: int
    eps: float

    @property
    def all_converged(self) -> bool:
        return all(k is not None for k in self.steps)


def iterates_to_zero_check(G: LowerTriangularAuto, sample, k_max: int, eps: float) -> IterateReport:
    """First iterate of ``G`` entering the ``eps``-ball for each sample point."""
    if np.any(np.abs(G.diagonal) >= 1):
        raise NotAttractingError(f"diagonal {G.diagonal.tolist()} not inside the unit disc")
    Z = np.atleast_2d(np.asarray(sample, dtype=complex))
    steps = np.full(len(Z), -1)
    live = np.arange(len(Z))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_max + 1):
            hit = np.linalg.norm(Z, axis=1) < eps
            steps[live[hit]] = k
            Z, live = Z[~hit], live[~hit]
            if not len(live) or k == k_max:
                break
            Z = G.evaluate(Z)
    return IterateReport(tuple(int(k) if k >= 0 else None for k in steps), k_max, eps)
