"""Complex-coefficient algebra for homogeneous maps and polynomial jets on C^n.

A map ``C^n -> C^n`` fixing the origin is stored densely: one row per output
component, one column per monomial ``z**alpha`` with ``1 <= |alpha| <= N``.
Columns follow the graded lexicographic order (degree first, then exponents
in descending lexicographic order), so for ``n=2`` the columns read::

    1 | z1 z2 | z1^2 z1z2 z2^2 | z1^3 ...

Column 0 is the constant monomial and is always zero; keeping it makes the
offset arithmetic trivial.  Because the order is graded, the basis for order
``N`` is a prefix of the basis for any larger order and truncation is a slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sparse
from scipy.stats import qmc

from .errors import DimensionError

__all__ = [
    "multi_index_basis",
    "num_monomials",
    "HomogeneousMap",
    "PolyJetMap",
    "compose_truncated",
    "homogeneous_part",
    "evaluate",
    "polydisc_sup_norm",
    "substitution_matrix",
]

Term = tuple  # (component, exponents, coeff)


def _graded_lex(n: int, m: int) -> Iterator[tuple[int, ...]]:
    if n == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _graded_lex(n - 1, m - first):
            yield (first,) + rest


def num_monomials(n: int, m: int) -> int:
    """Number of multi-indices in ``n`` variables of order exactly ``m``."""
    if m < 0:
        return 0
    return comb(m + n - 1, n - 1)


def multi_index_basis(n: int, m: int) -> tuple[int, list[tuple[int, ...]]]:
    """Return ``(Q(m), alphas)`` with ``alphas`` in graded lexicographic order.

    >>> multi_index_basis(2, 2)
    (3, [(2, 0), (1, 1), (0, 2)])
    """
    if n < 1 or m < 0:
        raise ValueError(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    alphas = list(_graded_lex(n, m))
    return len(alphas), alphas


@dataclass(frozen=True, eq=False)
class _Basis:
    """Monomials of degree 0..N in n variables plus lookup tables."""

    n: int
    order: int
    exps: np.ndarray  # (M, n)
    offsets: np.ndarray  # offsets[m] = first column of degree m; len order + 2
    parent: np.ndarray  # column of alpha - e_var (unused at column 0)
    var: np.ndarray
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def cols(self, m: int) -> slice:
        return slice(int(self.offsets[m]), int(self.offsets[m + 1]))

    def degrees(self) -> np.ndarray:
        return self.exps.sum(axis=1)


@lru_cache(maxsize=None)
def _basis(n: int, order: int) -> _Basis:
    alphas: list[tuple[int, ...]] = []
    offsets = [0]
    for m in range(order + 1):
        alphas.extend(_graded_lex(n, m))
        offsets.append(len(alphas))
    exps = np.array(alphas, dtype=np.int64).reshape(len(alphas), n)
    index = {a: k for k, a in enumerate(alphas)}
    parent = np.zeros(len(alphas), dtype=np.int64)
    var = np.zeros(len(alphas), dtype=np.int64)
    for k, a in enumerate(alphas[1:], start=1):
        i = next(t for t, e in enumerate(a) if e)
        b = list(a)
        b[i] -= 1
        parent[k] = index[tuple(b)]
        var[k] = i
    for arr in (exps, parent, var):
        arr.setflags(write=False)
    return _Basis(n, order, exps, np.array(offsets), parent, var, index)


@lru_cache(maxsize=64)
def _product_table(n: int, order: int):
    """Sparse one-hot matrix K and index pairs (I, J) with
    ``(a*b)[k] = sum_p K[p, k] a[I[p]] b[J[p]]`` truncated at ``order``.

    Only monomials of degree >= 1 take part: every factor we multiply vanishes at 0.
    """
    basis = _basis(n, order)
    radix = order + 1
    weights = radix ** np.arange(n, dtype=np.int64)
    keys = basis.exps @ weights
    sorter = np.argsort(keys)
    deg = basis.degrees()
    I_parts, J_parts = [], []
    for i in range(1, basis.size):
        hi = int(basis.offsets[order - deg[i] + 1])
        if hi <= 1:
            continue
        js = np.arange(1, hi, dtype=np.int64)
        I_parts.append(np.full(js.shape, i, dtype=np.int64))
        J_parts.append(js)
    if not I_parts:
        empty = np.zeros(0, dtype=np.int64)
        return sparse.csr_matrix((basis.size, 0), dtype=float), empty, empty
    I = np.concatenate(I_parts)
    J = np.concatenate(J_parts)
    sums = keys[I] + keys[J]
    K = sorter[np.searchsorted(keys, sums, sorter=sorter)]
    P = len(I)
    # stored transposed, (M, P), so that products read K @ outer.T
    Kt = sparse.csr_matrix((np.ones(P), (K, np.arange(P))), shape=(basis.size, P))
    return Kt, I, J


def _mul_batch(a: np.ndarray, b: np.ndarray, n: int, order: int) -> np.ndarray:
    """Row-wise truncated products of polynomials without constant term."""
    Kt, I, J = _product_table(n, order)
    out = np.empty(a.shape, dtype=complex)
    chunk = max(1, 4_000_000 // max(len(I), 1))
    for lo in range(0, a.shape[0], chunk):
        outer = a[lo:lo + chunk, I] * b[lo:lo + chunk, J]
        out[lo:lo + chunk] = (Kt @ outer.T).T
    return out


def _check_alpha(alpha: Sequence[int], n: int) -> tuple[int, ...]:
    alpha = tuple(int(e) for e in alpha)
    if len(alpha) != n:
        raise DimensionError(f"multi-index {alpha} has length {len(alpha)}, expected {n}")
    if any(e < 0 for e in alpha):
        raise ValueError(f"negative exponent in {alpha}")
    return alpha


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


class HomogeneousMap:
    """A map ``C^n -> C^n`` whose components are homogeneous of degree ``m``.

    ``coeffs[j, k]`` multiplies ``z**alpha_k`` in component ``j`` where
    ``alpha_k`` is the k-th entry of ``multi_index_basis(n, m)``.
    """

    __slots__ = ("n", "m", "coeffs")

    def __init__(self, n: int, m: int, coeffs):
        if m < 1:
            raise ValueError("homogeneous maps here have degree >= 1")
        coeffs = _frozen(coeffs)
        if coeffs.shape != (n, num_monomials(n, m)):
            raise DimensionError(f"coefficient table has shape {coeffs.shape}, "
                                 f"expected {(n, num_monomials(n, m))}")
        self.n, self.m, self.coeffs = n, m, coeffs

    @classmethod
    def zeros(cls, n: int, m: int) -> "HomogeneousMap":
        return cls(n, m, np.zeros((n, num_monomials(n, m)), dtype=complex))

    @classmethod
    def from_terms(cls, n: int, m: int, terms: Iterable[Term]) -> "HomogeneousMap":
        """Build from sparse ``(component, exponents, coeff)`` triples (0-based component)."""
        c = np.zeros((n, num_monomials(n, m)), dtype=complex)
        index = _basis(n, m).index
        off = int(_basis(n, m).offsets[m])
        for comp, alpha, coeff in terms:
            alpha = _check_alpha(alpha, n)
            if sum(alpha) != m:
                raise ValueError(f"term {alpha} has order {sum(alpha)}, expected {m}")
            if not 0 <= comp < n:
                raise DimensionError(f"component {comp} out of range for n={n}")
            c[comp, index[alpha] - off] += coeff
        return cls(n, m, c)

    @property
    def alphas(self) -> list[tuple[int, ...]]:
        return multi_index_basis(self.n, self.m)[1]

    def coeff(self, component: int, alpha: Sequence[int]) -> complex:
        b = _basis(self.n, self.m)
        return complex(self.coeffs[component, b.index[tuple(alpha)] - int(b.offsets[self.m])])

    def terms(self) -> Iterator[Term]:
        for j, k in zip(*np.nonzero(self.coeffs)):
            yield int(j), self.alphas[k], complex(self.coeffs[j, k])

    def to_jet(self, order: int | None = None) -> "PolyJetMap":
        order = self.m if order is None else order
        out = np.zeros((self.n, _basis(self.n, order).size), dtype=complex)
        if self.m <= order:
            out[:, _basis(self.n, order).cols(self.m)] = self.coeffs
        return PolyJetMap(out, order, exact=self.m <= order)

    def evaluate(self, z) -> np.ndarray:
        return self.to_jet().evaluate(z)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def _same(self, other: "HomogeneousMap") -> None:
        if (self.n, self.m) != (other.n, other.m):
            raise DimensionError(f"cannot combine degree {self.m} in C^{self.n} "
                                 f"with degree {other.m} in C^{other.n}")

    def __add__(self, other: "HomogeneousMap") -> "HomogeneousMap":
        self._same(other)
        return HomogeneousMap(self.n, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other: "HomogeneousMap") -> "HomogeneousMap":
        self._same(other)
        return HomogeneousMap(self.n, self.m, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "HomogeneousMap":
        return HomogeneousMap(self.n, self.m, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "HomogeneousMap":
        return HomogeneousMap(self.n, self.m, -self.coeffs)

    def __repr__(self) -> str:
        return f"HomogeneousMap(n={self.n}, m={self.m}, nnz={np.count_nonzero(self.coeffs)})"


class PolyJetMap:
    """Polynomial map ``C^n -> C^n`` fixing 0, known through degree ``order``.

    ``exact=True`` means the map *is* this polynomial; otherwise coefficients
    above ``order`` are unknown rather than zero.  Instances are immutable.
    """

    __slots__ = ("n", "order", "coeffs", "exact")

    def __init__(self, coeffs, order: int, exact: bool = False):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim != 2:
            raise DimensionError("coefficient table must be 2-d (components x monomials)")
        n = coeffs.shape[0]
        if order < 1:
            raise ValueError("jet order must be >= 1")
        if coeffs.shape[1] != _basis(n, order).size:
            raise DimensionError(f"{coeffs.shape[1]} columns do not match order {order} in C^{n}")
        if np.any(coeffs[:, 0]):
            raise ValueError("maps must fix 0: constant term is nonzero")
        coeffs.setflags(write=False)
        self.n, self.order, self.coeffs, self.exact = n, order, coeffs, bool(exact)

    # construction -------------------------------------------------------

    @classmethod
    def zeros(cls, n: int, order: int = 1, exact: bool = True) -> "PolyJetMap":
        return cls(np.zeros((n, _basis(n, order).size)), order, exact)

    @classmethod
    def identity(cls, n: int, order: int = 1) -> "PolyJetMap":
        return cls.linear(np.eye(n), order)

    @classmethod
    def linear(cls, matrix, order: int = 1) -> "PolyJetMap":
        """The linear map ``z -> matrix @ z`` as an exact jet."""
        A = np.asarray(matrix, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {A.shape}")
        n = A.shape[0]
        c = np.zeros((n, _basis(n, order).size), dtype=complex)
        c[:, 1:n + 1] = A
        return cls(c, order, exact=True)

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[Term], order: int | None = None,
                   exact: bool = True) -> "PolyJetMap":
        """Build from sparse ``(component, exponents, coeff)`` triples.

        Components are 0-based.  Constant terms are rejected.  Entries are
        summed when the same monomial appears twice.
        """
        terms = [(int(j), _check_alpha(a, n), complex(c)) for j, a, c in terms]
        for j, a, _ in terms:
            if sum(a) == 0:
                raise ValueError(f"constant term in component {j}: maps must fix 0")
            if not 0 <= j < n:
                raise DimensionError(f"component {j} out of range for n={n}")
        top = max((sum(a) for _, a, _ in terms), default=1)
        order = top if order is None else order
        basis = _basis(n, order)
        c = np.zeros((n, basis.size), dtype=complex)
        for j, a, v in terms:
            if sum(a) <= order:
                c[j, basis.index[a]] += v
        return cls(c, order, exact=exact and top <= order)

    @classmethod
    def from_layers(cls, layers: Sequence[HomogeneousMap], order: int | None = None,
                    exact: bool = True) -> "PolyJetMap":
        if not layers:
            raise ValueError("need at least one layer")
        n = layers[0].n
        order = max(h.m for h in layers) if order is None else order
        c = np.zeros((n, _basis(n, order).size), dtype=complex)
        for h in layers:
            if h.n != n:
                raise DimensionError("layers live in different dimensions")
            if h.m <= order:
                c[:, _basis(n, order).cols(h.m)] += h.coeffs
        return cls(c, order, exact)

    # inspection ---------------------------------------------------------

    @property
    def basis(self) -> _Basis:
        return _basis(self.n, self.order)

    @property
    def degree(self) -> int:
        """Highest degree with a nonzero coefficient (0 for the zero map)."""
        nz = np.nonzero(np.any(self.coeffs != 0, axis=0))[0]
        if len(nz) == 0:
            return 0
        return int(self.basis.exps[nz[-1]].sum())

    @property
    def layers(self) -> tuple[HomogeneousMap, ...]:
        return tuple(self.layer(m) for m in range(1, self.order + 1))

    def layer(self, m: int) -> HomogeneousMap:
        if not 1 <= m <= self.order:
            raise ValueError(f"degree {m} outside 1..{self.order}")
        return HomogeneousMap(self.n, m, self.coeffs[:, self.basis.cols(m)])

    @property
    def linear_part(self) -> np.ndarray:
        """Derivative at 0 as an ``n x n`` matrix."""
        return np.array(self.coeffs[:, 1:self.n + 1])

    def coeff(self, component: int, alpha: Sequence[int]) -> complex:
        alpha = _check_alpha(alpha, self.n)
        if sum(alpha) > self.order:
            raise ValueError(f"{alpha} is above the jet order {self.order}")
        return complex(self.coeffs[component, self.basis.index[alpha]])

    def terms(self) -> Iterator[Term]:
        """Nonzero ``(component, alpha, coeff)`` triples in storage order."""
        exps = self.basis.exps
        for j, k in zip(*np.nonzero(self.coeffs)):
            yield int(j), tuple(int(e) for e in exps[k]), complex(self.coeffs[j, k])

    def max_abs(self, lo: int = 1, hi: int | None = None) -> float:
        hi = self.order if hi is None else min(hi, self.order)
        if hi < lo:
            return 0.0
        b = self.basis
        block = self.coeffs[:, int(b.offsets[lo]):int(b.offsets[hi + 1])]
        return float(np.max(np.abs(block), initial=0.0))

    # reshaping ----------------------------------------------------------

    def with_order(self, order: int) -> "PolyJetMap":
        """Truncate to ``order`` or, for exact maps, zero-pad up to it."""
        if order == self.order:
            return self
        if order < self.order:
            c = self.coeffs[:, :_basis(self.n, order).size]
            return PolyJetMap(c, order, exact=self.exact and self.degree <= order)
        if not self.exact:
            raise ValueError("cannot extend a truncated jet: higher coefficients are unknown")
        c = np.zeros((self.n, _basis(self.n, order).size), dtype=complex)
        c[:, :self.coeffs.shape[1]] = self.coeffs
        return PolyJetMap(c, order, exact=True)

    def trimmed(self) -> "PolyJetMap":
        """Exact map re-expressed at its true degree."""
        if not self.exact:
            return self
        return self.with_order(max(self.degree, 1))

    def _align(self, other: "PolyJetMap") -> tuple["PolyJetMap", "PolyJetMap", int, bool]:
        if self.n != other.n:
            raise DimensionError(f"C^{self.n} vs C^{other.n}")
        exact = self.exact and other.exact
        if exact:
            order = max(self.order, other.order)
        else:
            order = min(o.order for o in (self, other) if not o.exact)
        return self.with_order(order), other.with_order(order), order, exact

    def __add__(self, other: "PolyJetMap") -> "PolyJetMap":
        a, b, order, exact = self._align(other)
        return PolyJetMap(a.coeffs + b.coeffs, order, exact)

    def __sub__(self, other: "PolyJetMap") -> "PolyJetMap":
        a, b, order, exact = self._align(other)
        return PolyJetMap(a.coeffs - b.coeffs, order, exact)

    def __mul__(self, scalar) -> "PolyJetMap":
        return PolyJetMap(self.coeffs * scalar, self.order, self.exact)

    __rmul__ = __mul__

    def __neg__(self) -> "PolyJetMap":
        return PolyJetMap(-self.coeffs, self.order, self.exact)

    def conjugate_linear(self, S: np.ndarray, S_inv: np.ndarray | None = None) -> "PolyJetMap":
        """Return ``S^{-1} o self o S`` for an invertible matrix ``S``."""
        S = np.asarray(S, dtype=complex)
        S_inv = np.linalg.inv(S) if S_inv is None else S_inv
        inner = compose_truncated(self, PolyJetMap.linear(S, self.order), self.order)
        c = S_inv @ inner.coeffs
        return PolyJetMap(c, self.order, self.exact)

    # evaluation ---------------------------------------------------------

    def evaluate(self, z) -> np.ndarray:
        return evaluate(self, z)

    __call__ = evaluate

    def compose(self, inner: "PolyJetMap", order: int | None = None) -> "PolyJetMap":
        """``self o inner`` truncated at ``order`` (default: exact when possible)."""
        if order is None:
            if self.exact and inner.exact:
                order = max(self.degree, 1) * max(inner.degree, 1)
            else:
                order = min(self.order, inner.order)
        return compose_truncated(self, inner, order)

    def __repr__(self) -> str:
        return (f"PolyJetMap(n={self.n}, order={self.order}, exact={self.exact}, "
                f"nnz={np.count_nonzero(self.coeffs)})")


def evaluate(f: PolyJetMap, z) -> np.ndarray:
    """Evaluate ``f`` at one point (shape ``(n,)``) or a batch (shape ``(P, n)``).

    Monomials are built degree by degree, each as parent monomial times one
    variable, which is the multivariate analogue of Horner's scheme.
    """
    Z = np.asarray(z, dtype=complex)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[-1] != f.n:
        raise DimensionError(f"point has {Z.shape[-1]} coordinates, map acts on C^{f.n}")
    deg = f.degree
    if deg == 0:
        out = np.zeros_like(Z)
        return out[0] if single else out
    b = f.basis
    top = int(b.offsets[deg + 1])
    mono = np.empty((Z.shape[0], top), dtype=complex)
    mono[:, 0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(1, deg + 1):
            cols = b.cols(m)
            mono[:, cols] = mono[:, b.parent[cols]] * Z[:, b.var[cols]]
        out = mono[:, 1:] @ f.coeffs[:, 1:top].T
    return out[0] if single else out


def _powers(G: np.ndarray, n: int, order: int, top: int) -> np.ndarray:
    """Rows: coefficients of ``g**alpha`` for all monomials alpha of degree <= top <= order."""
    b = _basis(n, order)
    pw = np.zeros((int(b.offsets[top + 1]), b.size), dtype=complex)
    if top >= 1:
        pw[1:n + 1] = G
    for m in range(2, top + 1):
        cols = b.cols(m)
        pw[cols] = _mul_batch(pw[b.parent[cols]], G[b.var[cols]], n, order)
    return pw


def compose_truncated(f: PolyJetMap, g: PolyJetMap, N: int) -> PolyJetMap:
    """Jet of ``f o g`` truncated at degree ``N``.

    The result is marked exact when both inputs are exact polynomials and
    ``deg f * deg g <= N``.
    """
    if f.n != g.n:
        raise DimensionError(f"cannot compose a map on C^{f.n} with a map on C^{g.n}")
    if N < 1:
        raise ValueError("truncation degree must be >= 1")
    n = f.n
    basis = _basis(n, N)
    if g.order < N and not g.exact:
        raise ValueError(f"inner jet known only to order {g.order} < {N}")
    if f.order < N and not f.exact:
        raise ValueError(f"outer jet known only to order {f.order} < {N}")
    G = g.with_order(N).coeffs if g.order != N else g.coeffs
    top = min(f.degree, N)
    if top == 0:
        return PolyJetMap(np.zeros((n, basis.size)), N, exact=f.exact)
    pw = _powers(G, n, N, top)
    F = f.coeffs[:, :pw.shape[0]]
    out = F @ pw
    out[:, 0] = 0.0
    exact = f.exact and g.exact and max(f.degree, 1) * max(g.degree, 1) <= N
    return PolyJetMap(out, N, exact)


def homogeneous_part(f: PolyJetMap, m: int) -> HomogeneousMap:
    """Degree-``m`` layer of ``f`` (a copy)."""
    return f.layer(m)


@lru_cache(maxsize=256)
def _substitution_cached(key: bytes, n: int, m: int) -> np.ndarray:
    A = np.frombuffer(key, dtype=complex).reshape(n, n)
    pw = _powers(np.array(PolyJetMap.linear(A, m).coeffs), n, m, m)
    cols = _basis(n, m).cols(m)
    out = pw[cols, cols]
    out.setflags(write=False)
    return out


def substitution_matrix(A, m: int) -> np.ndarray:
    """``Q(m) x Q(m)`` matrix ``M`` with ``(Az)**alpha = sum_beta M[alpha, beta] z**beta``."""
    A = np.ascontiguousarray(A, dtype=complex)
    return _substitution_cached(A.tobytes(), A.shape[0], m)


def polydisc_sup_norm(h, delta: float, mode: str = "coeff_upper", samples: int = 1000) -> float:
    """Estimate ``sup ||h(z)||`` over the polydisc of radius ``delta``.

    ``coeff_upper`` returns ``sum |c_{j,alpha}| delta**|alpha|``, a certified
    upper bound.  ``sample_lower`` returns the maximum of ``||h(z)||`` over
    ``samples`` Halton points on the torus ``|z_i| = delta``, a lower bound
    (the Euclidean norm of a holomorphic map is plurisubharmonic, so the
    supremum lives on the distinguished boundary).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    jet = h.to_jet() if isinstance(h, HomogeneousMap) else h
    if mode == "coeff_upper":
        deg = jet.basis.degrees()
        return float(np.sum(np.abs(jet.coeffs) * float(delta) ** deg[None, :]))
    if mode == "sample_lower":
        if samples < 1:
            raise ValueError("need at least one sample")
        angles = 2 * np.pi * qmc.Halton(d=jet.n, scramble=False).random(samples)
        z = delta * np.exp(1j * angles)
        return float(np.max(np.linalg.norm(evaluate(jet, z), axis=1)))
    raise ValueError(f"unknown mode {mode!r}")
