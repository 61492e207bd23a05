"""Sequences of automorphisms, their basin and the approximating maps psi_j.

A :class:`SequenceSpec` produces maps ``f_1, f_2, ...`` fixing 0.  The basin is
the set of points whose orbit ``f_{1,k}(z) = f_k(...f_1(z))`` tends to 0; once an
orbit enters the attraction ball of radius ``delta`` it stays and converges,
so membership is decided by a first-entry step.  The maps
``psi_j = G^{-j} o T o f_{1,j}`` use the normal form of ``f_1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .bounds import AttractionParams
from .errors import DimensionError, DivergedError
from .normalform import NormalFormResult
from .polyalg import PolyJetMap, _basis, compose_truncated, evaluate

__all__ = [
    "LinearPrim", "DiagonalPrim", "ShearPrim", "SwapPrim", "TriangularPrim",
    "Perturbation", "SequenceSpec", "SequenceMap", "Membership", "GridSpec", "BasinGrid",
    "HypothesisReport", "PsiTable",
    "word_map", "sequence_map", "orbit_compose", "verify_hypotheses", "basin_membership",
    "classify_points", "psi_approx", "psi_convergence_report", "grid_classify",
    "fit_geometric_ratio", "injectivity_check",
    "ATTRACTED", "UNDECIDED", "DIVERGED", "ESCAPE_RADIUS", "DEFAULT_JMAX",
]

ESCAPE_RADIUS = 1e8
DEFAULT_JMAX = 200
ATTRACTED, UNDECIDED, DIVERGED = 1, 0, -1
_STATUS = {ATTRACTED: "attracted", UNDECIDED: "undecided", DIVERGED: "diverged"}

Term = tuple[int, tuple[int, ...], complex]


# primitives ---------------------------------------------------------------

@dataclass(frozen=True)
class LinearPrim:
    """``z -> M z`` for an invertible matrix (rows as tuples)."""

    matrix: tuple[tuple[complex, ...], ...]

    def poly(self, n: int) -> PolyJetMap:
        M = np.array(self.matrix, dtype=complex)
        if M.shape != (n, n):
            raise DimensionError(f"linear primitive has shape {M.shape}, expected ({n}, {n})")
        if abs(np.linalg.det(M)) < 1e-14:
            raise ValueError("linear primitive is singular")
        return PolyJetMap.linear(M)


@dataclass(frozen=True)
class DiagonalPrim:
    values: tuple[complex, ...]

    def poly(self, n: int) -> PolyJetMap:
        if len(self.values) != n:
            raise DimensionError(f"diagonal primitive has {len(self.values)} entries, expected {n}")
        if any(v == 0 for v in self.values):
            raise ValueError("zero diagonal entry: not an automorphism")
        return PolyJetMap.linear(np.diag(np.array(self.values, dtype=complex)))


@dataclass(frozen=True)
class ShearPrim:
    """``z_target += p(z)`` with ``p`` free of ``z_target``; terms are ``(exponents, coeff)``."""

    target: int
    terms: tuple[tuple[tuple[int, ...], complex], ...]

    def poly(self, n: int) -> PolyJetMap:
        if not 0 <= self.target < n:
            raise DimensionError(f"shear target {self.target} out of range for n={n}")
        out: list[Term] = [(v, tuple(int(v == t) for t in range(n)), 1.0) for v in range(n)]
        for a, c in self.terms:
            if len(a) != n:
                raise DimensionError(f"exponents {a} do not have {n} entries")
            if a[self.target]:
                raise ValueError(f"shear term {a} involves its own target coordinate")
            if sum(a) == 0:
                raise ValueError("shear terms must not be constant")
            out.append((self.target, tuple(a), c))
        return PolyJetMap.from_terms(n, out)


@dataclass(frozen=True)
class SwapPrim:
    i: int
    j: int

    def poly(self, n: int) -> PolyJetMap:
        if not (0 <= self.i < n and 0 <= self.j < n):
            raise DimensionError(f"swap ({self.i}, {self.j}) out of range for n={n}")
        P = np.eye(n)
        P[[self.i, self.j]] = P[[self.j, self.i]]
        return PolyJetMap.linear(P)


@dataclass(frozen=True)
class TriangularPrim:
    """``c_v z_v + h_v(z_1..z_{v-1})``; terms are ``(component, exponents, coeff)``."""

    diagonal: tuple[complex, ...]
    terms: tuple[Term, ...] = ()

    def poly(self, n: int) -> PolyJetMap:
        from .triangular import LowerTriangularAuto
        if len(self.diagonal) != n:
            raise DimensionError(f"triangular primitive has {len(self.diagonal)} diagonal entries")
        return LowerTriangularAuto.from_parts(self.diagonal, self.terms).map


Primitive = Union[LinearPrim, DiagonalPrim, ShearPrim, SwapPrim, TriangularPrim]
Word = tuple  # tuple[Primitive, ...], applied in order


@lru_cache(maxsize=256)
def word_map(word: Word, n: int) -> PolyJetMap:
    """Exact polynomial of a word; the first primitive is applied first."""
    if not word:
        return PolyJetMap.identity(n)
    acc = word[0].poly(n)
    for prim in word[1:]:
        acc = prim.poly(n).compose(acc).trimmed()
    return acc


@dataclass(frozen=True)
class Perturbation:
    """Shears of degrees ``q_min..q_max`` with coefficients in the disc of radius ``eps``."""

    q_min: int
    eps: float
    seed: int
    q_max: int | None = None

    def __post_init__(self):
        if self.q_min < 2:
            raise ValueError("perturbation order q_min must be >= 2")
        if self.eps < 0:
            raise ValueError("perturbation amplitude must be non-negative")
        if self.q_max is not None and self.q_max < self.q_min:
            raise ValueError("q_max must be >= q_min")

    @property
    def top(self) -> int:
        return self.q_min if self.q_max is None else self.q_max


@dataclass(frozen=True)
class SequenceSpec:
    """Generator of ``f_j``: ``single`` repeats word 0, ``cyclic`` cycles the
    words, ``perturbed`` cycles them and composes ``f_j`` (``j >= 2``) with seeded
    shears of order at least ``q_min``."""

    n: int
    kind: str
    words: tuple[Word, ...]
    params: AttractionParams
    perturbation: Perturbation | None = None
    K: int = 1

    def __post_init__(self):
        if self.kind not in ("single", "cyclic", "perturbed"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if not self.words:
            raise ValueError("at least one map is required")
        if self.kind == "perturbed" and self.perturbation is None:
            raise ValueError("perturbed sequences need a perturbation block")
        if self.params.n != self.n:
            raise DimensionError("attraction parameters and maps disagree on the dimension")
        if self.K < 1:
            raise ValueError("block size K must be >= 1")
        for w in self.words:
            word_map(w, self.n)

    def base(self, j: int) -> PolyJetMap:
        if self.kind == "single":
            return word_map(self.words[0], self.n)
        return word_map(self.words[(j - 1) % len(self.words)], self.n)

    def map(self, j: int) -> "SequenceMap":
        if j < 1:
            raise ValueError("maps are indexed from 1")
        return sequence_map(self, j)


def _disc_sample(eps: float, key: Sequence[int]) -> complex:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))
    u, v = rng.random(2)
    return complex(eps * math.sqrt(u) * np.exp(2j * math.pi * v))


def _perturbation_shears(n: int, pert: Perturbation, j: int) -> tuple[PolyJetMap, ...]:
    """Shear ``v`` adds to ``z_v`` a polynomial in the other coordinates."""
    out = []
    for v in range(n):
        terms = []
        for m in range(pert.q_min, pert.top + 1):
            b = _basis(n, m)
            for a in b.exps[b.cols(m)]:
                if a[v]:
                    continue
                key = (pert.seed, j, v, *(int(x) for x in a))
                terms.append((tuple(int(x) for x in a), _disc_sample(pert.eps, key)))
        out.append(ShearPrim(v, tuple(terms)).poly(n))
    return tuple(out)


class SequenceMap:
    """``f_j`` as a chain of exact polynomials applied in order."""

    __slots__ = ("chain", "n")

    def __init__(self, chain: Sequence[PolyJetMap]):
        self.chain = tuple(chain)
        self.n = self.chain[0].n

    def evaluate(self, z) -> np.ndarray:
        for p in self.chain:
            z = evaluate(p, z)
        return z

    __call__ = evaluate

    @property
    def linear_part(self) -> np.ndarray:
        M = np.eye(self.n, dtype=complex)
        for p in self.chain:
            M = p.linear_part @ M
        return M

    def jet(self, order: int) -> PolyJetMap:
        acc = self.chain[0].with_order(order)
        for p in self.chain[1:]:
            acc = compose_truncated(p, acc, order)
        return acc


@lru_cache(maxsize=4096)
def sequence_map(seq: SequenceSpec, j: int) -> SequenceMap:
    base = seq.base(j)
    if seq.kind != "perturbed" or j == 1:
        return SequenceMap([base])
    return SequenceMap([base, *_perturbation_shears(seq.n, seq.perturbation, j)])


# orbits -------------------------------------------------------------------

def orbit_compose(seq: SequenceSpec, j: int, k: int, z) -> np.ndarray:
    """``f_{j,k}(z) = f_k o ... o f_j (z)``; ``k = j - 1`` gives ``z``.

    Raises :class:`DivergedError` with the last finite iterate on overflow.
    """
    if j < 1 or k < j - 1:
        raise ValueError(f"need 1 <= j and k >= j - 1, got j={j}, k={k}")
    Z = np.asarray(z, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(j, k + 1):
            W = seq.map(i).evaluate(Z)
            if not np.all(np.isfinite(W)):
                raise DivergedError(i, Z)
            Z = W
    return Z


@dataclass(frozen=True)
class Membership:
    status: str
    k: int | None = None

    def __str__(self) -> str:
        return f"attracted({self.k})" if self.status == "attracted" else self.status


def classify_points(seq: SequenceSpec, Z, j_max: int = DEFAULT_JMAX,
                    escape: float = ESCAPE_RADIUS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized membership: ``(status codes, first-entry steps or -1)``."""
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    delta = seq.params.delta
    status = np.full(len(Z), UNDECIDED)
    steps = np.full(len(Z), -1)
    live = np.arange(len(Z))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(j_max + 1):
            norms = np.linalg.norm(Z, axis=1)
            inside = norms < delta
            out = ~inside & ~(norms <= escape)
            status[live[inside]] = ATTRACTED
            steps[live[inside]] = k
            status[live[out]] = DIVERGED
            keep = ~inside & ~out
            Z, live = Z[keep], live[keep]
            if not len(live) or k == j_max:
                break
            Z = seq.map(k + 1).evaluate(Z)
    return status, steps


def basin_membership(seq: SequenceSpec, z, j_max: int = DEFAULT_JMAX,
                     escape: float = ESCAPE_RADIUS) -> Membership:
    """``attracted(k)`` for the minimal ``k`` with ``||f_{1,k}(z)|| < delta``."""
    status, steps = classify_points(seq, np.asarray(z, dtype=complex)[None, :], j_max, escape)
    code, k = int(status[0]), int(steps[0])
    return Membership(_STATUS[code], k if code == ATTRACTED else None)


# hypotheses ---------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    j_max: int
    samples: int
    attraction_violations: int
    worst_upper_ratio: float  # max ||f_j(z)|| / (r ||z||)
    worst_lower_ratio: float  # min ||f_j(z)|| / (s ||z||)
    chain_violations: int
    worst_chain_ratio: float  # max ||f_{j,k}(z)|| / (r**(k-j+1) ||z||)
    jet_discrepancy: float
    q: int

    @property
    def ok(self) -> bool:
        return not self.attraction_violations and not self.chain_violations

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def _sphere_samples(n: int, delta: float, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((samples, n)) + 1j * rng.standard_normal((samples, n))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    radii = delta * (np.arange(1, samples + 1) / (samples + 1))
    return Z * radii[:, None]


def verify_hypotheses(seq: SequenceSpec, q: int, j_max: int = 20, samples: int = 200,
                      seed: int = 0) -> HypothesisReport:
    """Sample the two-sided attraction bound, the chain bound and jet agreement.

    Points lie on spheres of radii ``delta * i / (samples + 1)``.  Violations
    are counted, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    r, s = seq.params.r, seq.params.s
    Z0 = _sphere_samples(seq.n, seq.params.delta, samples, seed)
    nz = np.linalg.norm(Z0, axis=1)
    att, up, lo = 0, 0.0, math.inf
    chain, worst_chain = 0, 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, j_max + 1):
            W = seq.map(j).evaluate(Z0)
            nw = np.linalg.norm(W, axis=1)
            att += int(np.count_nonzero(~((s * nz < nw) & (nw < r * nz))))
            up = max(up, float(np.max(nw / (r * nz))))
            lo = min(lo, float(np.min(nw / (s * nz))))
            Z = Z0
            for k in range(j, j_max + 1):
                Z = W if k == j else seq.map(k).evaluate(Z)
                if k >= j + seq.K - 1:
                    ratio = np.linalg.norm(Z, axis=1) / (r ** (k - j + 1) * nz)
                    chain += int(np.count_nonzero(~(ratio <= 1)))
                    worst_chain = max(worst_chain, float(np.nanmax(ratio)))
    N = max(q - 1, 1)
    ref = seq.map(1).jet(N).coeffs
    disc = max(float(np.max(np.abs(seq.map(j).jet(N).coeffs - ref))) for j in range(1, j_max + 1))
    return HypothesisReport(j_max, samples, att, up, lo, chain, worst_chain, disc, q)


# psi ----------------------------------------------------------------------

def psi_approx(seq: SequenceSpec, nf: NormalFormResult, z, j: int) -> np.ndarray:
    """``psi_j(z) = G^{-j}(T(f_{1,j}(z)))`` for a point or a batch of points."""
    if j < 1:
        raise ValueError("j must be >= 1")
    W = orbit_compose(seq, 1, j, z)
    return nf.apply_G_inverse(evaluate(nf.T, W), j)


def fit_geometric_ratio(diffs: Sequence[float], scale: float = 1.0,
                        min_terms: int = 3) -> float | None:
    """Log-linear fit of ``diffs[i] ~ c * rho**i`` over the decaying prefix.

    The prefix ends at the first entry below the rounding floor
    ``1e4 * eps * scale``; fewer than ``min_terms`` usable entries give None.
    """
    d = np.asarray(diffs, dtype=float)
    floor = 1e4 * np.finfo(float).eps * max(scale, 1e-300)
    below = np.flatnonzero(~(d > floor))
    end = int(below[0]) if below.size else len(d)
    if end < min_terms:
        return None
    idx = np.arange(end)
    slope = np.polyfit(idx, np.log(d[:end]), 1)[0]
    return float(np.exp(slope))


def _log_det(M: np.ndarray) -> complex:
    sign, logabs = np.linalg.slogdet(M)
    return complex(logabs) + 1j * float(np.angle(sign))


@dataclass(frozen=True)
class PsiTable:
    """Cauchy differences ``||psi_{j+K}(z) - psi_j(z)||`` for ``j = K..j_max``."""

    js: tuple[int, ...]
    diffs: np.ndarray = field(repr=False)  # (points, len(js))
    fitted: tuple[float | None, ...]
    reference_ratio: float | None
    det_at_zero: complex
    K: int

    def rows(self):
        for p, fit in enumerate(self.fitted):
            for c, j in enumerate(self.js):
                yield p, j, float(self.diffs[p, c]), fit, self.reference_ratio


def psi_convergence_report(seq: SequenceSpec, nf: NormalFormResult, points, j_max: int,
                           reference_ratio: float | None = None) -> PsiTable:
    """Cauchy differences of ``psi_j`` at each point, the fitted ratio per point
    and ``det D psi_{j_max}(0)`` from the linear parts of the chain."""
    Z = np.atleast_2d(np.asarray(points, dtype=complex))
    K = seq.K
    if j_max < K:
        raise ValueError("j_max must be >= K")
    psis = {}
    W = Z
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, j_max + K + 1):
            W = seq.map(j).evaluate(W)
            if j >= K:
                psis[j] = nf.apply_G_inverse(evaluate(nf.T, W), j)
    js = tuple(range(K, j_max + 1))
    diffs = np.stack([np.linalg.norm(psis[j + K] - psis[j], axis=1) for j in js], axis=1)
    scales = np.max(np.abs(psis[j_max]), axis=1)
    fitted = tuple(fit_geometric_ratio(row, sc) for row, sc in zip(diffs, scales))

    # det D psi_j(0) = det(DG^{-1}(0))**j * prod_k det(Df_k(0))
    log_det = j_max * _log_det(nf.Gtilde_inverse.linear_part)
    log_det += sum(_log_det(seq.map(k).linear_part) for k in range(1, j_max + 1))
    return PsiTable(js, diffs, fitted, reference_ratio, complex(np.exp(log_det)), K)


def injectivity_check(seq: SequenceSpec, nf: NormalFormResult, points, j: int, pairs: int,
                      seed: int = 0, min_sep: float = 1e-3, gap: float = 1e-8) -> tuple[int, float]:
    """``(collisions, smallest image gap)`` over random pairs at least ``min_sep`` apart."""
    Z = np.atleast_2d(np.asarray(points, dtype=complex))
    rng = np.random.default_rng(seed)
    images = psi_approx(seq, nf, Z, j)
    a = rng.integers(0, len(Z), size=4 * pairs)
    b = rng.integers(0, len(Z), size=4 * pairs)
    ok = np.linalg.norm(Z[a] - Z[b], axis=1) >= min_sep
    a, b = a[ok][:pairs], b[ok][:pairs]
    gaps = np.linalg.norm(images[a] - images[b], axis=1)
    return int(np.count_nonzero(~(gaps >= gap))), float(gaps.min(initial=math.inf))


# grids --------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Cells ``origin + t1 * dir1 + t2 * dir2`` on a ``width x height`` lattice."""

    origin: tuple[complex, ...]
    dir1: tuple[complex, ...]
    dir2: tuple[complex, ...]
    t1_range: tuple[float, float]
    t2_range: tuple[float, float]
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid resolution must be at least 2x2, got {self.width}x{self.height}")
        if not len(self.origin) == len(self.dir1) == len(self.dir2):
            raise DimensionError("grid origin and directions differ in dimension")

    @classmethod
    def centered(cls, n: int, radius: float, width: int, height: int) -> "GridSpec":
        """Real slice of the first two coordinates, ``[-radius, radius]**2``."""
        e = [tuple(complex(i == k) for i in range(n)) for k in range(min(n, 2))]
        if n == 1:
            e.append((1j,))
        return cls(tuple([0j] * n), e[0], e[1], (-radius, radius), (-radius, radius), width, height)

    def parameters(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(*self.t1_range, self.width), np.linspace(*self.t2_range, self.height))

    def points(self) -> np.ndarray:
        t1, t2 = self.parameters()
        T1, T2 = np.meshgrid(t1, t2)  # rows follow t2
        o, d1, d2 = (np.array(v, dtype=complex) for v in (self.origin, self.dir1, self.dir2))
        return o + T1[..., None] * d1 + T2[..., None] * d2


@dataclass(frozen=True)
class BasinGrid:
    spec: GridSpec
    status: np.ndarray = field(repr=False)  # (height, width) codes
    steps: np.ndarray = field(repr=False)   # first-entry step, -1 if none

    def counts(self) -> dict:
        return {name: int(np.count_nonzero(self.status == code)) for code, name in _STATUS.items()}

    def rows(self):
        t1, t2 = self.spec.parameters()
        for i in range(self.spec.height):
            for j in range(self.spec.width):
                code = int(self.status[i, j])
                k = int(self.steps[i, j])
                yield i, j, float(t1[j]), float(t2[i]), _STATUS[code], (k if code == ATTRACTED else None)

    def image(self) -> np.ndarray:
        """8-bit codes: attracted ``1 + round(253 k / k_max)``, undecided 255, diverged 0."""
        img = np.zeros(self.status.shape, dtype=np.uint8)
        att = self.status == ATTRACTED
        kmax = max(int(self.steps[att].max(initial=0)), 1)
        img[att] = (1 + np.rint(253 * self.steps[att] / kmax)).astype(np.uint8)
        img[self.status == UNDECIDED] = 255
        return img


def grid_classify(seq: SequenceSpec, grid: GridSpec, j_max: int = DEFAULT_JMAX,
                  threads: int = 1, escape: float = ESCAPE_RADIUS) -> BasinGrid:
    """Membership for every cell; rows are split across ``threads`` workers."""
    if len(grid.origin) != seq.n:
        raise DimensionError("grid and sequence differ in dimension")
    P = grid.points()
    H = grid.height
    status = np.empty((H, grid.width), dtype=int)
    steps = np.empty((H, grid.width), dtype=int)
    blocks = np.array_split(np.arange(H), max(1, min(threads, H)))

    def work(rows):
        st, kk = classify_points(seq, P[rows].reshape(-1, seq.n), j_max, escape)
        status[rows] = st.reshape(len(rows), -1)
        steps[rows] = kk.reshape(len(rows), -1)

    if threads <= 1:
        for rows in blocks:
            work(rows)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    return BasinGrid(grid, status, steps)
