"""Closed-form estimates: the exponent p, the constant C, gamma and the order q.

All large sums are accumulated in log space; a value is only exponentiated
when it is reported, and anything past 1e300 raises :class:`BoundOverflowError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .errors import BoundOverflowError
from .triangular import _finite_exp, _logsumexp

__all__ = [
    "AttractionParams",
    "QBoundReport",
    "minimal_p",
    "C_constant",
    "gamma_proof_estimate",
    "log_gamma_proof_estimate",
    "q_from_gamma",
    "q_theorem_normal",
    "q_theorem_dim2",
    "q_bounds",
]

MAX_SUM_TERMS = 10_000_000


@dataclass(frozen=True)
class AttractionParams:
    """``s ||z|| < ||f_j(z)|| < r ||z||`` on the ball of radius ``delta`` in C^n."""

    r: float
    s: float
    delta: float
    n: int

    def __post_init__(self):
        if not 0 < self.s < self.r < 1:
            raise ValueError(f"need 0 < s < r < 1, got s={self.s}, r={self.r}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")


def _Q(n: int, m: int) -> int:
    return comb(m + n - 1, n - 1)


def minimal_p(r: float, s: float) -> int:
    """Smallest integer ``p >= 1`` with ``r**p < s``."""
    if not 0 < s < r < 1:
        raise ValueError(f"need 0 < s < r < 1, got s={s}, r={r}")
    p = max(1, math.floor(math.log(s) / math.log(r)))
    while r ** p >= s:
        p += 1
    while p > 1 and r ** (p - 1) < s:
        p -= 1
    return p


def C_constant(params: AttractionParams, p: int) -> float:
    """``C = r * sum_{m=2}^{p-1} n^2 Q(m)^2 (sqrt(n)/min(1, delta))**m``; zero for p = 2."""
    if p < 2:
        raise ValueError("p must be >= 2")
    n = params.n
    base = math.sqrt(n) / min(1.0, params.delta)
    return params.r * math.fsum(n * n * _Q(n, m) ** 2 * base ** m for m in range(2, p))


def _inverse_constant_log(params: AttractionParams, C: float) -> float:
    n = params.n
    return (0.5 * math.log(n) + math.log(factorial(n - 1))
            + (n - 1) * math.log1p(C) - n * math.log(params.s))


def _sum_terms(params: AttractionParams, p: int) -> int:
    top = (p - 1) ** ((params.n - 1) ** 2)
    if top > MAX_SUM_TERMS:
        raise BoundOverflowError(
            f"the gamma sum has {(p - 1)}^{(params.n - 1) ** 2} terms; reduce p")
    return top


def log_gamma_proof_estimate(params: AttractionParams, p: int) -> float:
    """``log`` of ``sum_i (Q(i) sqrt(n))**i (sqrt(n) (n-1)! (1+C)**(n-1) / s**n)**i``."""
    n = params.n
    C = C_constant(params, p)
    logK = _inverse_constant_log(params, C)
    i = np.arange(1, _sum_terms(params, p) + 1, dtype=float)
    logq = np.array([math.log(_Q(n, int(k))) for k in i])
    return _logsumexp(i * (logq + 0.5 * math.log(n) + logK))


def gamma_proof_estimate(params: AttractionParams, p: int) -> float:
    return _finite_exp(log_gamma_proof_estimate(params, p), "gamma")


def q_from_gamma(r: float, gamma: float | None = None, log_gamma: float | None = None) -> int:
    """Minimal ``q`` with ``r**q * gamma < 1``, i.e. ``floor(ln gamma / ln(1/r)) + 1``."""
    lg = math.log(gamma) if log_gamma is None else log_gamma
    lr = math.log(r)
    q = math.floor(lg / -lr) + 1
    while q * lr + lg >= 0:
        q += 1
    while (q - 1) * lr + lg < 0:
        q -= 1
    return q


def _log_theorem_normal_sum(params: AttractionParams, p: int) -> float:
    n = params.n
    C = C_constant(params, p)
    log_base = math.log(factorial(n)) - n * math.log(params.s) + (n - 1) * math.log1p(C)
    i = np.arange(1, _sum_terms(params, p) + 1, dtype=float)
    logq = np.array([math.log(_Q(n, int(k))) for k in i])
    return _logsumexp(logq + i * log_base)


def q_theorem_normal(params: AttractionParams, p: int) -> float:
    """Real-valued q bound for normal linear parts, any dimension."""
    return _log_theorem_normal_sum(params, p) / math.log(1 / params.r) + 1


def q_theorem_dim2(params: AttractionParams, p: int) -> float:
    """Sharper real-valued q bound for normal linear parts in dimension 2."""
    if params.n != 2:
        raise ValueError("the dimension-2 bound needs n = 2")
    r, s = params.r, params.s
    inner = 1 + 2 * r * p * (math.sqrt(2) / min(1.0, params.delta)) ** (p - 1)
    log_base = math.log(2 / s ** 2) + math.log(inner)
    i = np.arange(1, p, dtype=float)
    lse = _logsumexp(np.log(i + 1) + i * log_base)
    return lse / math.log(1 / r) + 1


def _sig(x, digits: int = 12):
    if x is None or isinstance(x, (bool, int)):
        return x
    return float(f"{x:.{digits}g}")


@dataclass(frozen=True)
class QBoundReport:
    n: int
    r: float
    s: float
    delta: float
    p: int
    C: float
    gamma_proof: float | None
    gamma: float
    q_from_gamma: int | None
    q: int
    reference_ratio: float
    q_theorem_normal: float | None
    q_theorem_normal_ceil: int | None
    q_theorem_dim2: float | None
    q_theorem_dim2_ceil: int | None
    shortcut: bool
    normal: bool
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {k: (_sig(v) if isinstance(v, float) else list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


def q_bounds(params: AttractionParams, p: int | None = None, *, normal: bool = True,
             no_special: bool = False) -> QBoundReport:
    """Compute every q estimate side by side.

    ``q_from_gamma`` always brackets ``gamma_proof``.  ``no_special`` asserts
    that no special elements exist in degrees ``2..p-1``; then the pipeline
    uses ``gamma = 1/s`` and ``q = p``, otherwise ``gamma = gamma_proof`` and
    ``q = max(p, q_from_gamma)``.
    """
    p = minimal_p(params.r, params.s) if p is None else p
    if p < 2:
        p = 2
    notes = []
    C = C_constant(params, p)
    try:
        lg_proof = log_gamma_proof_estimate(params, p)
        gamma_proof = _finite_exp(lg_proof, "gamma")
    except BoundOverflowError:
        if not no_special:
            raise
        gamma_proof = None
        notes.append("general gamma overflows; only the shortcut applies")
    if no_special:
        gamma = 1 / params.s
        notes.append("no special elements in degrees 2..p-1: gamma = 1/s and q = p")
    else:
        gamma = gamma_proof
    qg = None if gamma_proof is None else q_from_gamma(params.r, gamma_proof)
    q = p if no_special else max(p, qg)
    if not normal:
        notes.append("linear part not normal: no closed form for q; supply q manually")
    notes.append("theorem bound weights Q(i) linearly; gamma_proof weights (Q(i) sqrt(n))**i")
    try:
        qn = q_theorem_normal(params, p)
    except BoundOverflowError:
        qn = None
        notes.append("theorem sum has too many terms; not evaluated")
    q2 = q_theorem_dim2(params, p) if params.n == 2 else None
    return QBoundReport(
        n=params.n, r=params.r, s=params.s, delta=params.delta, p=p, C=C,
        gamma_proof=gamma_proof, gamma=gamma, q_from_gamma=qg, q=q,
        reference_ratio=params.r ** q * gamma,
        q_theorem_normal=qn, q_theorem_normal_ceil=None if qn is None else math.ceil(qn),
        q_theorem_dim2=q2, q_theorem_dim2_ceil=None if q2 is None else math.ceil(q2),
        shortcut=no_special, normal=normal, notes=tuple(notes),
    )


