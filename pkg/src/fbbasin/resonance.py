"""Special (resonant) monomials and the homological equation ``R = X + [A, H]``.

For a lower-triangular linear map ``A`` with diagonal ``lambda`` the commutator
``Gamma_A H = A o H - H o A`` acts on the degree-``m`` layer; on the monomial
map ``e_j z**alpha`` its diagonal entry is the divisor ``lambda_j - lambda**alpha``.
Divisors that vanish on monomials with ``alpha_j = ... = alpha_n = 0`` mark the
special elements, which cannot be removed and are kept in ``X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError, NearResonanceError
from .polyalg import HomogeneousMap, multi_index_basis, substitution_matrix
from .spectral import Spectrum

__all__ = [
    "SpecialBasisReport",
    "special_basis",
    "divisors",
    "rosay_rudin_vanishing_degree",
    "commutator_apply",
    "commutator_matrix",
    "commutator_solve",
]

RESONANCE_TOL = 1e-9
NEAR_RESONANCE_GUARD = 1e-6


def _eigs(spectrum) -> np.ndarray:
    return np.asarray(spectrum, dtype=complex).ravel()


def divisors(spectrum, m: int) -> np.ndarray:
    """``(n, Q(m))`` table of ``lambda_j - lambda**alpha``."""
    lam = _eigs(spectrum)
    n = len(lam)
    _, alphas = multi_index_basis(n, m)
    powers = np.array([np.prod(lam ** np.array(a)) for a in alphas])
    return lam[:, None] - powers[None, :]


def _triangular_support(n: int, m: int) -> np.ndarray:
    """Mask of (j, alpha) with alpha supported on the variables before j."""
    _, alphas = multi_index_basis(n, m)
    A = np.array(alphas).reshape(len(alphas), n)
    return np.array([[not A[k, j:].any() for k in range(len(alphas))] for j in range(n)])


def _special_mask(lam: np.ndarray, m: int, tol: float) -> tuple[np.ndarray, np.ndarray]:
    div = divisors(lam, m)
    mask = _triangular_support(len(lam), m) & (np.abs(div) <= tol * np.abs(lam)[:, None])
    return mask, div


def rosay_rudin_vanishing_degree(spectrum, tol: float = RESONANCE_TOL) -> int:
    """Smallest ``p >= 2`` with ``|lambda_1|**p < |lambda_n|``: no special elements from degree p on.

    The inequality must hold with relative margin ``tol`` so that rounded
    spectra never claim vanishing where :func:`special_basis` still finds
    special elements.
    """
    mods = np.abs(_eigs(spectrum))
    top, bottom = float(mods.max()), float(mods.min()) * (1 - tol)
    p = max(2, int(math.floor(math.log(bottom) / math.log(top))) + 1)
    while top ** p >= bottom:
        p += 1
    while p > 2 and top ** (p - 1) < bottom:
        p -= 1
    return p


@dataclass(frozen=True)
class SpecialBasisReport:
    """Special monomial maps of degree ``m``; components are 0-based."""

    m: int
    entries: tuple[tuple[int, tuple[int, ...]], ...]
    margin: float
    vanishes_for_all_degrees_ge: int
    mask: np.ndarray = field(repr=False, compare=False)

    @property
    def empty(self) -> bool:
        return not self.entries

    def to_dict(self) -> dict:
        return {
            "degree": self.m,
            "entries": [{"component": j + 1, "exponents": list(a)} for j, a in self.entries],
            "margin": self.margin,
            "vanishes_for_all_degrees_ge": self.vanishes_for_all_degrees_ge,
        }


def special_basis(spectrum, m: int, tol: float = RESONANCE_TOL) -> SpecialBasisReport:
    if m < 2:
        raise ValueError("special elements are defined for degree m >= 2")
    lam = _eigs(spectrum)
    mask, div = _special_mask(lam, m, tol)
    _, alphas = multi_index_basis(len(lam), m)
    entries = tuple((int(j), alphas[k]) for j, k in zip(*np.nonzero(mask)))
    rest = np.abs(div[~mask])
    margin = float(rest.min()) if rest.size else math.inf
    return SpecialBasisReport(m, entries, margin, rosay_rudin_vanishing_degree(lam, tol), mask)


def _as_matrix(A, n: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = np.diag(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"linear part must be square, got shape {A.shape}")
    if n is not None and A.shape[0] != n:
        raise DimensionError(f"linear part acts on C^{A.shape[0]}, map on C^{n}")
    return A


def commutator_apply(A, H: HomogeneousMap) -> HomogeneousMap:
    """``A o H - H o A`` for a linear ``A`` (matrix, or vector of diagonal entries)."""
    A = _as_matrix(A, H.n)
    M = substitution_matrix(A, H.m)
    return HomogeneousMap(H.n, H.m, A @ H.coeffs - H.coeffs @ M)


def commutator_matrix(A, m: int) -> np.ndarray:
    """``Gamma_A`` on the row-major flattening of ``(n, Q(m))`` coefficient tables."""
    A = _as_matrix(A)
    n = A.shape[0]
    M = substitution_matrix(A, m)
    q = M.shape[0]
    return np.kron(A, np.eye(q)) - np.kron(np.eye(n), M.T)


def commutator_solve(A, R: HomogeneousMap, tol: float = RESONANCE_TOL,
                     guard: float = NEAR_RESONANCE_GUARD) -> tuple[HomogeneousMap, HomogeneousMap]:
    """Split ``R = X + Gamma_A H`` with ``X`` supported on special elements.

    ``A`` must be lower triangular with its diagonal sorted by non-increasing
    modulus.  For diagonal ``A``, ``X`` is the coordinate projection of ``R``
    onto the special elements and ``H`` divides the rest by the divisors.  For
    a general lower-triangular ``A`` the system is solved on the complement of
    the special elements.

    Raises
    ------
    NearResonanceError
        If a non-special divisor is below ``guard * |lambda_j|``.
    """
    A = _as_matrix(A, R.n)
    if np.any(np.triu(A, 1)):
        raise ValueError("commutator_solve expects a lower-triangular linear part")
    lam = np.diag(A)
    Spectrum.of(lam)
    n, m = R.n, R.m
    mask, div = _special_mask(lam, m, tol)
    near = (~mask) & (np.abs(div) < guard * np.abs(lam)[:, None])
    if near.any():
        j, k = (int(v[0]) for v in np.nonzero(near))
        raise NearResonanceError(j, multi_index_basis(n, m)[1][k], complex(div[j, k]))

    Rc = R.coeffs
    if not np.any(A - np.diag(lam)):
        X = np.where(mask, Rc, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            H = np.where(mask, 0, Rc / np.where(mask, 1, div))
        return HomogeneousMap(n, m, X), HomogeneousMap(n, m, H)

    G = commutator_matrix(A, m)
    r = Rc.ravel()
    special = np.flatnonzero(mask.ravel())
    if special.size == 0:
        h = np.linalg.solve(G, r)
        x = np.zeros_like(r)
    else:
        free = np.flatnonzero(~mask.ravel())
        E = np.zeros((r.size, special.size), dtype=complex)
        E[special, np.arange(special.size)] = 1.0
        system = np.hstack([E, G[:, free]])
        sol, *_ = np.linalg.lstsq(system, r, rcond=None)
        x = np.zeros_like(r)
        x[special] = sol[:special.size]
        h = np.zeros_like(r)
        h[free] = sol[special.size:]
        if np.linalg.norm(r - x - G @ h, np.inf) > 1e-9 * max(np.abs(r).max(), 1e-300):
            # complement columns rank deficient: fall back to all of H
            system = np.hstack([E, G])
            sol, *_ = np.linalg.lstsq(system, r, rcond=None)
            x[:] = 0
            x[special] = sol[:special.size]
            h = sol[special.size:]
    resid = np.abs(r - x - G @ h).max(initial=0.0)
    if resid > 1e-9 * max(np.abs(r).max(initial=0.0), 1e-300):
        raise ConvergenceError(f"homological equation residual {resid:.3e} above tolerance")
    return HomogeneousMap(n, m, x.reshape(n, -1)), HomogeneousMap(n, m, h.reshape(n, -1))
