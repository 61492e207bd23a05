"""Sorted lower-triangular Schur form for attracting linear parts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, NotAttractingError

__all__ = ["Spectrum", "SchurLower", "schur_lower", "spectrum_bounds_check", "SpectrumCheck"]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by non-increasing modulus, all inside the punctured unit disc."""

    eigenvalues: tuple[complex, ...]

    def __post_init__(self):
        mods = [abs(l) for l in self.eigenvalues]
        if any(not 0 < m < 1 for m in mods):
            raise NotAttractingError(f"eigenvalue moduli {mods} not all in (0, 1)")
        if any(a < b - 1e-9 for a, b in zip(mods, mods[1:])):
            raise ValueError(f"eigenvalues not sorted by non-increasing modulus: {mods}")

    @classmethod
    def of(cls, values) -> "Spectrum":
        return cls(tuple(complex(v) for v in values))

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(np.array(self.eigenvalues))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.eigenvalues, dtype=dtype or complex)


@dataclass(frozen=True)
class SchurLower:
    S: np.ndarray
    L: np.ndarray
    spectrum: Spectrum
    normal: bool

    def __iter__(self):
        return iter((self.S, self.L, self.spectrum))


def _arg(z: complex, tol: float) -> float:
    """Argument in ``[0, 2 pi)``, robust to rounding near the positive real axis."""
    t = float(np.angle(z)) % (2 * np.pi)
    return 0.0 if 2 * np.pi - t <= tol else t


def _precedes(a: complex, b: complex, tol: float) -> int:
    """-1 if ``a`` comes first on the lower diagonal, 1 if ``b`` does, 0 on a tie.

    Larger modulus first, then smaller argument; ties keep their position.
    """
    if abs(abs(a) - abs(b)) > tol:
        return -1 if abs(a) > abs(b) else 1
    da, db = _arg(a, tol), _arg(b, tol)
    if abs(da - db) > tol:
        return -1 if da < db else 1
    return 0


def _is_sorted(diag: np.ndarray, tol: float) -> bool:
    return all(_precedes(a, b, tol) <= 0 for a, b in zip(diag, diag[1:]))


def _swap(T: np.ndarray, Z: np.ndarray, k: int) -> None:
    """Exchange diagonal entries k, k+1 of upper-triangular T by a unitary rotation."""
    t11, t22, t12 = T[k, k], T[k + 1, k + 1], T[k, k + 1]
    v = np.array([t12, t22 - t11])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return
    v = v / nv
    # first column is the eigenvector of the 2x2 block for t22
    G = np.array([[v[0], -np.conj(v[1])], [v[1], np.conj(v[0])]])
    T[k:k + 2, :] = G.conj().T @ T[k:k + 2, :]
    T[:, k:k + 2] = T[:, k:k + 2] @ G
    Z[:, k:k + 2] = Z[:, k:k + 2] @ G
    T[k + 1, k] = 0.0


def schur_lower(A, tol: float = 1e-10) -> SchurLower:
    """Unitary ``S`` and lower-triangular ``L = S^{-1} A S`` with sorted diagonal.

    The diagonal of ``L`` has non-increasing modulus; equal moduli are ordered
    by argument, then by position.  Input that is already lower triangular and
    sorted returns ``S = I`` exactly.  For normal ``A`` the off-diagonal part of
    ``L`` is rounding noise and is dropped, so ``L`` is diagonal.

    Raises
    ------
    NotAttractingError
        If some eigenvalue modulus is outside ``(0, 1)``.
    ConvergenceError
        If the QR iteration fails.
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {A.shape}")
    scale = max(np.linalg.norm(A), 1.0)
    normal = bool(np.linalg.norm(A @ A.conj().T - A.conj().T @ A) <= tol * scale ** 2)

    if not np.any(np.triu(A, 1)) and _is_sorted(np.diag(A), tol):
        S, L = np.eye(n, dtype=complex), A.copy()
    else:
        try:
            T, Z = scipy.linalg.schur(A, output="complex")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"Schur iteration failed: {exc}") from exc
        # sort the upper form ascending so that the flipped lower form descends
        for _ in range(n * n):
            swapped = False
            for k in range(n - 1):
                # upper position k holds what comes later on the lower diagonal
                if _precedes(T[k, k], T[k + 1, k + 1], tol) < 0:
                    _swap(T, Z, k)
                    swapped = True
            if not swapped:
                break
        else:
            raise ConvergenceError("eigenvalue reordering did not settle")
        flip = np.eye(n)[::-1]
        S = Z @ flip
        L = np.tril(flip @ T @ flip)
        if normal:
            L = np.diag(np.diag(L))
        if np.linalg.norm(S.conj().T @ A @ S - L) > max(tol, 1e-12) * scale * 10:
            raise ConvergenceError("Schur reconstruction residual above tolerance")

    diag = np.diag(L)
    mods = np.abs(diag)
    if np.any(mods <= 0) or np.any(mods >= 1):
        raise NotAttractingError(f"eigenvalue moduli {mods.tolist()} not all in (0, 1)")
    return SchurLower(S, L, Spectrum.of(diag), normal)


@dataclass(frozen=True)
class SpectrumCheck:
    ok: bool
    lower_margin: float  # |lambda_n| - s
    upper_margin: float  # r - |lambda_1|

    @property
    def margins(self) -> tuple[float, float]:
        return self.lower_margin, self.upper_margin


def spectrum_bounds_check(spectrum, r: float, s: float) -> SpectrumCheck:
    """Check ``s <= |lambda_i| <= r`` for every eigenvalue."""
    if not 0 < s < r < 1:
        raise ValueError(f"need 0 < s < r < 1, got s={s}, r={r}")
    mods = np.abs(np.asarray(spectrum, dtype=complex))
    lo = float(mods.min() - s)
    hi = float(r - mods.max())
    return SpectrumCheck(lo >= 0 and hi >= 0, lo, hi)


def operator_norm(A) -> float:
    return float(np.linalg.norm(np.asarray(A), 2)) if np.size(A) else 0.0
