"""Lower-triangular normal form: ``T o f = G o T`` modulo terms of order ``q``.

The construction works in Schur coordinates ``f~ = S^{-1} o f o S``.  It starts
from ``T = id`` and ``G~ = L`` (the lower-triangular linear part) and, degree by
degree, splits the defect layer ``R`` of ``T o f~ - G~ o T`` into a special
part ``X`` (absorbed into ``G~``) and a commutator ``[L, H]`` (absorbed into
``T`` through ``T <- T + H o T``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConvergenceError
from .polyalg import HomogeneousMap, PolyJetMap, compose_truncated
from .resonance import (NEAR_RESONANCE_GUARD, RESONANCE_TOL, SpecialBasisReport,
                        commutator_solve, special_basis)
from .spectral import Spectrum, schur_lower
from .triangular import LowerTriangularAuto, invert_exact

__all__ = ["DegreeStep", "NormalFormResult", "normal_form", "sabiini_check", "residual_jets"]

SABIINI_TOL = 1e-12
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class DegreeStep:
    """One induction step: defect ``R``, special part ``X`` and correction ``H``."""

    m: int
    R: HomogeneousMap
    X: HomogeneousMap
    H: HomogeneousMap
    special: SpecialBasisReport


@dataclass(frozen=True)
class NormalFormResult:
    """Output of :func:`normal_form`.

    ``Gtilde`` lives in Schur coordinates; ``T`` is in the original ones, so
    that ``S o Gtilde^{-1} o S^{-1} o T o f - T`` vanishes to order ``q``.
    """

    S: np.ndarray
    L: np.ndarray
    spectrum: Spectrum
    Gtilde: LowerTriangularAuto
    T: PolyJetMap
    q: int
    steps: tuple[DegreeStep, ...]
    residual_norms: tuple[float, ...]  # layers 1..q-1
    scale: float
    normal: bool
    fast_path: bool
    unitary_identity: bool = field(default=False)

    @property
    def S_inv(self) -> np.ndarray:
        return self.S.conj().T

    @property
    def specials(self) -> tuple[SpecialBasisReport, ...]:
        return tuple(st.special for st in self.steps)

    @cached_property
    def Gtilde_inverse(self) -> LowerTriangularAuto:
        return invert_exact(self.Gtilde)

    def _to_original(self, g: PolyJetMap) -> PolyJetMap:
        if self.unitary_identity:
            return g
        return g.conjugate_linear(self.S_inv, self.S)

    @cached_property
    def G(self) -> PolyJetMap:
        """``S o Gtilde o S^{-1}`` as an exact polynomial."""
        return self._to_original(self.Gtilde.map)

    @cached_property
    def G_inverse(self) -> PolyJetMap:
        """``S o Gtilde^{-1} o S^{-1}`` as an exact polynomial."""
        return self._to_original(self.Gtilde_inverse.map)

    def apply_G_inverse(self, z, times: int = 1) -> np.ndarray:
        """``G^{-times}(z)`` evaluated through Schur coordinates (points or batches)."""
        Z = np.asarray(z, dtype=complex)
        if not self.unitary_identity:
            Z = Z @ self.S.conj()  # rows: S^{-1} z
        inv = self.Gtilde_inverse
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(times):
                Z = inv.evaluate(Z)
        if not self.unitary_identity:
            Z = Z @ self.S.T
        return Z


def sabiini_check(f: PolyJetMap, p: int) -> bool:
    """True iff the homogeneous layers ``2..p-1`` of ``f`` vanish."""
    if p < 2:
        raise ValueError("p must be >= 2")
    hi = min(p - 1, f.order)
    return f.max_abs(2, hi) <= SABIINI_TOL


def _scale(f: PolyJetMap, N: int) -> float:
    return max(f.max_abs(1, N), 1e-300)


def normal_form(f: PolyJetMap, q: int, tol: float = RESONANCE_TOL,
                guard: float = NEAR_RESONANCE_GUARD) -> NormalFormResult:
    """Construct ``S``, ``G~`` and ``T`` with a defect vanishing to order ``q``.

    Parameters
    ----------
    f : PolyJetMap
        Map fixing 0 with attracting linear part; a truncated jet must be
        known at least through degree ``q - 1``.
    q : int
        Target order, ``q >= 2``.  Degrees ``2..q-1`` are processed and all
        jets are truncated at ``q - 1``.
    tol, guard : float
        Relative resonance tolerance and near-resonance guard passed to
        :func:`commutator_solve`.

    Raises
    ------
    NotAttractingError, NearResonanceError, ConvergenceError
    """
    if q < 2:
        raise ValueError("q must be >= 2")
    N = max(q - 1, 1)
    if f.order < N and not f.exact:
        raise ValueError(f"f is known only through degree {f.order}; need {N}")
    n = f.n
    schur = schur_lower(f.linear_part)
    S, L, spectrum = schur
    ident = bool(np.array_equal(S, np.eye(n)))
    fN = f.with_order(N)
    ft = fN if ident else fN.conjugate_linear(S, S.conj().T)

    steps: list[DegreeStep] = []
    if sabiini_check(ft, q):
        # nothing to remove below order q: T = id and G~ = L exactly
        for m in range(2, q):
            zero = HomogeneousMap.zeros(n, m)
            steps.append(DegreeStep(m, zero, zero, zero, special_basis(spectrum, m, tol)))
        Gt = LowerTriangularAuto(PolyJetMap.linear(L))
        T = PolyJetMap.identity(n, N)
        fast = True
    else:
        Gpoly = PolyJetMap.linear(L, N)
        Tt = PolyJetMap.identity(n, N)
        for m in range(2, q):
            defect = compose_truncated(Tt, ft, N) - compose_truncated(Gpoly, Tt, N)
            R = defect.layer(m)
            X, H = commutator_solve(L, R, tol, guard)
            steps.append(DegreeStep(m, R, X, H, special_basis(spectrum, m, tol)))
            Gpoly = PolyJetMap(Gpoly.coeffs + X.to_jet(N).coeffs, N, exact=True)
            HT = compose_truncated(H.to_jet(N), Tt, N)
            Tt = PolyJetMap(Tt.coeffs + HT.coeffs, N, exact=True)
        Gt = LowerTriangularAuto(PolyJetMap(Gpoly.coeffs, N, exact=True))
        T = Tt if ident else Tt.conjugate_linear(S.conj().T, S)
        T = PolyJetMap(T.coeffs, N, exact=True).trimmed()
        fast = False

    # the defect is a difference of terms as large as T's coefficients, which
    # grow quickly for strongly non-normal linear parts
    scale = max(_scale(f, N), T.max_abs(1, N))
    result = NormalFormResult(S=S, L=L, spectrum=spectrum, Gtilde=Gt, T=T.trimmed(), q=q,
                              steps=tuple(steps), residual_norms=(), scale=scale,
                              normal=schur.normal, fast_path=fast, unitary_identity=ident)
    layers = residual_jets(f, result, q)
    norms = tuple(h.max_abs() for h in layers)
    worst = max(norms, default=0.0)
    if worst > RESIDUAL_TOL * result.scale:
        raise ConvergenceError(f"conjugacy defect {worst:.3e} above {RESIDUAL_TOL:g} x scale")
    return replace(result, residual_norms=norms)


def residual_jets(f: PolyJetMap, nf: NormalFormResult, q: int | None = None) -> list[HomogeneousMap]:
    """Layers ``1..q-1`` of ``S o G~^{-1} o S^{-1} o T o f - T``.

    ``G~`` is inverted exactly, then everything is composed as jets truncated
    at ``q - 1``.
    """
    q = nf.q if q is None else q
    N = max(q - 1, 1)
    Ginv = nf.Gtilde_inverse.map
    Ginv = Ginv.with_order(N)
    if not nf.unitary_identity:
        Ginv = PolyJetMap(Ginv.coeffs, N, exact=True).conjugate_linear(nf.S_inv, nf.S)
    T = nf.T.with_order(N)
    fN = f.with_order(N)
    inner = compose_truncated(T, fN, N)
    defect = compose_truncated(PolyJetMap(Ginv.coeffs, N, exact=True), inner, N)
    diff = defect.coeffs - T.coeffs
    out = PolyJetMap(diff, N, exact=False)
    return [out.layer(m) for m in range(1, q)] if q >= 2 else []
