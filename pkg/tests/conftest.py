"""Shared fixtures and independent oracles.

The sympy helpers expand compositions symbolically and serve as a second
route for checking the dense coefficient algebra.
"""

from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import HealthCheck, settings

from fbbasin.polyalg import PolyJetMap, _basis

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def symbols(n):
    return sp.symbols(f"z1:{n + 1}")


def to_sympy(f: PolyJetMap, zs=None):
    zs = symbols(f.n) if zs is None else zs
    out = [sp.Integer(0)] * f.n
    for j, a, c in f.terms():
        mono = sp.Mul(*[z ** e for z, e in zip(zs, a)])
        out[j] += complex(c) * mono
    return out


def from_sympy(exprs, n, order):
    zs = symbols(n)
    b = _basis(n, order)
    c = np.zeros((n, b.size), dtype=complex)
    for j, e in enumerate(exprs):
        poly = sp.Poly(sp.expand(e), *zs)
        for mono, coeff in poly.terms():
            if 1 <= sum(mono) <= order:
                c[j, b.index[tuple(mono)]] += complex(coeff)
    return c


def _truncate(p, order):
    return p.ring({m: c for m, c in p.items() if sum(m) <= order})


def sym_compose(f: PolyJetMap, g: PolyJetMap, order: int) -> np.ndarray:
    """Coefficients of ``f o g`` through ``order`` via sympy's sparse polynomial ring."""
    ring, *gens = sp.ring([f"z{i + 1}" for i in range(f.n)], sp.CC)
    inner = [ring(0)] * f.n
    for j, a, c in g.terms():
        inner[j] += ring.ground_new(complex(c)) * _mono(gens, a)
    powers = {}

    def power(i, e):
        if (i, e) not in powers:
            powers[(i, e)] = ring(1) if e == 0 else _truncate(power(i, e - 1) * inner[i], order)
        return powers[(i, e)]

    out = [ring(0)] * f.n
    for j, a, c in f.terms():
        term = ring(1)
        for i, e in enumerate(a):
            term = _truncate(term * power(i, e), order)
        out[j] += ring.ground_new(complex(c)) * term
    b = _basis(f.n, order)
    res = np.zeros((f.n, b.size), dtype=complex)
    for j, p in enumerate(out):
        for mono, coeff in p.items():
            if 1 <= sum(mono) <= order:
                res[j, b.index[tuple(mono)]] += complex(coeff)
    return res


def _mono(gens, a):
    out = 1
    for x, e in zip(gens, a):
        out = out * x ** e
    return out


def random_jet(rng, n, order, scale=1.0, linear=None, exact=True):
    c = (rng.standard_normal((n, _basis(n, order).size))
         + 1j * rng.standard_normal((n, _basis(n, order).size))) * scale
    c[:, 0] = 0
    if linear is not None:
        c[:, 1:n + 1] = linear
    return PolyJetMap(c, order, exact=exact)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def quad_map():
    """(0.5 z1, 0.25 z2 + z1^2)."""
    return PolyJetMap.from_terms(2, [(0, (1, 0), 0.5), (1, (0, 1), 0.25), (1, (2, 0), 1.0)])


@pytest.fixture
def linearizable_map():
    """(0.5 z1, 0.2 z2 + z1^2)."""
    return PolyJetMap.from_terms(2, [(0, (1, 0), 0.5), (1, (0, 1), 0.2), (1, (2, 0), 1.0)])


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k, (ok, detail) in sorted(mod.RESULTS.items()):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
