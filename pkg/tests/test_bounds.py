import math

import mpmath as mp
import pytest
from hypothesis import assume, given, strategies as st

from fbbasin.bounds import (AttractionParams, C_constant, gamma_proof_estimate,
                            log_gamma_proof_estimate, minimal_p, q_bounds, q_from_gamma,
                            q_theorem_dim2, q_theorem_normal)
from fbbasin.errors import BoundOverflowError

mp.mp.dps = 50


def Q(n, m):
    return mp.binomial(m + n - 1, n - 1)


# independent high-precision oracles ----------------------------------------

def oracle_C(r, delta, n, p):
    base = mp.sqrt(n) / min(1, mp.mpf(delta))
    return mp.mpf(r) * mp.fsum(n ** 2 * Q(n, m) ** 2 * base ** m for m in range(2, p))


def oracle_gamma(r, s, delta, n, p):
    C = oracle_C(r, delta, n, p)
    K = mp.sqrt(n) * mp.factorial(n - 1) * (1 + C) ** (n - 1) / mp.mpf(s) ** n
    top = (p - 1) ** ((n - 1) ** 2)
    return mp.fsum((Q(n, i) * mp.sqrt(n)) ** i * K ** i for i in range(1, top + 1))


def oracle_normal(r, s, delta, n, p):
    C = oracle_C(r, delta, n, p)
    base = mp.factorial(n) / mp.mpf(s) ** n * (1 + C) ** (n - 1)
    top = (p - 1) ** ((n - 1) ** 2)
    total = mp.fsum(Q(n, i) * base ** i for i in range(1, top + 1))
    return mp.log(total) / mp.log(1 / mp.mpf(r)) + 1


def oracle_dim2(r, s, delta, p):
    inner = 1 + 2 * mp.mpf(r) * p * (mp.sqrt(2) / min(1, mp.mpf(delta))) ** (p - 1)
    base = 2 / mp.mpf(s) ** 2 * inner
    total = mp.fsum((i + 1) * base ** i for i in range(1, p))
    return mp.log(total) / mp.log(1 / mp.mpf(r)) + 1


# examples -----------------------------------------------------------------

def test_minimal_p_examples():
    assert minimal_p(0.5, 0.3) == 2
    assert minimal_p(0.9, 0.5) == 7
    assert minimal_p(0.5, 0.49) == 2
    with pytest.raises(ValueError):
        minimal_p(0.3, 0.5)


@given(st.floats(0.05, 0.99), st.floats(0.01, 0.99))
def test_minimal_p_is_minimal(r, frac):
    s = r * frac
    assume(0 < s < r)
    p = minimal_p(r, s)
    assert r ** p < s
    assert p == 1 or r ** (p - 1) >= s


def test_C_examples():
    P = AttractionParams(0.5, 0.3, 1.0, 2)
    assert C_constant(P, 2) == 0
    assert C_constant(P, 3) == pytest.approx(36)
    assert C_constant(AttractionParams(0.5, 0.3, 2.0, 2), 3) == pytest.approx(36)


def test_gamma_examples():
    assert gamma_proof_estimate(AttractionParams(0.5, 0.3, 1.0, 2), 2) == pytest.approx(4 / 0.09)
    assert gamma_proof_estimate(AttractionParams(0.6, 0.5, 1.0, 2), 2) == pytest.approx(16)
    for p in (2, 3, 5):
        assert gamma_proof_estimate(AttractionParams(0.5, 0.3, 1.0, 1), p) == pytest.approx(1 / 0.3)


def test_q_bounds_examples():
    P = AttractionParams(0.5, 0.3, 1.0, 2)
    rep = q_bounds(P, 2)
    assert rep.gamma_proof == pytest.approx(44.444, rel=1e-4)
    assert rep.q_from_gamma == 6
    assert 0.5 ** 6 * rep.gamma_proof < 1 <= 0.5 ** 5 * rep.gamma_proof
    assert rep.q_theorem_dim2 == pytest.approx(float(oracle_dim2(0.5, 0.3, 1.0, 2)), rel=1e-12)
    assert rep.q_theorem_dim2 == pytest.approx(8.41, abs=5e-3)
    assert rep.q_theorem_dim2_ceil == 9
    short = q_bounds(P, 2, no_special=True)
    assert short.q == 2 and short.gamma == pytest.approx(1 / 0.3) and short.shortcut


def test_q_bounds_notes():
    P = AttractionParams(0.5, 0.3, 1.0, 2)
    rep = q_bounds(P, 2, normal=False)
    assert any("supply q manually" in n for n in rep.notes)
    d = rep.to_dict()
    assert d["q_from_gamma"] == 6 and isinstance(d["notes"], list)


def test_overflow_is_reported():
    P = AttractionParams(0.9, 0.05, 0.1, 3)
    with pytest.raises(BoundOverflowError):
        gamma_proof_estimate(P, 60)
    rep = q_bounds(P, 4, no_special=True)
    assert rep.q == 4


# oracle agreement ---------------------------------------------------------

params = st.tuples(st.floats(0.2, 0.95), st.floats(0.05, 0.95), st.floats(0.1, 2.0),
                   st.integers(1, 3), st.integers(2, 5))


@given(params)
def test_against_mpmath(pr):
    r, frac, delta, n, p = pr
    s = r * frac
    P = AttractionParams(r, s, delta, n)
    assert C_constant(P, p) == pytest.approx(float(oracle_C(r, delta, n, p)), rel=1e-12)
    lg = log_gamma_proof_estimate(P, p)
    assert lg == pytest.approx(float(mp.log(oracle_gamma(r, s, delta, n, p))), rel=1e-10, abs=1e-10)
    assert q_theorem_normal(P, p) == pytest.approx(float(oracle_normal(r, s, delta, n, p)), rel=1e-10)
    if n == 2:
        assert q_theorem_dim2(P, p) == pytest.approx(float(oracle_dim2(r, s, delta, p)), rel=1e-10)


@given(st.floats(0.1, 0.95), st.floats(-50, 700))
def test_q_from_gamma_brackets(r, lg):
    q = q_from_gamma(r, log_gamma=lg)
    assert q * math.log(r) + lg < 0 <= (q - 1) * math.log(r) + lg


@given(params)
def test_report_bracketing(pr):
    r, frac, delta, n, p = pr
    try:
        rep = q_bounds(AttractionParams(r, r * frac, delta, n), p)
    except BoundOverflowError:
        assume(False)
    lg = math.log(rep.gamma_proof)
    q = rep.q_from_gamma
    assert q * math.log(r) + lg < 0 <= (q - 1) * math.log(r) + lg
    assert rep.q >= p


@given(st.floats(0.2, 0.95), st.floats(0.05, 0.95))
def test_shortcut_consistency(r, frac):
    s = r * frac
    ratio = math.log(s) / math.log(r)
    assume(s < r and abs(ratio - round(ratio)) > 1e-9)  # exact ties depend on rounding
    assert q_from_gamma(r, 1 / s) == max(minimal_p(r, s), 1)


def test_monotonicity_grid():
    r = 0.7
    for n in (1, 2, 3):
        for delta in (0.3, 0.6, 1.0):
            for s in (0.1, 0.3, 0.5):
                prev = None
                for p in range(2, 6):
                    P = AttractionParams(r, s, delta, n)
                    cur = (log_gamma_proof_estimate(P, p), q_theorem_normal(P, p))
                    if prev is not None:
                        assert cur[0] >= prev[0] - 1e-12 and cur[1] >= prev[1] - 1e-12
                    prev = cur
    for p in (2, 3, 4):
        for n in (2, 3):
            # non-increasing in s
            vals = [log_gamma_proof_estimate(AttractionParams(r, s, 0.5, n), p) for s in (0.1, 0.3, 0.5)]
            assert vals == sorted(vals, reverse=True)
            # non-increasing in delta on (0, 1]
            vals = [log_gamma_proof_estimate(AttractionParams(r, 0.2, d, n), p) for d in (0.2, 0.5, 1.0)]
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
            vals = [q_theorem_dim2(AttractionParams(r, 0.2, d, 2), p) for d in (0.2, 0.5, 1.0)]
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_dim2_quadratic_growth():
    ratios = [q_theorem_dim2(AttractionParams(0.8, 0.3, 1.0, 2), p) / p ** 2 for p in range(2, 11)]
    # q / p**2 stays bounded: no later ratio exceeds the first one
    assert max(ratios) == ratios[0]
    assert all(math.isfinite(x) for x in ratios)


def test_params_validation():
    with pytest.raises(ValueError):
        AttractionParams(0.3, 0.5, 1.0, 2)
    with pytest.raises(ValueError):
        AttractionParams(0.5, 0.3, 0.0, 2)
