"""Butcher tableau library tests.

Low-order tableaux are checked against exact rational entries derived by
hand from the collocation conditions; higher orders against independent
oracles (polynomial integration for A/b, an FFT-extracted Taylor series for
the stability function) so nothing is compared against its own construction.
"""

import math

import numpy as np
import pytest

from rkfem import (
    GAUSS_LEGENDRE,
    LOBATTO_IIIA,
    LOBATTO_IIIC,
    MAX_STAGES,
    RADAU_IIA,
    ButcherTableau,
    SchemeClass,
    check_order_conditions,
    classify,
    make_collocation,
    make_lobatto_iiic,
    make_named,
    named_tableaux,
    order_conditions_ok,
    stability_at_infinity,
    stability_function,
)

SQ3 = np.sqrt(3.0)

# Exact low-order tableaux, worked out by hand from the defining conditions.
FROZEN = {
    ("gauss", 1): ([[0.5]], [1.0], [0.5]),
    ("gauss", 2): ([[0.25, 0.25 - SQ3 / 6.0], [0.25 + SQ3 / 6.0, 0.25]],
                   [0.5, 0.5],
                   [0.5 - SQ3 / 6.0, 0.5 + SQ3 / 6.0]),
    ("radau", 1): ([[1.0]], [1.0], [1.0]),
    ("radau", 2): ([[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]],
                   [0.75, 0.25],
                   [1.0 / 3.0, 1.0]),
    ("iiia", 2): ([[0.0, 0.0], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0]),
    ("iiia", 3): ([[0.0, 0.0, 0.0],
                   [5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0],
                   [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]],
                  [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                  [0.0, 0.5, 1.0]),
    ("iiic", 2): ([[0.5, -0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0]),
    ("iiic", 3): ([[1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
                   [1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
                   [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]],
                  [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                  [0.0, 0.5, 1.0]),
}


def _make(tag, s):
    if tag == "gauss":
        return make_collocation(GAUSS_LEGENDRE, s)
    if tag == "radau":
        return make_collocation(RADAU_IIA, s)
    if tag == "iiia":
        return make_collocation(LOBATTO_IIIA, s)
    return make_lobatto_iiic(s)


TRUE_COLLOCATION = (
    [("gauss", s) for s in range(1, 6)]
    + [("radau", s) for s in range(1, 6)]
    + [("iiia", s) for s in range(2, 6)]
)
ALL_COLLOCATION = TRUE_COLLOCATION + [("iiic", s) for s in range(2, 6)]


@pytest.mark.parametrize("tag,s", sorted(FROZEN))
def test_frozen_low_order_entries(tag, s):
    A, b, c = FROZEN[(tag, s)]
    t = _make(tag, s)
    np.testing.assert_allclose(t.A, A, atol=1e-13)
    np.testing.assert_allclose(t.b, b, atol=1e-13)
    np.testing.assert_allclose(t.c, c, atol=1e-13)


@pytest.mark.parametrize("tag,s", TRUE_COLLOCATION)
def test_collocation_integrates_polynomials(tag, s):
    # A and b of a collocation method are integrals of the Lagrange cardinal
    # polynomials, so for any polynomial p of degree < s:
    #   sum_j A[i,j] p(c_j) = int_0^{c_i} p,   sum_j b_j p(c_j) = int_0^1 p.
    t = _make(tag, s)
    rng = np.random.default_rng(20260814 + s)
    for _ in range(3):
        p = np.polynomial.Polynomial(rng.standard_normal(s))
        P = p.integ()
        vals = p(t.c)
        np.testing.assert_allclose(t.A @ vals, P(t.c) - P(0.0), atol=1e-12)
        assert abs(t.b @ vals - (P(1.0) - P(0.0))) < 1e-12


@pytest.mark.parametrize("tag,s", ALL_COLLOCATION)
def test_declared_orders_hold(tag, s):
    t = _make(tag, s)
    assert order_conditions_ok(t)
    assert max(r for _, r in check_order_conditions(t)) <= 1e-10


@pytest.mark.parametrize("tag,s", ALL_COLLOCATION)
def test_stability_function_taylor_matches_exp(tag, s):
    # Extract the Taylor coefficients of R(z) at 0 through a small circle
    # (trapezoid rule = FFT); an order-p method must match 1/k! for k <= p
    # and, for these families, differ at k = p + 1.
    t = _make(tag, s)
    m, r = 256, 0.8  # r must stay inside RadauIIA(1)'s pole at z = 1
    theta = 2.0 * np.pi * np.arange(m) / m
    vals = np.array([stability_function(t, r * np.exp(1j * th))
                     for th in theta])
    coeff = np.fft.fft(vals) / m / r ** np.arange(m)
    p = t.order
    for k in range(p + 1):
        assert abs(coeff[k] * math.factorial(k) - 1.0) < 1e-8, (tag, s, k)
    assert abs(coeff[p + 1] * math.factorial(p + 1) - 1.0) > 1e-6


def test_radau_last_row_equals_b():
    for s in range(1, 6):
        t = make_collocation(RADAU_IIA, s)
        assert np.max(np.abs(t.A[-1] - t.b)) <= 1e-12


def test_lobatto_iiic_first_column_is_b1():
    for s in range(2, 6):
        t = make_lobatto_iiic(s)
        assert np.max(np.abs(t.A[:, 0] - t.b[0])) <= 1e-12


def test_lobatto_iiia_first_row_is_zero():
    for s in range(2, 6):
        assert np.max(np.abs(make_collocation(LOBATTO_IIIA, s).A[0])) == 0.0


def test_gauss_nodes_symmetric():
    for s in range(1, 9):
        c = make_collocation(GAUSS_LEGENDRE, s).c
        np.testing.assert_allclose(c + c[::-1], 1.0, atol=1e-13)
        assert np.all(c > 0.0) and np.all(c < 1.0)


def test_lobatto_nodes_include_endpoints():
    for s in range(2, 9):
        c = make_collocation(LOBATTO_IIIA, s).c
        assert abs(c[0]) <= 1e-14 and abs(c[-1] - 1.0) <= 1e-14


def test_radau_nodes_include_right_endpoint():
    for s in range(1, 9):
        c = make_collocation(RADAU_IIA, s).c
        assert abs(c[-1] - 1.0) <= 1e-14 and np.all(c > 0.0)


def test_stability_at_infinity_l_stable_families():
    for s in range(1, 6):
        assert stability_at_infinity(make_collocation(RADAU_IIA, s)) <= 1e-12
    for s in range(2, 6):
        assert stability_at_infinity(make_lobatto_iiic(s)) <= 1e-12


def test_stability_at_infinity_gauss_is_one():
    for s in range(1, 6):
        t = make_collocation(GAUSS_LEGENDRE, s)
        assert abs(stability_at_infinity(t) - 1.0) <= 1e-12


def test_stability_at_infinity_singular_a_raises():
    with pytest.raises(ValueError):
        stability_at_infinity(make_collocation(LOBATTO_IIIA, 3))
    with pytest.raises(ValueError):
        stability_at_infinity(make_named("ForwardEuler"))


def test_gauss_is_unitary_on_imaginary_axis():
    for s in range(1, 6):
        t = make_collocation(GAUSS_LEGENDRE, s)
        for y in np.linspace(0.1, 50.0, 17):
            assert abs(abs(stability_function(t, 1j * y)) - 1.0) < 1e-11


def test_radau_damps_left_half_plane():
    t = make_collocation(RADAU_IIA, 2)
    rng = np.random.default_rng(7)
    z = -np.abs(rng.standard_normal(40)) * 10 + 1j * rng.standard_normal(40)
    assert np.all(np.abs([stability_function(t, zz) for zz in z]) <= 1.0 + 1e-12)


NAMED_CASES = {
    "ForwardEuler": (1, SchemeClass.EXPLICIT),
    "ExplicitMidpoint": (2, SchemeClass.EXPLICIT),
    "RK4": (4, SchemeClass.EXPLICIT),
    "SSP33": (3, SchemeClass.EXPLICIT),
    "QinZhang": (2, SchemeClass.DIAGONALLY_IMPLICIT),
    "AlexanderDIRK2": (2, SchemeClass.DIAGONALLY_IMPLICIT),
    "AlexanderDIRK3": (3, SchemeClass.DIAGONALLY_IMPLICIT),
}


@pytest.mark.parametrize("name", sorted(NAMED_CASES))
def test_named_tableaux(name):
    order, kind = NAMED_CASES[name]
    t = make_named(name)
    assert t.name == name
    assert t.order == order
    assert classify(t) is kind
    assert order_conditions_ok(t)


def test_named_lookup_ignores_case_and_separators():
    assert make_named("qin-zhang").name == "QinZhang"
    assert make_named("QIN_ZHANG").name == "QinZhang"
    assert sorted(named_tableaux()) == sorted(NAMED_CASES)
    with pytest.raises(ValueError):
        make_named("midpointish")


def test_qin_zhang_frozen_entries():
    t = make_named("QinZhang")
    np.testing.assert_allclose(t.A, [[0.25, 0.0], [0.5, 0.25]], atol=0)
    np.testing.assert_allclose(t.b, [0.5, 0.5], atol=0)
    np.testing.assert_allclose(t.c, [0.25, 0.75], atol=0)
    # A-stable with |R(inf)| = 1: b^T A^{-1} 1 = 0 exactly.
    assert abs(stability_at_infinity(t) - 1.0) <= 1e-14


def test_alexander_dirk2_gamma():
    t = make_named("AlexanderDIRK2")
    g = 1.0 - np.sqrt(2.0) / 2.0
    np.testing.assert_allclose(np.diag(t.A), [g, g], atol=1e-15)
    assert stability_at_infinity(t) <= 1e-12  # L-stable


def test_alexander_dirk3_l_stable():
    assert stability_at_infinity(make_named("AlexanderDIRK3")) <= 1e-10


def test_classify_by_sparsity():
    assert classify(make_collocation(GAUSS_LEGENDRE, 1)) \
        is SchemeClass.DIAGONALLY_IMPLICIT
    assert classify(make_collocation(GAUSS_LEGENDRE, 2)) \
        is SchemeClass.FULLY_IMPLICIT
    assert classify(make_collocation(RADAU_IIA, 2)) is SchemeClass.FULLY_IMPLICIT
    assert classify(make_collocation(LOBATTO_IIIA, 2)) \
        is SchemeClass.DIAGONALLY_IMPLICIT


def test_stage_count_bounds():
    with pytest.raises(ValueError):
        make_collocation(GAUSS_LEGENDRE, 0)
    with pytest.raises(ValueError):
        make_collocation(GAUSS_LEGENDRE, MAX_STAGES + 1)
    with pytest.raises(ValueError):
        make_collocation(LOBATTO_IIIA, 1)
    with pytest.raises(ValueError):
        make_lobatto_iiic(1)
    with pytest.raises(ValueError):
        make_collocation("Chebyshev", 2)
    # the declared ceiling itself must construct cleanly
    assert make_collocation(GAUSS_LEGENDRE, MAX_STAGES).num_stages == MAX_STAGES


def test_constructor_validates_structure():
    with pytest.raises(ValueError):
        ButcherTableau([[0.5]], [0.9], [0.5], 1, 1)   # b does not sum to 1
    with pytest.raises(ValueError):
        ButcherTableau([[0.5]], [1.0], [0.3], 1, 1)   # row sum != c
    with pytest.raises(ValueError):
        ButcherTableau([[0.5, 0.0]], [1.0], [0.5], 1, 1)  # ragged shapes


def test_arrays_are_read_only():
    t = make_collocation(GAUSS_LEGENDRE, 2)
    with pytest.raises(ValueError):
        t.A[0, 0] = 99.0
    with pytest.raises(ValueError):
        t.b[0] = 99.0
