"""Butcher tableaux: collocation families, classic named methods, diagnostics.

Collocation coefficients are built directly from their defining property:
A[i, j] integrates the j-th Lagrange cardinal polynomial over [0, c_i] and
b[j] integrates it over [0, 1], with the nodes coming from
:mod:`rkfem.quadrature`.  LobattoIIIC shares b and c with LobattoIIIA but
solves for each row of A from the first-column condition plus simplified
stage-order conditions.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import quadrature

MAX_STAGES = 8

GAUSS_LEGENDRE = "GaussLegendre"
RADAU_IIA = "RadauIIA"
LOBATTO_IIIA = "LobattoIIIA"
LOBATTO_IIIC = "LobattoIIIC"

COLLOCATION_FAMILIES = (GAUSS_LEGENDRE, RADAU_IIA, LOBATTO_IIIA)


class SchemeClass(enum.Enum):
    EXPLICIT = "Explicit"
    DIAGONALLY_IMPLICIT = "DiagonallyImplicit"
    FULLY_IMPLICIT = "FullyImplicit"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ButcherTableau:
    """An s-stage Runge-Kutta tableau with declared classical and stage order.

    Arrays are read-only so instances can be shared freely.  Construction
    checks the cheap structural invariants (shapes, sum(b) = 1 and row sums
    of A equal to c, both to 1e-12); the order conditions themselves are the
    business of :func:`check_order_conditions`.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    stage_order: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "c", _frozen(self.c))
        s = len(self.b)
        if self.A.shape != (s, s) or self.c.shape != (s,):
            raise ValueError("inconsistent tableau shapes")
        if abs(self.b.sum() - 1.0) > 1e-12:
            raise ValueError("weights b must sum to 1")
        if np.max(np.abs(self.A.sum(axis=1) - self.c)) > 1e-12:
            raise ValueError("row sums of A must equal c")

    @property
    def num_stages(self):
        return len(self.b)


def _lagrange_values(nodes, tau):
    """Values of every Lagrange cardinal polynomial for `nodes` at `tau`."""
    tau = np.asarray(tau)
    s = len(nodes)
    out = np.empty((len(tau), s))
    for j in range(s):
        num = np.ones_like(tau)
        den = 1.0
        for k in range(s):
            if k == j:
                continue
            num = num * (tau - nodes[k])
            den *= nodes[j] - nodes[k]
        out[:, j] = num / den
    return out


def _collocation_coeffs(c):
    """(A, b) with A[i,:] = integral of the cardinal basis over [0, c_i]."""
    s = len(c)
    pts, wts = quadrature.gauss_rule(s + 2)  # exact: integrands have degree s-1
    b = wts @ _lagrange_values(c, pts)
    A = np.zeros((s, s))
    for i in range(s):
        if c[i] != 0.0:
            A[i] = (c[i] * wts) @ _lagrange_values(c, c[i] * pts)
    return A, b


def make_collocation(family, s):
    """Collocation tableau of the given family with s stages (s <= 8)."""
    if not 1 <= s <= MAX_STAGES:
        raise ValueError("stage count must be between 1 and %d" % MAX_STAGES)
    if family == GAUSS_LEGENDRE:
        c = quadrature.to_unit(quadrature.gauss_points(s))
        order, stage_order = 2 * s, s
    elif family == RADAU_IIA:
        c = quadrature.to_unit(quadrature.radau_right_points(s))
        order, stage_order = 2 * s - 1, s
    elif family == LOBATTO_IIIA:
        if s < 2:
            raise ValueError("LobattoIIIA needs at least two stages")
        c = quadrature.to_unit(quadrature.lobatto_points(s))
        order, stage_order = 2 * s - 2, s
    else:
        raise ValueError("unknown collocation family %r" % (family,))
    A, b = _collocation_coeffs(c)
    return ButcherTableau(A, b, c, order, stage_order, "%s(%d)" % (family, s))


def make_lobatto_iiic(s):
    """LobattoIIIC(s): Lobatto nodes/weights, A rows from C(s-1) plus A[i,0]=b[0]."""
    if not 2 <= s <= MAX_STAGES:
        raise ValueError("LobattoIIIC needs 2..%d stages" % MAX_STAGES)
    base = make_collocation(LOBATTO_IIIA, s)
    b, c = base.b, base.c
    # Row i solves: a[0] = b[0]  and  sum_j a_j c_j^(m-1) = c_i^m / m, m=1..s-1.
    M = np.zeros((s, s))
    M[0, 0] = 1.0
    for m in range(1, s):
        M[m] = c ** (m - 1)
    A = np.zeros((s, s))
    for i in range(s):
        rhs = np.zeros(s)
        rhs[0] = b[0]
        for m in range(1, s):
            rhs[m] = c[i] ** m / m
        A[i] = np.linalg.solve(M, rhs)
    return ButcherTableau(A, b, c, 2 * s - 2, s - 1, "LobattoIIIC(%d)" % s)


def _forward_euler():
    return ButcherTableau([[0.0]], [1.0], [0.0], 1, 0, "ForwardEuler")


def _explicit_midpoint():
    return ButcherTableau([[0, 0], [0.5, 0]], [0.0, 1.0], [0.0, 0.5], 2, 1,
                          "ExplicitMidpoint")


def _rk4():
    A = [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1.0, 0]]
    b = [1 / 6, 1 / 3, 1 / 3, 1 / 6]
    return ButcherTableau(A, b, [0.0, 0.5, 0.5, 1.0], 4, 1, "RK4")


def _ssp33():
    A = [[0, 0, 0], [1.0, 0, 0], [0.25, 0.25, 0]]
    return ButcherTableau(A, [1 / 6, 1 / 6, 2 / 3], [0.0, 1.0, 0.5], 3, 1, "SSP33")


def _qin_zhang():
    # Two-stage symplectic A-stable SDIRK.
    A = [[0.25, 0.0], [0.5, 0.25]]
    return ButcherTableau(A, [0.5, 0.5], [0.25, 0.75], 2, 1, "QinZhang")


def _alexander_dirk2():
    g = 1.0 - np.sqrt(2.0) / 2.0  # root of g^2 - 2g + 1/2 in (0, 1)
    A = [[g, 0.0], [1.0 - g, g]]
    return ButcherTableau(A, [1.0 - g, g], [g, 1.0], 2, 1, "AlexanderDIRK2")


def _alexander_dirk3():
    # Three-stage L-stable SDIRK of order 3; g is the root of
    # x^3 - 3x^2 + (3/2)x - 1/6 lying in (1/6, 1/2), polished by Newton.
    g = 0.4358665215
    for _ in range(50):
        f = g ** 3 - 3 * g ** 2 + 1.5 * g - 1 / 6
        df = 3 * g ** 2 - 6 * g + 1.5
        step = f / df
        g -= step
        if abs(step) < 1e-16:
            break
    b1 = -1.5 * g ** 2 + 4 * g - 0.25
    b2 = 1.5 * g ** 2 - 5 * g + 1.25
    A = [[g, 0, 0], [(1 - g) / 2, g, 0], [b1, b2, g]]
    return ButcherTableau(A, [b1, b2, g], [g, (1 + g) / 2, 1.0], 3, 1,
                          "AlexanderDIRK3")


_NAMED = {
    "forwardeuler": _forward_euler,
    "explicitmidpoint": _explicit_midpoint,
    "rk4": _rk4,
    "ssp33": _ssp33,
    "qinzhang": _qin_zhang,
    "alexanderdirk2": _alexander_dirk2,
    "alexanderdirk3": _alexander_dirk3,
}


def make_named(name):
    """Look up a classic tableau by name (case and separator insensitive)."""
    key = "".join(ch for ch in name.lower() if ch.isalnum())
    try:
        return _NAMED[key]()
    except KeyError:
        raise ValueError("unknown tableau name %r" % (name,)) from None


def named_tableaux():
    """Canonical names accepted by :func:`make_named`."""
    return tuple(sorted(_NAMED[k]().name for k in _NAMED))


def check_order_conditions(t, p=None, q=None):
    """Residuals of the B(p) quadrature and C(q) stage-order conditions.

    Returns a list of (label, residual) pairs; a tableau satisfies its
    declared orders when every residual is <= 1e-10.
    """
    p = t.order if p is None else p
    q = t.stage_order if q is None else q
    out = []
    for k in range(1, p + 1):
        out.append(("B(%d)" % k, abs(t.b @ t.c ** (k - 1) - 1.0 / k)))
    for m in range(1, q + 1):
        res = t.A @ t.c ** (m - 1) - t.c ** m / m
        out.append(("C(%d)" % m, float(np.max(np.abs(res)))))
    return out


def order_conditions_ok(t, p=None, q=None, tol=1e-10):
    return all(r <= tol for _, r in check_order_conditions(t, p, q))


def stability_function(t, z):
    """R(z) = 1 + z b^T (I - zA)^{-1} 1, valid for complex z."""
    s = t.num_stages
    z = complex(z)
    M = np.eye(s, dtype=complex) - z * t.A
    return 1.0 + z * (t.b @ np.linalg.solve(M, np.ones(s)))

def stability_at_infinity(t):
    """|R(inf)| = |1 - b^T A^{-1} 1|; raises for singular A."""
    try:
        y = np.linalg.solve(t.A, np.ones(t.num_stages))
    except np.linalg.LinAlgError:
        raise ValueError("A is singular; R at infinity is undefined") from None
    return abs(1.0 - t.b @ y)


def classify(t, tol=1e-14):
    """Explicit / diagonally implicit / fully implicit, from the sparsity of A."""
    s = t.num_stages
    upper = max((abs(t.A[i, j]) for i in range(s) for j in range(i + 1, s)),
                default=0.0)
    if upper > tol:
        return SchemeClass.FULLY_IMPLICIT
    diag = max(abs(t.A[i, i]) for i in range(s))
    if diag > tol:
        return SchemeClass.DIAGONALLY_IMPLICIT
    return SchemeClass.EXPLICIT
