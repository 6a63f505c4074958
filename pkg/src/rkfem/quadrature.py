"""Gauss, Radau and Lobatto points on the unit interval.

All node sets are computed from scratch: roots of the relevant orthogonal
polynomial conditions are located by Newton's method started from
Chebyshev-type initial guesses and converged to 1e-14 in the [-1, 1] frame,
then mapped to [0, 1].  Weights for the plain Gauss rule come from the
classical derivative formula.
"""

import numpy as np

_TOL = 1e-14
_MAXIT = 100


def _legendre(n, x):
    """Evaluate (P_n(x), P_n'(x)) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    # derivative from the standard relation, valid away from x = +-1
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_points(n):
    """Roots of P_n on [-1, 1], ascending."""
    if n < 1:
        raise ValueError("need at least one point")
    k = np.arange(n)
    x = np.cos(np.pi * (4 * k + 3) / (4 * n + 2))  # Chebyshev-type guess
    for _ in range(_MAXIT):
        p, dp = _legendre(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _TOL:
            break
    else:
        raise RuntimeError("Legendre root search did not converge")
    return np.sort(x)


def gauss_rule(n):
    """n-point Gauss rule on [0, 1]; weights sum to 1, exact to degree 2n-1."""
    x = gauss_points(n)
    _, dp = _legendre(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return (x + 1.0) / 2.0, w / 2.0


def _radau_interior(m):
    # Interior right-Radau points: the m roots of
    # q(x) = (P_m(x) - P_{m+1}(x)) / (1 - x)  on (-1, 1).
    # Chebyshev scan grid for brackets, then Newton with bisection fallback.
    def q_and_dq(x):
        pm, dpm = _legendre(m, x)
        pn, dpn = _legendre(m + 1, x)
        num = pm - pn
        dnum = dpm - dpn
        q = num / (1.0 - x)
        dq = (dnum * (1.0 - x) + num) / (1.0 - x) ** 2
        return q, dq

    grid = np.cos(np.pi * np.linspace(0.0, 1.0, 16 * (m + 2)))[1:-1]
    grid = np.sort(grid)
    qg, _ = q_and_dq(grid)
    sign = np.sign(qg)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(idx) != m:
        raise RuntimeError("bracket scan found %d of %d Radau roots" % (len(idx), m))
    roots = np.empty(m)
    for r, i in enumerate(idx):
        lo, hi = grid[i], grid[i + 1]
        x = 0.5 * (lo + hi)
        for _ in range(_MAXIT):
            q, dq = q_and_dq(np.array(x))
            dx = q / dq
            xn = x - dx
            if not (lo < xn < hi):  # safeguard: bisect on the bracket
                qlo, _ = q_and_dq(np.array(lo))
                if qlo * q < 0:
                    hi = x
                else:
                    lo = x
                xn = 0.5 * (lo + hi)
            if abs(xn - x) < _TOL:
                x = xn
                break
            x = xn
        roots[r] = x
    return np.sort(roots)


def radau_right_points(s):
    """s right-Radau points on [-1, 1]: interior Jacobi-type roots plus +1."""
    if s < 1:
        raise ValueError("need at least one stage")
    if s == 1:
        return np.array([1.0])
    return np.concatenate([_radau_interior(s - 1), [1.0]])


def lobatto_points(s):
    """s Lobatto points on [-1, 1]: -1, roots of P'_{s-1}, +1."""
    if s < 2:
        raise ValueError("Lobatto rules need at least two points")
    if s == 2:
        return np.array([-1.0, 1.0])
    n = s - 1
    k = np.arange(1, n)
    x = np.cos(np.pi * k / n)  # Chebyshev-Lobatto guesses for interior roots
    for _ in range(_MAXIT):
        p, dp = _legendre(n, x)
        # P''_n from the Legendre ODE: (1 - x^2) P'' = 2x P' - n(n+1) P
        ddp = (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)
        dx = dp / ddp
        x = x - dx
        if np.max(np.abs(dx)) < _TOL:
            break
    else:
        raise RuntimeError("Lobatto root search did not converge")
    return np.concatenate([[-1.0], np.sort(x), [1.0]])


def to_unit(points):
    """Map [-1, 1] points to [0, 1], snapping endpoint values exactly."""
    c = (np.asarray(points) + 1.0) / 2.0
    c[np.abs(c) < 1e-15] = 0.0
    c[np.abs(c - 1.0) < 1e-15] = 1.0
    return c
