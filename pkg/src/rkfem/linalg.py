"""Stage-system solvers: LU, restart-free GMRES, Kronecker operators, Newton.

The coupled problem for the stage derivatives of a linear semidiscretization
has the block structure I (x) M + dt * A (x) K, with M the bilinear kernel of
the time-derivative terms and K everything multiplied by dt*A[i,j] after the
stage rewrite.  :func:`build_stage_operator` recovers that structure from the
rewritten form by comparing term templates; when it holds, the operator is
applied matrix-free and the stage-diagonal (or stage-lower-triangular) part
becomes a preconditioner whose blocks M + A[i,i]*dt*K are factored once.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, symbolic as sym
from .symbolic import (Coefficient, FieldRef, StageRef, StageTestRef, TestRef,
                       TrialRef)


class SingularMatrixError(RuntimeError):
    pass


class MaxIterationsExceeded(RuntimeError):
    pass


class NewtonDivergence(RuntimeError):
    pass


@dataclass
class SolveStats:
    """What a solve cost; the CLI serializes these as CSV rows."""

    iterations: int = 0
    residual: float = 0.0
    wall_time: float = 0.0
    newton_iterations: int = 0


def lu_factor(A):
    """Cached sparse LU factorization; raises SingularMatrixError cleanly."""
    A = sp.csc_matrix(A)
    try:
        return spla.splu(A)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from None


def lu_solve(A, b):
    """Direct solve via sparse LU."""
    return lu_factor(A).solve(np.asarray(b, dtype=float))


def gmres(op, b, pc=None, rtol=1e-8, atol=0.0, maxit=200, callback=None):
    """Right-preconditioned, restart-free GMRES with modified Gram-Schmidt.

    `op` is a matrix or a callable; `pc` an object with a ``solve`` method
    (identity when omitted).  Right preconditioning leaves the monitored
    quantity equal to the true residual, so convergence means
    ||b - A x|| <= max(rtol * ||b||, atol).  Returns (x, iterations).
    """
    apply_op = op if callable(op) else (lambda v: op @ v)
    apply_pc = (lambda v: v) if pc is None else pc.solve
    b = np.asarray(b, dtype=float)
    n = len(b)
    beta = np.linalg.norm(b)
    if beta == 0.0 or beta <= atol:
        return np.zeros(n), 0
    target = max(rtol * beta, atol)
    V = np.zeros((maxit + 1, n))
    H = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta
    V[0] = b / beta
    k = 0
    while True:
        wv = apply_op(apply_pc(V[k]))
        for i in range(k + 1):  # modified Gram-Schmidt
            H[i, k] = V[i] @ wv
            wv = wv - H[i, k] * V[i]
        hsub = np.linalg.norm(wv)  # subdiagonal entry before rotation
        # apply the accumulated Givens rotations to the new column
        for i in range(k):
            tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = tmp
        denom = np.hypot(H[k, k], hsub)
        cs[k] = H[k, k] / denom
        sn[k] = hsub / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0  # rotated away; H[:k, :k] stays triangular
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        res = abs(g[k + 1])
        if callback is not None:
            callback(res)
        if hsub != 0.0:
            V[k + 1] = wv / hsub
        k += 1
        if res <= target or hsub == 0.0:
            break
        if k >= maxit:
            raise MaxIterationsExceeded(
                "GMRES: residual %.3e after %d iterations" % (res, maxit))
    y = np.linalg.solve(H[:k, :k], g[:k])
    return apply_pc(V[:k].T @ y), k


# ---------------------------------------------------------------------------
# Kronecker-structured stage operators

class KronOperator:
    """Matrix-free action of I (x) M + dt * A (x) K on stage-major vectors.

    M and K act on one stage's concatenated field vector (dimension n); the
    operator dimension is s*n.  dt is a mutable coefficient read at apply
    time.  Rows listed in `bc_rows` behave as identity rows, matching what
    :func:`fem.apply_dirichlet` does to an assembled matrix.
    """

    def __init__(self, M, K, A, dt_coeff, bc_rows=()):
        self.M = sp.csr_matrix(M)
        self.K = sp.csr_matrix(K)
        self.A = np.asarray(A, dtype=float)
        self.dt = dt_coeff
        self.n = self.M.shape[0]
        self.s = self.A.shape[0]
        self.bc_rows = np.asarray(bc_rows, dtype=int)
        self.shape = (self.s * self.n, self.s * self.n)

    def _dt(self):
        return self.dt.value if isinstance(self.dt, Coefficient) else float(self.dt)

    def apply(self, vec):
        X = np.asarray(vec).reshape(self.s, self.n)
        KX = (self.K @ X.T).T          # rows: K x_j
        Y = (self.M @ X.T).T + self._dt() * (self.A @ KX)
        if len(self.bc_rows):
            for i in range(self.s):
                Y[i, self.bc_rows] = X[i, self.bc_rows]
        return Y.ravel()

    __call__ = apply

    def to_dense(self):
        S = np.kron(np.eye(self.s), self.M.toarray()) \
            + self._dt() * np.kron(self.A, self.K.toarray())
        for i in range(self.s):
            for r in self.bc_rows:
                row = i * self.n + r
                S[row, :] = 0.0
                S[row, row] = 1.0
        return S


class IdentityPC:
    def solve(self, r):
        return r


def _stage_blocks(M, K, A, dtv, bc_rows):
    """Factor M + A[i,i]*dt*K per stage, with boundary rows pinned."""
    facs = []
    for i in range(A.shape[0]):
        B = (M + A[i, i] * dtv * K).tocsr()
        if len(bc_rows):
            B, _ = fem.apply_dirichlet(B, None, bc_rows, np.zeros(len(bc_rows)))
        facs.append(lu_factor(B))
    return facs


class BlockDiagonalPC:
    """Stagewise solves with M + A[i,i]*dt*K (the stage-diagonal part)."""

    def __init__(self, M, K, A, dt_coeff, bc_rows=()):
        self.n = M.shape[0]
        self.s = A.shape[0]
        dtv = dt_coeff.value if isinstance(dt_coeff, Coefficient) else float(dt_coeff)
        self.factors = _stage_blocks(sp.csr_matrix(M), sp.csr_matrix(K),
                                     np.asarray(A), dtv, np.asarray(bc_rows, int))

    def solve(self, r):
        R = np.asarray(r).reshape(self.s, self.n)
        return np.stack([self.factors[i].solve(R[i])
                         for i in range(self.s)]).ravel()


class BlockLowerTriangularPC:
    """Forward substitution through the stage-lower-triangular part.

    For a diagonally implicit tableau this is the exact inverse of the stage
    operator, so a right-preconditioned GMRES converges in one iteration.
    """

    def __init__(self, M, K, A, dt_coeff, bc_rows=()):
        self.K = sp.csr_matrix(K)
        self.A = np.asarray(A, dtype=float)
        self.n = M.shape[0]
        self.s = self.A.shape[0]
        self.bc_rows = np.asarray(bc_rows, dtype=int)
        self.dt = dt_coeff
        dtv = dt_coeff.value if isinstance(dt_coeff, Coefficient) else float(dt_coeff)
        self._dtv = dtv
        self.factors = _stage_blocks(sp.csr_matrix(M), self.K, self.A, dtv,
                                     self.bc_rows)

    def solve(self, r):
        R = np.asarray(r).reshape(self.s, self.n)
        Y = np.zeros_like(R)
        for i in range(self.s):
            rhs = R[i].copy()
            for j in range(i):
                if self.A[i, j] != 0.0:
                    c = self.K @ Y[j]
                    if len(self.bc_rows):
                        c[self.bc_rows] = 0.0
                    rhs -= self._dtv * self.A[i, j] * c
            Y[i] = self.factors[i].solve(rhs)
        return Y.ravel()


def make_block_diag_pc(M, K, tableau, dt_coeff, bc_rows=()):
    return BlockDiagonalPC(M, K, tableau.A, dt_coeff, bc_rows)


def make_block_lower_triangular_pc(M, K, tableau, dt_coeff, bc_rows=()):
    return BlockLowerTriangularPC(M, K, tableau.A, dt_coeff, bc_rows)


# ---------------------------------------------------------------------------
# Structure detection

def _template(coef, factors):
    """Canonical string of a monomial with stage indices erased."""
    parts = []
    for f in factors:
        s = sym.to_sexpr(f)
        parts.append(s)
    return "|".join(sorted(parts)), coef


def _erase_stage(e):
    if isinstance(e, StageRef):
        return FieldRef(e.field_id)
    if isinstance(e, StageTestRef):
        return TestRef(e.field_id)
    kids = sym._children(e)
    if not kids:
        return e
    new = tuple(_erase_stage(k) for k in kids)
    if isinstance(e, sym.Sum):
        return sym.Sum(new)
    if isinstance(e, sym.Product):
        return sym.Product(new)
    if isinstance(e, sym.Negate):
        return sym.Negate(new[0])
    if isinstance(e, sym.Power):
        return sym.Power(new[0], e.exponent)
    if isinstance(e, sym.ExternalFn):
        return sym.ExternalFn(e.tag, new[0])
    if isinstance(e, sym.SpatialDeriv):
        return sym.SpatialDeriv(new[0])
    return e


def detect_kron_structure(stage_problem, spaces):
    """Try to factor the stage form as I (x) M + dt * A (x) K.

    Returns (M_form, K_form) of single-stage kernel forms on plain
    field/test references, or None when the terms do not share stage-
    independent templates (nonlinear problems, hand-built forms, ...).
    """
    bt = stage_problem.tableau
    dtc = stage_problem.dt_symbolic
    s = bt.num_stages
    mass = {}    # (i): list of (coef, template, erased factors)
    coupl = {}   # (i, j): dict template -> coef
    kernels = {}  # template -> erased factors (for K assembly)
    mass_templates = {}
    for term in stage_problem.stage_form.terms:
        for coef, factors in fem._expand(term):
            stage_refs = [f for f in factors
                          for n in sym.walk(f) if isinstance(n, StageRef)]
            tests = [n for f in factors for n in sym.walk(f)
                     if isinstance(n, StageTestRef)]
            if not tests:
                return None
            i = tests[0].stage
            if len({n.stage for f in factors for n in sym.walk(f)
                    if isinstance(n, StageTestRef)}) != 1:
                return None
            if not stage_refs:
                continue  # known data; lives on the right-hand side
            if len(stage_refs) != 1:
                return None  # nonlinear in the stages
            j = next(n.stage for f in factors for n in sym.walk(f)
                     if isinstance(n, StageRef))
            has_dt = any(f is dtc for f in factors)
            kept = [f for f in factors if f is not dtc]
            erased = [_erase_stage(f) for f in kept]
            key = "|".join(sorted(sym.to_sexpr(f) for f in erased))
            if not has_dt:
                if i != j:
                    return None
                mass.setdefault(i, {}).setdefault(key, 0.0)
                mass[i][key] += coef
                mass_templates[key] = erased
            else:
                aij = bt.A[i, j]
                if aij == 0.0:
                    return None
                coupl.setdefault((i, j), {}).setdefault(key, 0.0)
                coupl[(i, j)][key] += coef / aij
                kernels[key] = erased
    # every stage must carry the same mass kernel ...
    if sorted(mass) != list(range(s)):
        return None
    base_mass = mass[0]
    for i in range(1, s):
        if set(mass[i]) != set(base_mass):
            return None
        for k in base_mass:
            if abs(mass[i][k] - base_mass[k]) > 1e-14 * max(1, abs(base_mass[k])):
                return None
    # ... and every nonzero A entry the same normalized coupling kernel
    expected = {(i, j) for i in range(s) for j in range(s) if bt.A[i, j] != 0.0}
    if set(coupl) != expected or not coupl:
        return None
    ref = coupl[next(iter(coupl))]
    for pair, kern in coupl.items():
        if set(kern) != set(ref):
            return None
        for k in ref:
            if abs(kern[k] - ref[k]) > 1e-12 * max(1.0, abs(ref[k])):
                return None
    def to_form(kern_dict, templates):
        terms = []
        for key, c in kern_dict.items():
            terms.append(sym._simp_prod([sym.Const(c)] + templates[key]))
        return sym.Form(tuple(terms))
    return to_form(base_mass, mass_templates), to_form(ref, kernels)


def build_stage_operator(stage_problem, spaces, bc_rows=(), want_kron=True):
    """Operator for a *linear* stage problem.

    Returns a :class:`KronOperator` when the Kronecker structure is present
    (and requested); otherwise the fully assembled stage matrix with the
    boundary rows already pinned.  Never an error: assembly is the fallback.
    """
    bt = stage_problem.tableau
    if want_kron:
        found = detect_kron_structure(stage_problem, spaces)
        if found is not None:
            m_form, k_form = found
            lay = fem.layout_for_fields(spaces)
            M = fem.assemble_matrix(m_form, lay, lay, trial_kinds=(FieldRef,))
            K = fem.assemble_matrix(k_form, lay, lay, trial_kinds=(FieldRef,))
            return KronOperator(M, K, bt.A, stage_problem.dt_symbolic,
                                bc_rows=bc_rows)
    lay = fem.layout_for_stages(spaces, bt.num_stages)
    S = fem.assemble_matrix(stage_problem.stage_form, lay, lay,
                            trial_kinds=(StageRef,), strict=False)
    if len(bc_rows):
        rows = np.concatenate([i * (lay.total_dim // bt.num_stages)
                               + np.asarray(bc_rows, int)
                               for i in range(bt.num_stages)])
        S, _ = fem.apply_dirichlet(S, None, rows, np.zeros(len(rows)))
    return S


# ---------------------------------------------------------------------------
# Newton

def newton_solve(residual, jacobian, x0, atol=1e-10, rtol=1e-8, maxit=30,
                 linear_solve=None):
    """Newton iteration on callables; returns (x, iterations).

    Stops when ||r|| <= max(atol, rtol * ||r0||).  A zero initial residual
    costs zero iterations; a linear problem costs one.  Three consecutive
    residual increases abort with :class:`NewtonDivergence`.
    """
    solve = linear_solve or lu_solve
    x = np.array(x0, dtype=float)
    r = residual(x)
    norm0 = np.linalg.norm(r)
    target = max(atol, rtol * norm0)
    norm = norm0
    growth = 0
    for it in range(maxit):
        if norm <= target:
            return x, it
        x = x + solve(jacobian(x), -r)
        r = residual(x)
        new_norm = np.linalg.norm(r)
        growth = growth + 1 if new_norm > norm else 0
        if growth >= 3:
            raise NewtonDivergence(
                "residual grew three times in a row (%.3e)" % new_norm)
        norm = new_norm
    if norm <= target:
        return x, maxit
    raise MaxIterationsExceeded(
        "Newton: residual %.3e after %d iterations" % (norm, maxit))
