"""Time integration driver built on the stage rewrite.

A :class:`TimeStepper` owns the mutable time and step-size constants of its
rewritten stage problem.  Each step solves for all stage derivatives at once
(direct LU, or GMRES with a block preconditioner when the Kronecker structure
is available; Newton with the symbolic Gateaux Jacobian for nonlinear forms)
and then applies the b-weighted update.  Solves happen before any state is
touched, so a failed step leaves fields and time unchanged.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem, linalg
from . import symbolic as sym
from .symbolic import StageRef, TrialRef, evaluate, gateaux, get_stage_form


class NonIntegerStepCount(ValueError):
    """advance_to got a horizon that is not a whole number of steps away."""


PC_CHOICES = ("direct", "blockdiag", "blocktri", "none")


@dataclass
class SolverConfig:
    pc: str = "direct"
    rtol: float = 1e-8
    atol: float = 0.0
    maxit: int = 200
    newton_atol: float = 1e-10
    newton_rtol: float = 1e-8
    newton_maxit: int = 30

    def __post_init__(self):
        if self.pc not in PC_CHOICES:
            raise ValueError("pc must be one of %s" % (PC_CHOICES,))


class _BlockMatrixPC:
    """Block-diagonal / lower-triangular preconditioner cut from a matrix."""

    def __init__(self, S, s, lower=False):
        S = sp.csr_matrix(S)
        self.s = s
        self.n = S.shape[0] // s
        self.lower = lower
        n = self.n
        self.diag = [linalg.lu_factor(S[i * n:(i + 1) * n, i * n:(i + 1) * n])
                     for i in range(s)]
        if lower:
            self.off = {(i, j): sp.csr_matrix(S[i * n:(i + 1) * n,
                                                j * n:(j + 1) * n])
                        for i in range(s) for j in range(i)}

    def solve(self, r):
        R = np.asarray(r).reshape(self.s, self.n)
        Y = np.zeros_like(R)
        for i in range(self.s):
            rhs = R[i].copy()
            if self.lower:
                for j in range(i):
                    block = self.off[(i, j)]
                    if block.nnz:
                        rhs -= block @ Y[j]
            Y[i] = self.diag[i].solve(rhs)
        return Y.ravel()


class TimeStepper:
    """Integrate a semidiscrete form with one Runge-Kutta tableau.

    Parameters
    ----------
    form : the semidiscrete variational form, containing Dt terms
    tableau : ButcherTableau
    fields : dict mapping field id -> FieldFunction (initial state, mutated)
    bcs : strong Dirichlet conditions (symbolic.BoundaryCondition)
    t0, dt : initial time and fixed step size
    config : SolverConfig
    """

    def __init__(self, form, tableau, fields, bcs=(), t0=0.0, dt=None,
                 config=None):
        if dt is None or dt <= 0:
            raise ValueError("a positive dt is required")
        self.config = config or SolverConfig()
        self.tableau = tableau
        self.fields = dict(fields)
        self.spaces = {fid: f.space for fid, f in self.fields.items()}
        self.problem = get_stage_form(form, tableau, bcs)
        if set(self.problem.fields) - set(self.fields):
            raise sym.MismatchedFieldCount(
                "form references fields with no FieldFunction attached")
        self.problem.t_symbolic.value = float(t0)
        self.problem.dt_symbolic.value = float(dt)
        self.dt = float(dt)
        s = tableau.num_stages
        self.layout = fem.layout_for_stages(self.spaces, s)
        self.stage_dim = self.layout.total_dim
        self.block_dim = self.stage_dim // s
        # resolve stage boundary conditions to rows once
        self._bc_rows_local = []
        self._bc = []  # (global_row, value_expr, boundary_x)
        for sbc in self.problem.stage_bcs:
            space = self.spaces[sbc.field_id]
            local = (self.layout.offset_of(sbc.field_id, 0)
                     + fem.boundary_dof(space, sbc.location))
            row = sbc.stage * self.block_dim + local
            bx = space.mesh.a if sbc.location == sym.LEFT else space.mesh.b
            self._bc.append((row, sbc.value, bx))
            if sbc.stage == 0:
                self._bc_rows_local.append(local)
        self._bc_rows_local = np.array(sorted(set(self._bc_rows_local)), int)
        # Newton linearizes against the stage unknowns only; the start-of-step
        # fields inside u + dt sum(A k) are frozen data during the stage solve.
        stage_refs = [sym.StageRef(fid, i)
                      for i in range(self.tableau.num_stages)
                      for fid in self.problem.fields]
        self._jac_form = gateaux(self.problem.stage_form, wrt=stage_refs)
        self._jac_form = sym.Form(tuple(
            term for term in self._jac_form.terms
            if not (isinstance(term, sym.Const) and term.value == 0.0)))
        self.is_linear = sym.is_state_independent(self._jac_form)
        self._operator = None
        self._factor = None
        self._pc = None

    # -- state plumbing ------------------------------------------------------

    @property
    def t(self):
        return self.problem.t_symbolic.value

    def _state(self, k=None):
        st = {(fid, None): f for fid, f in self.fields.items()}
        for fid, stage in self.layout.keys:
            sl = self.layout.slice_of(fid, stage)
            if k is None:
                st[(fid, stage)] = (self.spaces[fid], np.zeros(sl.stop - sl.start))
            else:
                st[(fid, stage)] = (self.spaces[fid], k[sl])
        return st

    def _bc_values(self):
        return [(row, evaluate(val, {sym.x: bx})) for row, val, bx in self._bc]

    # -- linear path ---------------------------------------------------------

    def _ensure_operator(self):
        if self._operator is not None:
            return
        cfg = self.config
        if cfg.pc == "direct":
            S = linalg.build_stage_operator(self.problem, self.spaces,
                                            bc_rows=self._bc_rows_local,
                                            want_kron=False)
            self._operator = S
            self._factor = linalg.lu_factor(S)
            return
        op = linalg.build_stage_operator(self.problem, self.spaces,
                                         bc_rows=self._bc_rows_local)
        self._operator = op
        if cfg.pc == "none":
            self._pc = linalg.IdentityPC()
        elif isinstance(op, linalg.KronOperator):
            maker = (linalg.make_block_diag_pc if cfg.pc == "blockdiag"
                     else linalg.make_block_lower_triangular_pc)
            self._pc = maker(op.M, op.K, self.tableau,
                             self.problem.dt_symbolic,
                             bc_rows=self._bc_rows_local)
        else:
            self._pc = _BlockMatrixPC(op, self.tableau.num_stages,
                                      lower=(self.config.pc == "blocktri"))

    def _solve_linear(self):
        self._ensure_operator()
        rhs = -fem.assemble_residual(self.problem.stage_form, self.layout,
                                     self._state())
        for row, val in self._bc_values():
            rhs[row] = val
        if self.config.pc == "direct":
            return self._factor.solve(rhs), 0, 0.0
        op = self._operator
        apply_op = op.apply if isinstance(op, linalg.KronOperator) \
            else (lambda v: op @ v)
        xk, its = linalg.gmres(apply_op, rhs, pc=self._pc,
                               rtol=self.config.rtol, atol=self.config.atol,
                               maxit=self.config.maxit)
        res = float(np.linalg.norm(rhs - apply_op(xk)))
        return xk, its, res

    # -- nonlinear path ------------------------------------------------------

    def _solve_newton(self):
        cfg = self.config
        bc_vals = self._bc_values()

        def residual(k):
            r = fem.assemble_residual(self.problem.stage_form, self.layout,
                                      self._state(k))
            for row, val in bc_vals:
                r[row] = k[row] - val
            return r

        rows = np.concatenate([i * self.block_dim + self._bc_rows_local
                               for i in range(self.tableau.num_stages)]) \
            if len(self._bc_rows_local) else np.array([], int)

        def jacobian(k):
            J = fem.assemble_matrix(self._jac_form, self.layout, self.layout,
                                    trial_kinds=(TrialRef,),
                                    state=self._state(k))
            if len(rows):
                J, _ = fem.apply_dirichlet(J, None, rows, np.zeros(len(rows)))
            return J

        lin_its = [0]
        if cfg.pc == "direct":
            lin = None
        else:
            def lin(J, rhs):
                pc = (linalg.IdentityPC() if cfg.pc == "none" else
                      _BlockMatrixPC(J, self.tableau.num_stages,
                                     lower=(cfg.pc == "blocktri")))
                xk, its = linalg.gmres(lambda v: J @ v, rhs, pc=pc,
                                       rtol=cfg.rtol, atol=cfg.atol,
                                       maxit=cfg.maxit)
                lin_its[0] += its
                return xk
        k, nits = linalg.newton_solve(residual, jacobian,
                                      np.zeros(self.stage_dim),
                                      atol=cfg.newton_atol,
                                      rtol=cfg.newton_rtol,
                                      maxit=cfg.newton_maxit,
                                      linear_solve=lin)
        res = float(np.linalg.norm(residual(k)))
        return k, nits, lin_its[0], res

    # -- public API ----------------------------------------------------------

    def step(self):
        """Advance by one dt; returns SolveStats.  State changes only on success."""
        start = time.perf_counter()
        if self.is_linear:
            k, its, res = self._solve_linear()
            nits = 0
        else:
            k, nits, its, res = self._solve_newton()
        bt = self.tableau
        for fid, f in self.fields.items():
            upd = np.zeros(f.space.dof_count)
            for i in range(bt.num_stages):
                bi = bt.b[i]
                if bi != 0.0:
                    upd += bi * k[self.layout.slice_of(fid, i)]
            f.coefficients += self.dt * upd
        self.problem.t_symbolic.value += self.dt
        return linalg.SolveStats(iterations=its, residual=res,
                                 wall_time=time.perf_counter() - start,
                                 newton_iterations=nits)

    def advance_to(self, T, callback=None):
        """Step repeatedly until time T (a whole number of steps away)."""
        span = T - self.t
        ratio = span / self.dt
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)) or n < 0:
            raise NonIntegerStepCount(
                "horizon %.17g is %.17g steps away" % (T, ratio))
        for _ in range(int(n)):
            stats = self.step()
            if callback is not None:
                callback(self.t, self.fields, stats)
        return self.fields


class TelemetryWriter:
    """Collects per-step rows (t, iterations, residual, invariants) as CSV."""

    def __init__(self, path, invariants=None):
        self.path = path
        self.invariants = invariants or {}
        self.rows = []

    def callback(self, t, fields, stats):
        row = {"t": t, "iterations": stats.iterations,
               "newton_iterations": stats.newton_iterations,
               "residual": stats.residual}
        for name, fn in self.invariants.items():
            row[name] = fn(fields)
        self.rows.append(row)

    def write(self):
        from .cli import write_csv
        header = ["t", "iterations", "newton_iterations", "residual"]
        header += list(self.invariants)
        write_csv(self.path, header, self.rows)
