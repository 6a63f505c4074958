"""Uniform 1D meshes, nodal Lagrange spaces, and vectorized assembly.

Assembly expands each integrand into monomials, isolates the single test
factor (and, for matrices, the single trial factor), evaluates everything
else pointwise on the cells-by-quadrature grid, and scatters dense element
blocks into CSR.  Cell integrals use a Gauss rule with degree + 3 points,
exact well beyond any product of basis functions that appears here.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quadrature, symbolic as sym
from .symbolic import (Coefficient, Const, ExternalFn, FieldRef, Negate, Power,
                       Product, SpatialCoord, SpatialDeriv, StageRef,
                       StageTestRef, Sum, TestRef, TimeSymbol, TrialRef,
                       UnboundSymbolError, differentiate, evaluate)


class PeriodicBCError(ValueError):
    """Strong boundary data requested on a periodic space."""


class MissingTestFunction(ValueError):
    """A term to be assembled carries no test reference."""


class NonlinearTrialTerm(ValueError):
    """A term is nonlinear in the trial slot and cannot be assembled."""


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    N: int
    periodic: bool = False

    def __post_init__(self):
        if self.N < 1 or not self.b > self.a:
            raise ValueError("mesh needs b > a and at least one cell")

    @property
    def h(self):
        return (self.b - self.a) / self.N

    def cell_lefts(self):
        return self.a + self.h * np.arange(self.N)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self):
        return len(self.points)

    @property
    def exactness(self):
        return 2 * self.npoints - 1


def rule_for_degree(k):
    """Assembly rule for polynomial degree k; exact to degree 2k + 5."""
    pts, wts = quadrature.gauss_rule(k + 3)
    return QuadratureRule(pts, wts)


class FunctionSpace:
    """Nodal equispaced Lagrange space, CG (degree 1..4) or DG (degree 0..4)."""

    def __init__(self, mesh, family, degree):
        family = family.upper()
        if family == "CG":
            if not 1 <= degree <= 4:
                raise ValueError("CG supports degrees 1..4")
        elif family == "DG":
            if not 0 <= degree <= 4:
                raise ValueError("DG supports degrees 0..4")
        else:
            raise ValueError("family must be CG or DG")
        self.mesh = mesh
        self.family = family
        self.degree = degree
        k, N = degree, mesh.N
        if degree == 0:
            self.ref_nodes = np.array([0.5])
        else:
            self.ref_nodes = np.linspace(0.0, 1.0, k + 1)
        self.nloc = len(self.ref_nodes)
        if family == "CG":
            ndof = N * k if mesh.periodic else N * k + 1
            cells = (k * np.arange(N)[:, None] + np.arange(k + 1)[None, :])
            if mesh.periodic:
                cells = cells % ndof
        else:
            ndof = N * self.nloc
            cells = (self.nloc * np.arange(N)[:, None]
                     + np.arange(self.nloc)[None, :])
        self.dof_count = ndof
        self.cell_dofs = cells
        if family == "CG":
            coords = mesh.a + (mesh.h / k) * np.arange(ndof)
        else:
            lefts = mesh.cell_lefts()
            coords = (lefts[:, None] + mesh.h * self.ref_nodes[None, :]).ravel()
        self.dof_coords = coords
        self._tab_cache = {}

    def tabulate(self, points):
        """(values, reference derivatives), each (npoints, nloc)."""
        key = np.asarray(points).tobytes()
        hit = self._tab_cache.get(key)
        if hit is not None:
            return hit
        z = self.ref_nodes
        V = np.vander(z, len(z), increasing=True)
        C = np.linalg.inv(V).T  # row i: power-basis coefficients of phi_i
        P = np.vander(np.asarray(points), len(z), increasing=True)
        val = P @ C.T
        dC = C[:, 1:] * np.arange(1, len(z))[None, :]
        dval = P[:, :-1] @ dC.T if len(z) > 1 else np.zeros_like(val)
        self._tab_cache[key] = (val, dval)
        return val, dval


class FieldFunction:
    """Coefficient vector over a function space (nodal values)."""

    def __init__(self, space, coefficients=None):
        self.space = space
        if coefficients is None:
            coefficients = np.zeros(space.dof_count)
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.dof_count,):
            raise ValueError("coefficient vector has the wrong length")
        self.coefficients = coefficients

    def copy(self):
        return FieldFunction(self.space, self.coefficients.copy())


def interpolate(f, space, bindings=None):
    """Nodal interpolant of an expression (in x, with t etc. bound) or callable."""
    coords = space.dof_coords
    if isinstance(f, sym.Expr):
        b = dict(bindings or {})
        b[sym.x] = coords
        vals = evaluate(f, b)
    elif callable(f):
        vals = f(coords)
    else:
        raise TypeError("interpolate wants an Expr or a callable")
    return FieldFunction(space, np.broadcast_to(np.asarray(vals, dtype=float),
                                                coords.shape).copy())


def boundary_dof(space, location):
    """Global dof sitting at one end of the mesh; only defined for CG."""
    if space.mesh.periodic:
        raise PeriodicBCError("periodic spaces have no boundary")
    if space.family != "CG":
        raise ValueError("strong boundary data needs a CG space")
    return 0 if location == sym.LEFT else space.dof_count - 1


# ---------------------------------------------------------------------------
# Block layouts

@dataclass(frozen=True)
class BlockLayout:
    """Ordered (field, stage) slots with their spaces and global offsets."""

    keys: tuple       # ((field_id, stage_or_None), ...)
    spaces: tuple
    offsets: tuple
    total_dim: int

    def slot(self, field_id, stage):
        return self.keys.index((field_id, stage))

    def offset_of(self, field_id, stage):
        return self.offsets[self.slot(field_id, stage)]

    def space_of(self, field_id, stage):
        return self.spaces[self.slot(field_id, stage)]

    def slice_of(self, field_id, stage):
        i = self.slot(field_id, stage)
        return slice(self.offsets[i], self.offsets[i] + self.spaces[i].dof_count)


def layout_for_fields(spaces):
    """One slot per field, stage index None; `spaces` maps field id -> space."""
    keys, sps, offs = [], [], []
    pos = 0
    for fid in sorted(spaces):
        keys.append((fid, None))
        sps.append(spaces[fid])
        offs.append(pos)
        pos += spaces[fid].dof_count
    return BlockLayout(tuple(keys), tuple(sps), tuple(offs), pos)


def layout_for_stages(spaces, num_stages):
    """Stage-major slots: all fields of stage 0, then stage 1, ..."""
    keys, sps, offs = [], [], []
    pos = 0
    for i in range(num_stages):
        for fid in sorted(spaces):
            keys.append((fid, i))
            sps.append(spaces[fid])
            offs.append(pos)
            pos += spaces[fid].dof_count
    return BlockLayout(tuple(keys), tuple(sps), tuple(offs), pos)


# ---------------------------------------------------------------------------
# Monomial expansion and factor classification

def _expand(e):
    """Flatten into [(coefficient, [factors])]; sums fully distributed.

    Spatial derivatives of anything but a bare reference are pushed through
    by symbolic differentiation, so the stage rewrite's substitutions inside
    d/dx terms expand the same way as undifferentiated ones.
    """
    if isinstance(e, Const):
        return [(e.value, [])]
    if isinstance(e, Negate):
        return [(-c, f) for c, f in _expand(e.child)]
    if isinstance(e, Sum):
        out = []
        for ch in e.children:
            out.extend(_expand(ch))
        return out
    if isinstance(e, Product):
        out = [(1.0, [])]
        for ch in e.children:
            parts = _expand(ch)
            out = [(c0 * c1, f0 + f1) for c0, f0 in out for c1, f1 in parts]
        return out
    if isinstance(e, SpatialDeriv) and not isinstance(
            e.child, _TEST_KINDS + _UNKNOWN_KINDS):
        return _expand(differentiate(e.child, sym.x))
    return [(1.0, [e])]


_TEST_KINDS = (TestRef, StageTestRef)
_UNKNOWN_KINDS = (FieldRef, StageRef, TrialRef)


def _ref_key(node):
    if isinstance(node, (TestRef, FieldRef)):
        return (node.field_id, None)
    return (node.field_id, node.stage)


def _match_ref(factor, kinds):
    """(key, deriv_order) when `factor` is a bare ref or its first derivative."""
    if isinstance(factor, kinds):
        return _ref_key(factor), 0
    if isinstance(factor, SpatialDeriv) and isinstance(factor.child, kinds):
        return _ref_key(factor.child), 1
    return None


class _GridCtx:
    """Evaluation context on the (cells x quadrature points) grid."""

    def __init__(self, mesh, rule, state=None, bindings=None):
        self.mesh = mesh
        self.rule = rule
        self.state = state or {}
        self.bindings = dict(bindings or {})
        self.xq = mesh.cell_lefts()[:, None] + mesh.h * rule.points[None, :]
        self._field_cache = {}

    def _vector(self, key):
        v = self.state.get(key)
        if v is None:
            raise UnboundSymbolError("no state bound for field %s stage %s" % key)
        if isinstance(v, FieldFunction):
            return v.space, v.coefficients
        space, vec = v
        return space, np.asarray(vec)

    def field_on_grid(self, key, deriv):
        hit = self._field_cache.get((key, deriv))
        if hit is not None:
            return hit
        space, vec = self._vector(key)
        val, dval = space.tabulate(self.rule.points)
        tab = val if deriv == 0 else dval / self.mesh.h
        out = np.einsum('ci,qi->cq', vec[space.cell_dofs], tab)
        self._field_cache[(key, deriv)] = out
        return out

    def eval(self, e):
        try:
            if e in self.bindings:
                return self.bindings[e]
        except TypeError:
            pass
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Coefficient):
            return e.value
        if isinstance(e, SpatialCoord):
            return self.xq
        if isinstance(e, TimeSymbol):
            raise UnboundSymbolError("time symbol is unbound; pass bindings={t: ...}")
        m = _match_ref(e, _UNKNOWN_KINDS)
        if m is not None and not isinstance(
                e.child if isinstance(e, SpatialDeriv) else e, TrialRef):
            return self.field_on_grid(*m)
        if isinstance(e, Sum):
            out = 0.0
            for c in e.children:
                out = out + self.eval(c)
            return out
        if isinstance(e, Product):
            out = 1.0
            for c in e.children:
                out = out * self.eval(c)
            return out
        if isinstance(e, Negate):
            return -self.eval(e.child)
        if isinstance(e, Power):
            return self.eval(e.child) ** e.exponent
        if isinstance(e, ExternalFn):
            return sym._EXTERNAL_FNS[e.tag][0](self.eval(e.child))
        if isinstance(e, SpatialDeriv):
            return self.eval(differentiate(e.child, sym.x))
        raise sym.UnsupportedNode("cannot evaluate %s on the grid"
                                  % type(e).__name__)

    def data_value(self, factors, coef):
        out = coef
        for f in factors:
            out = out * self.eval(f)
        return np.broadcast_to(np.asarray(out, dtype=float),
                               self.xq.shape)


def _pick_rule(spaces):
    deg = max((s.degree for s in spaces), default=1)
    return rule_for_degree(deg)


def _split_monomial(coef, factors, trial_kinds):
    """Partition factors into (test, trial, data); validates linearity."""
    test = None
    trial = None
    data = []
    for f in factors:
        m = _match_ref(f, _TEST_KINDS)
        if m is not None:
            if test is not None:
                raise sym.UnsupportedNode("two test references in one term")
            test = m
            continue
        if trial_kinds:
            m = _match_ref(f, trial_kinds)
            if m is not None:
                if trial is not None:
                    raise NonlinearTrialTerm(
                        "nonlinearity detected in the trial slot")
                trial = m
                continue
            if sym.contains(f, trial_kinds):
                raise NonlinearTrialTerm(
                    "trial reference buried inside a nonlinear factor")
        if sym.contains(f, _TEST_KINDS):
            raise sym.UnsupportedNode("test reference inside a nonlinear factor")
        data.append(f)
    return test, trial, data


def assemble_matrix(form, trial_layout, test_layout, trial_kinds=(FieldRef,),
                    state=None, bindings=None, strict=True):
    """CSR matrix of a bilinear (or linearized) form.

    `trial_kinds` names the node classes treated as trial functions; any
    other field references must be bound through `state`.  With
    ``strict=False``, purely known terms (no trial factor) are skipped,
    which is what building the operator of an affine problem needs.
    """
    mesh = trial_layout.spaces[0].mesh
    rule = _pick_rule(trial_layout.spaces + test_layout.spaces)
    ctx = _GridCtx(mesh, rule, state, bindings)
    h = mesh.h
    w = rule.weights
    rows, cols, vals = [], [], []
    for term in form.terms:
        for coef, factors in _expand(term):
            test, trial, data = _split_monomial(coef, factors, trial_kinds)
            if test is None:
                raise MissingTestFunction("term has no test reference")
            if trial is None:
                if strict:
                    raise NonlinearTrialTerm("term has no trial reference")
                continue
            (tkey, tder), (rkey, rder) = test, trial
            try:
                tspace = test_layout.space_of(*tkey)
                rspace = trial_layout.space_of(*rkey)
            except ValueError:
                raise sym.MismatchedFieldCount(
                    "reference %s/%s outside the layout" % (tkey, rkey)) from None
            value = ctx.data_value(data, coef)
            tval, tdval = tspace.tabulate(rule.points)
            rval, rdval = rspace.tabulate(rule.points)
            ttab = tval if tder == 0 else tdval / h
            rtab = rval if rder == 0 else rdval / h
            block = np.einsum('cq,qi,qj,q->cij', value, ttab, rtab, w) * h
            tdofs = test_layout.offset_of(*tkey) + tspace.cell_dofs
            rdofs = trial_layout.offset_of(*rkey) + rspace.cell_dofs
            C, nt, nr = block.shape
            rows.append(np.broadcast_to(tdofs[:, :, None], (C, nt, nr)).ravel())
            cols.append(np.broadcast_to(rdofs[:, None, :], (C, nt, nr)).ravel())
            vals.append(block.ravel())
    if rows:
        M = sp.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(test_layout.total_dim, trial_layout.total_dim))
        M = M.tocsr()
    else:
        M = sp.csr_matrix((test_layout.total_dim, trial_layout.total_dim))
    M.sum_duplicates()
    M.sort_indices()
    return M


def assemble_residual(form, test_layout, state, bindings=None):
    """Residual vector of a form with every unknown bound through `state`."""
    mesh = test_layout.spaces[0].mesh
    rule = _pick_rule(test_layout.spaces)
    ctx = _GridCtx(mesh, rule, state, bindings)
    h = mesh.h
    w = rule.weights
    out = np.zeros(test_layout.total_dim)
    for term in form.terms:
        for coef, factors in _expand(term):
            test, _, data = _split_monomial(coef, factors, ())
            if test is None:
                raise MissingTestFunction("term has no test reference")
            tkey, tder = test
            try:
                tspace = test_layout.space_of(*tkey)
            except ValueError:
                raise sym.MismatchedFieldCount(
                    "test reference %s outside the layout" % (tkey,)) from None
            value = ctx.data_value(data, coef)
            tval, tdval = tspace.tabulate(rule.points)
            ttab = tval if tder == 0 else tdval / h
            cells = np.einsum('cq,qi,q->ci', value, ttab, w) * h
            np.add.at(out, test_layout.offset_of(*tkey) + tspace.cell_dofs, cells)
    return out


def assemble_functional(integrand, fields=None, mesh=None, bindings=None,
                        rule=None):
    """Integrate a scalar expression (or a ``Form``) with bound fields."""
    if isinstance(integrand, sym.Form):
        integrand = integrand.integrand
    state = {}
    for fid, f in (fields or {}).items():
        state[(fid, None)] = f
        mesh = f.space.mesh if mesh is None else mesh
    if mesh is None:
        raise ValueError("pass a mesh or at least one field")
    if rule is None:
        rule = _pick_rule([f.space for f in (fields or {}).values()])
    ctx = _GridCtx(mesh, rule, state, bindings)
    total = 0.0
    for coef, factors in _expand(sym.as_expr(integrand)):
        if any(sym.contains(f, _TEST_KINDS + (TrialRef,)) for f in factors):
            raise sym.UnsupportedNode("functionals cannot contain test functions")
        value = ctx.data_value(factors, coef)
        total += float(np.einsum('cq,q->', value, rule.weights)) * mesh.h
    return total


def errornorm(exact, fh, norm="l2", bindings=None, exact_dx=None):
    """|| exact - fh || in L2 or H1, with quadrature refined 2x over assembly.

    `exact` is an expression in x (and symbols pinned via `bindings`) or a
    plain callable of x; for the H1 norm of a callable, pass its derivative
    as `exact_dx`.
    """
    space = fh.space
    mesh = space.mesh
    pts, wts = quadrature.gauss_rule(2 * (space.degree + 3))
    rule = QuadratureRule(pts, wts)
    ctx = _GridCtx(mesh, rule, {(0, None): fh}, bindings)
    uh = ctx.field_on_grid((0, None), 0)
    if isinstance(exact, sym.Expr):
        b = dict(bindings or {})
        b[sym.x] = ctx.xq
        ue = evaluate(exact, b)
    elif callable(exact):
        ue = exact(ctx.xq)
    else:
        raise TypeError("errornorm wants an Expr or a callable")
    diff2 = (np.asarray(ue) - uh) ** 2
    acc = np.einsum('cq,q->', diff2, wts) * mesh.h
    if norm.lower() == "h1":
        duh = ctx.field_on_grid((0, None), 1)
        if isinstance(exact, sym.Expr):
            b = dict(bindings or {})
            b[sym.x] = ctx.xq
            due = evaluate(differentiate(exact, sym.x), b)
        elif exact_dx is not None:
            due = exact_dx(ctx.xq)
        else:
            raise ValueError("H1 norm of a callable needs exact_dx")
        ddiff2 = (np.asarray(due) - duh) ** 2
        acc += np.einsum('cq,q->', ddiff2, wts) * mesh.h
    elif norm.lower() != "l2":
        raise ValueError("norm must be 'l2' or 'h1'")
    return float(np.sqrt(acc))


def apply_dirichlet(matrix, rhs, rows, values):
    """Replace each row by the identity row and pin the rhs entry.

    Columns are left untouched (no symmetric elimination); returns the
    modified (matrix, rhs) pair.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    values = np.broadcast_to(np.asarray(values, dtype=float), rows.shape)
    A = matrix.tolil(copy=True)
    for r, v in zip(rows, values):
        A.rows[r] = [int(r)]
        A.data[r] = [1.0]
        if rhs is not None:
            rhs[r] = v
    A = A.tocsr()
    A.sort_indices()
    return A, rhs


def write_profile(field, path):
    """Dump (x, value) rows at the dof coordinates as CSV."""
    from .cli import write_csv
    rows = [{"x": xx, "value": vv}
            for xx, vv in zip(field.space.dof_coords, field.coefficients)]
    write_csv(path, ["x", "value"], rows)
