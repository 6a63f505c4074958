"""Symbolic language for time-dependent variational forms and the stage rewrite.

Expressions are immutable trees built with ordinary Python operators; `dx` is
the cell measure (``expr * dx`` makes a one-term :class:`Form`).  The central
operation is :func:`get_stage_form`, which turns a semidiscrete form
containing ``Dt`` terms into one coupled variational problem for the s stage
derivatives of a Runge-Kutta tableau:

* ``Dt(u_f)``            -> stage unknown ``StageRef(f, i)``
* ``FieldRef(f)``        -> ``u_f + dt * sum_j A[i, j] * StageRef(f, j)``
* ``TestRef(f)``         -> ``StageTestRef(f, i)``
* the time symbol        -> ``t + c_i * dt``

where t and dt are mutable named constants owned by the returned
:class:`StageProblem`, so a time stepper can advance them without
re-running the rewrite.  Dirichlet data g becomes s stage conditions with
value ``diff_time(g)`` shifted to the stage time.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class NonFieldTimeDerivative(ValueError):
    """Dt applied to anything but a plain field reference."""


class UnboundSymbolError(KeyError):
    """Evaluation hit a symbol with no binding."""


class MismatchedFieldCount(ValueError):
    """Boundary conditions or state refer to fields absent from the form."""


class UnsupportedNode(ValueError):
    """An operation met a node kind it cannot process."""


def as_expr(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError("cannot interpret %r as an expression" % (v,))


class Expr:
    """Base class; nodes are frozen dataclasses with value semantics."""

    def __add__(self, other):
        return Sum.of(self, as_expr(other))

    def __radd__(self, other):
        return Sum.of(as_expr(other), self)

    def __sub__(self, other):
        return Sum.of(self, Negate(as_expr(other)))

    def __rsub__(self, other):
        return Sum.of(as_expr(other), Negate(self))

    def __mul__(self, other):
        if isinstance(other, _CellMeasure):
            return NotImplemented
        return Product.of(self, as_expr(other))

    def __rmul__(self, other):
        return Product.of(as_expr(other), self)

    def __neg__(self):
        return Negate(self)

    def __pow__(self, n):
        import operator
        return Power(self, operator.index(n))

    def dx(self):
        """First spatial derivative of this expression."""
        return SpatialDeriv(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class TimeSymbol(Expr):
    pass


@dataclass(frozen=True)
class SpatialCoord(Expr):
    pass


t = TimeSymbol()
x = SpatialCoord()


class Coefficient(Expr):
    """A named scalar with mutable value; identity-compared and hashable."""

    def __init__(self, name, value=0.0):
        self.name = name
        self.value = float(value)

    def __repr__(self):
        return "Coefficient(%r, %g)" % (self.name, self.value)


@dataclass(frozen=True)
class FieldRef(Expr):
    field_id: int


@dataclass(frozen=True)
class TestRef(Expr):
    field_id: int


@dataclass(frozen=True)
class StageRef(Expr):
    field_id: int
    stage: int


@dataclass(frozen=True)
class StageTestRef(Expr):
    field_id: int
    stage: int


@dataclass(frozen=True)
class TrialRef(Expr):
    """Direction symbol introduced by :func:`gateaux`; assembled as trial."""

    field_id: int
    stage: int | None = None


@dataclass(frozen=True)
class TimeDeriv(Expr):
    child: Expr

    def __post_init__(self):
        if not isinstance(self.child, FieldRef):
            raise NonFieldTimeDerivative(
                "Dt may only wrap a field reference, got %s"
                % type(self.child).__name__)


@dataclass(frozen=True)
class SpatialDeriv(Expr):
    child: Expr
    order: int = 1

    def __post_init__(self):
        if self.order != 1:
            raise UnsupportedNode("only first spatial derivatives exist")


@dataclass(frozen=True)
class Sum(Expr):
    children: tuple

    @staticmethod
    def of(*parts):
        flat = []
        for p in parts:
            if isinstance(p, Sum):
                flat.extend(p.children)
            else:
                flat.append(p)
        return Sum(tuple(flat))


@dataclass(frozen=True)
class Product(Expr):
    children: tuple

    @staticmethod
    def of(*parts):
        flat = []
        for p in parts:
            if isinstance(p, Product):
                flat.extend(p.children)
            else:
                flat.append(p)
        return Product(tuple(flat))


@dataclass(frozen=True)
class Negate(Expr):
    child: Expr


@dataclass(frozen=True)
class Power(Expr):
    child: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 1:
            raise UnsupportedNode("Power wants a positive integer exponent")


# tag -> (numpy evaluator, derivative expression builder)
_EXTERNAL_FNS = {
    "sin": (np.sin, lambda z: ExternalFn("cos", z)),
    "cos": (np.cos, lambda z: Negate(ExternalFn("sin", z))),
    "exp": (np.exp, lambda z: ExternalFn("exp", z)),
    "sech": (lambda v: 1.0 / np.cosh(v),
             lambda z: Negate(Product.of(ExternalFn("sech", z),
                                         ExternalFn("tanh", z)))),
    "tanh": (np.tanh, lambda z: Sum.of(Const(1.0),
                                       Negate(Power(ExternalFn("tanh", z), 2)))),
}


@dataclass(frozen=True)
class ExternalFn(Expr):
    tag: str
    child: Expr

    def __post_init__(self):
        if self.tag not in _EXTERNAL_FNS:
            raise UnsupportedNode("unknown function tag %r" % (self.tag,))


def sin(e):
    return ExternalFn("sin", as_expr(e))


def cos(e):
    return ExternalFn("cos", as_expr(e))


def exp(e):
    return ExternalFn("exp", as_expr(e))


def sech(e):
    return ExternalFn("sech", as_expr(e))


def tanh(e):
    return ExternalFn("tanh", as_expr(e))


def Dt(e):
    """Time derivative of a field; the rewrite replaces it by a stage unknown."""
    return TimeDeriv(as_expr(e))


dt = Dt  # lowercase alias, reads naturally in forms: dt(u)


# ---------------------------------------------------------------------------
# Forms

@dataclass(frozen=True)
class Form:
    """A sum of cell integrals, stored term by term."""

    terms: tuple

    def __add__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return Form(self.terms + other.terms)

    def __sub__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return Form(self.terms + tuple(Negate(e) for e in other.terms))

    @property
    def integrand(self):
        return Sum.of(*self.terms) if len(self.terms) != 1 else self.terms[0]

    @property
    def num_fields(self):
        return len(form_fields(self))


class _CellMeasure:
    def __rmul__(self, integrand):
        return Form((as_expr(integrand),))


dx_measure = _CellMeasure()
dx = dx_measure


def _children(e):
    if isinstance(e, (TimeDeriv, Negate, SpatialDeriv, Power, ExternalFn)):
        return (e.child,)
    if isinstance(e, (Sum, Product)):
        return e.children
    return ()


def walk(e):
    yield e
    for c in _children(e):
        yield from walk(c)


def contains(e, kinds):
    return any(isinstance(n, kinds) for n in walk(e))


def form_fields(obj):
    """Sorted ids of the unknown fields referenced by a form or expression."""
    exprs = obj.terms if isinstance(obj, Form) else (obj,)
    ids = set()
    for e in exprs:
        for n in walk(e):
            if isinstance(n, (FieldRef, TestRef, StageRef, StageTestRef)):
                ids.add(n.field_id)
    return sorted(ids)


def check_test_linearity(form):
    """Every term must be linear in test references (they never multiply)."""
    test_kinds = (TestRef, StageTestRef)

    def count(e):
        if isinstance(e, test_kinds):
            return 1
        if isinstance(e, Sum):
            c = [count(ch) for ch in e.children]
            return max(c) if c else 0
        if isinstance(e, Product):
            return sum(count(ch) for ch in e.children)
        if isinstance(e, (Negate, SpatialDeriv)):
            return count(e.child)
        if isinstance(e, Power):
            return count(e.child) * e.exponent
        if isinstance(e, ExternalFn):
            if count(e.child) > 0:
                return 2  # nonlinear in the test slot
            return 0
        return 0

    for term in form.terms:
        if count(term) > 1:
            raise UnsupportedNode("form is nonlinear in a test reference")


# ---------------------------------------------------------------------------
# Differentiation

def _simp_sum(parts):
    kept = [p for p in parts if not (isinstance(p, Const) and p.value == 0.0)]
    if not kept:
        return Const(0.0)
    if len(kept) == 1:
        return kept[0]
    return Sum.of(*kept)


def _simp_prod(parts):
    kept = []
    for p in parts:
        if isinstance(p, Const) and p.value == 0.0:
            return Const(0.0)
        if isinstance(p, Const) and p.value == 1.0:
            continue
        kept.append(p)
    if not kept:
        return Const(1.0)
    if len(kept) == 1:
        return kept[0]
    return Product.of(*kept)


def differentiate(e, wrt):
    """d(e)/d(wrt) for wrt in {t, x}, with field refs allowed only for x."""
    if e == wrt:
        return Const(1.0)
    if isinstance(e, (Const, TimeSymbol, SpatialCoord)) or isinstance(e, Coefficient):
        return Const(0.0)
    if isinstance(e, (FieldRef, TestRef, StageRef, StageTestRef, TrialRef,
                      TimeDeriv)):
        if isinstance(wrt, SpatialCoord):
            return SpatialDeriv(e)
        raise UnsupportedNode("cannot time-differentiate %s" % type(e).__name__)
    if isinstance(e, SpatialDeriv):
        if isinstance(wrt, SpatialCoord):
            raise UnsupportedNode("second spatial derivatives are not in the language")
        return _simp_to_spatial(differentiate(e.child, wrt))
    if isinstance(e, Sum):
        return _simp_sum([differentiate(c, wrt) for c in e.children])
    if isinstance(e, Negate):
        return Negate(differentiate(e.child, wrt))
    if isinstance(e, Product):
        parts = []
        for i, c in enumerate(e.children):
            dc = differentiate(c, wrt)
            if isinstance(dc, Const) and dc.value == 0.0:
                continue
            rest = list(e.children)
            rest[i] = dc
            parts.append(_simp_prod(rest))
        return _simp_sum(parts)
    if isinstance(e, Power):
        dc = differentiate(e.child, wrt)
        if isinstance(dc, Const) and dc.value == 0.0:
            return Const(0.0)
        inner = e.child if e.exponent == 2 else Power(e.child, e.exponent - 1)
        return _simp_prod([Const(float(e.exponent)), inner, dc])
    if isinstance(e, ExternalFn):
        dc = differentiate(e.child, wrt)
        if isinstance(dc, Const) and dc.value == 0.0:
            return Const(0.0)
        return _simp_prod([_EXTERNAL_FNS[e.tag][1](e.child), dc])
    raise UnsupportedNode("cannot differentiate %s" % type(e).__name__)


def _simp_to_spatial(de):
    if isinstance(de, Const) and de.value == 0.0:
        return Const(0.0)
    return SpatialDeriv(de)


def diff_time(e):
    """Time derivative of a data expression (no field or test references)."""
    if contains(e, (FieldRef, TestRef, StageRef, StageTestRef, TrialRef)):
        raise UnsupportedNode("diff_time expects a pure data expression")
    return differentiate(e, t)


# ---------------------------------------------------------------------------
# Evaluation

def evaluate(e, bindings=None):
    """Evaluate an expression to a number (or numpy array, by broadcasting).

    `bindings` maps symbols to values, e.g. ``{t: 0.5, x: mesh_points}``.
    Any node present as a key is looked up before structural recursion, so
    tests can pin field references directly.  Mutable coefficients fall back
    to their stored value.
    """
    b = bindings or {}
    try:
        if e in b:
            return b[e]
    except TypeError:
        pass
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Coefficient):
        return e.value
    if isinstance(e, (TimeSymbol, SpatialCoord, FieldRef, TestRef, StageRef,
                      StageTestRef, TrialRef, TimeDeriv)):
        raise UnboundSymbolError("no binding for %s" % (e,))
    if isinstance(e, Sum):
        return sum(evaluate(c, b) for c in e.children)
    if isinstance(e, Product):
        out = 1.0
        for c in e.children:
            out = out * evaluate(c, b)
        return out
    if isinstance(e, Negate):
        return -evaluate(e.child, b)
    if isinstance(e, Power):
        return evaluate(e.child, b) ** e.exponent
    if isinstance(e, ExternalFn):
        return _EXTERNAL_FNS[e.tag][0](evaluate(e.child, b))
    if isinstance(e, SpatialDeriv):
        return evaluate(differentiate(e.child, x), b)
    raise UnsupportedNode("cannot evaluate %s" % type(e).__name__)


# ---------------------------------------------------------------------------
# Boundary conditions

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class BoundaryCondition:
    """Strong Dirichlet data g(t, x) for one field at one end of the mesh."""

    field_id: int
    location: str
    value: Expr

    def __post_init__(self):
        if self.location not in (LEFT, RIGHT):
            raise ValueError("location must be 'left' or 'right'")
        if contains(self.value, (FieldRef, TestRef, StageRef, StageTestRef)):
            raise UnsupportedNode("BC data may depend on t and x only")


@dataclass(frozen=True)
class StageBC:
    field_id: int
    stage: int
    location: str
    value: Expr


# ---------------------------------------------------------------------------
# The stage rewrite

@dataclass(frozen=True)
class StageProblem:
    """Coupled variational problem for the stage derivatives of one tableau."""

    stage_form: Form
    stage_bcs: tuple
    tableau: object
    t_symbolic: Coefficient = field(compare=False)
    dt_symbolic: Coefficient = field(compare=False)
    fields: tuple


def _substitute_time(e, replacement):
    """Replace the global time symbol throughout a data expression."""
    if isinstance(e, TimeSymbol):
        return replacement
    kids = _children(e)
    if not kids:
        return e
    new = tuple(_substitute_time(k, replacement) for k in kids)
    if isinstance(e, Sum):
        return Sum(new)
    if isinstance(e, Product):
        return Product(new)
    if isinstance(e, Negate):
        return Negate(new[0])
    if isinstance(e, Power):
        return Power(new[0], e.exponent)
    if isinstance(e, ExternalFn):
        return ExternalFn(e.tag, new[0])
    if isinstance(e, SpatialDeriv):
        return SpatialDeriv(new[0])
    if isinstance(e, TimeDeriv):
        return TimeDeriv(new[0])
    raise UnsupportedNode(type(e).__name__)


def _rewrite(e, i, A, tc, dtc, stage_time):
    if isinstance(e, TimeDeriv):
        return StageRef(e.child.field_id, i)
    if isinstance(e, FieldRef):
        parts = [e]
        for j in range(A.shape[1]):
            aij = A[i, j]
            if aij != 0.0:
                parts.append(Product.of(Const(float(aij)), dtc,
                                        StageRef(e.field_id, j)))
        if len(parts) == 1:
            return e
        return Sum(tuple(parts))
    if isinstance(e, TestRef):
        return StageTestRef(e.field_id, i)
    if isinstance(e, TimeSymbol):
        return stage_time
    kids = _children(e)
    if not kids:
        return e
    new = tuple(_rewrite(k, i, A, tc, dtc, stage_time) for k in kids)
    if isinstance(e, Sum):
        return Sum(new)
    if isinstance(e, Product):
        return Product(new)
    if isinstance(e, Negate):
        return Negate(new[0])
    if isinstance(e, Power):
        return Power(new[0], e.exponent)
    if isinstance(e, ExternalFn):
        return ExternalFn(e.tag, new[0])
    if isinstance(e, SpatialDeriv):
        return SpatialDeriv(new[0])
    raise UnsupportedNode(type(e).__name__)


def get_stage_form(form, tableau, bcs=()):
    """Expand a semidiscrete form into the coupled problem for all stages.

    Terms are emitted stage-major (all of stage 0's copies first), which is
    also the block ordering the assembler uses.
    """
    check_test_linearity(form)
    fields = form_fields(form)
    for bc in bcs:
        if bc.field_id not in fields:
            raise MismatchedFieldCount(
                "BC on field %d absent from the form" % bc.field_id)
    s = tableau.num_stages
    tc = Coefficient("t", 0.0)
    dtc = Coefficient("dt", 0.0)
    terms = []
    for i in range(s):
        ci = float(tableau.c[i])
        stage_time = Sum.of(tc, Product.of(Const(ci), dtc))
        for term in form.terms:
            terms.append(_rewrite(term, i, tableau.A, tc, dtc, stage_time))
    stage_form = Form(tuple(terms))
    for term in stage_form.terms:
        assert not contains(term, TimeDeriv)
    pairs = {(n.field_id, n.stage) for e in stage_form.terms for n in walk(e)
             if isinstance(n, StageTestRef)}
    if len(pairs) != s * len(fields):
        raise MismatchedFieldCount(
            "every field needs a test function in every stage")
    stage_bcs = []
    for bc in bcs:
        dg = diff_time(bc.value)
        for i in range(s):
            ci = float(tableau.c[i])
            stage_time = Sum.of(tc, Product.of(Const(ci), dtc))
            stage_bcs.append(StageBC(bc.field_id, i, bc.location,
                                     _substitute_time(dg, stage_time)))
    return StageProblem(stage_form, tuple(stage_bcs), tableau, tc, dtc,
                        tuple(fields))


# ---------------------------------------------------------------------------
# Gateaux derivative

def gateaux(form, wrt=None):
    """Directional derivative of a form along fresh trial directions.

    `wrt` lists the unknown references (FieldRef or StageRef instances) to
    differentiate against; each gets the direction ``TrialRef(field, stage)``.
    By default every field/stage reference appearing in the form is taken.
    """
    if wrt is None:
        seen = {}
        for e in form.terms:
            for n in walk(e):
                if isinstance(n, StageRef):
                    seen[(n.field_id, n.stage)] = n
                elif isinstance(n, FieldRef):
                    seen[(n.field_id, None)] = n
        wrt = [seen[k] for k in sorted(seen, key=lambda p: (p[1] is not None, p[1], p[0]))]
    table = {}
    for ref in wrt:
        if isinstance(ref, StageRef):
            table[ref] = TrialRef(ref.field_id, ref.stage)
        elif isinstance(ref, FieldRef):
            table[ref] = TrialRef(ref.field_id, None)
        else:
            raise UnsupportedNode("can only differentiate against field/stage refs")

    def d(e):
        if e in table:
            return table[e]
        if isinstance(e, (Const, TimeSymbol, SpatialCoord, Coefficient,
                          FieldRef, StageRef, TestRef, StageTestRef, TrialRef)):
            return Const(0.0)
        if isinstance(e, TimeDeriv):
            raise UnsupportedNode("gateaux expects a form with Dt already rewritten")
        if isinstance(e, Sum):
            return _simp_sum([d(c) for c in e.children])
        if isinstance(e, Negate):
            return Negate(d(e.child))
        if isinstance(e, SpatialDeriv):
            dc = d(e.child)
            return _simp_to_spatial(dc)
        if isinstance(e, Product):
            parts = []
            for i, c in enumerate(e.children):
                dc = d(c)
                if isinstance(dc, Const) and dc.value == 0.0:
                    continue
                rest = list(e.children)
                rest[i] = dc
                parts.append(_simp_prod(rest))
            return _simp_sum(parts)
        if isinstance(e, Power):
            dc = d(e.child)
            if isinstance(dc, Const) and dc.value == 0.0:
                return Const(0.0)
            inner = e.child if e.exponent == 2 else Power(e.child, e.exponent - 1)
            return _simp_prod([Const(float(e.exponent)), inner, dc])
        if isinstance(e, ExternalFn):
            dc = d(e.child)
            if isinstance(dc, Const) and dc.value == 0.0:
                return Const(0.0)
            return _simp_prod([_EXTERNAL_FNS[e.tag][1](e.child), dc])
        raise UnsupportedNode("cannot differentiate %s" % type(e).__name__)

    return Form(tuple(d(term) for term in form.terms))


def is_state_independent(form):
    """True when no unknown reference survives (a linear form's derivative)."""
    return not any(contains(e, (FieldRef, StageRef)) for e in form.terms)


# ---------------------------------------------------------------------------
# s-expression dump

def to_sexpr(e):
    """Plain-text s-expression of an expression tree, for golden-file tests."""
    if isinstance(e, Const):
        return "(const %s)" % repr(e.value)
    if isinstance(e, TimeSymbol):
        return "t"
    if isinstance(e, SpatialCoord):
        return "x"
    if isinstance(e, Coefficient):
        return "(coeff %s)" % e.name
    if isinstance(e, FieldRef):
        return "(field %d)" % e.field_id
    if isinstance(e, TestRef):
        return "(test %d)" % e.field_id
    if isinstance(e, StageRef):
        return "(stage %d %d)" % (e.field_id, e.stage)
    if isinstance(e, StageTestRef):
        return "(stagetest %d %d)" % (e.field_id, e.stage)
    if isinstance(e, TrialRef):
        st = "-" if e.stage is None else str(e.stage)
        return "(trial %d %s)" % (e.field_id, st)
    if isinstance(e, TimeDeriv):
        return "(dt %s)" % to_sexpr(e.child)
    if isinstance(e, SpatialDeriv):
        return "(ddx %s)" % to_sexpr(e.child)
    if isinstance(e, Negate):
        return "(neg %s)" % to_sexpr(e.child)
    if isinstance(e, Power):
        return "(pow %s %d)" % (to_sexpr(e.child), e.exponent)
    if isinstance(e, ExternalFn):
        return "(%s %s)" % (e.tag, to_sexpr(e.child))
    if isinstance(e, Sum):
        return "(+ %s)" % " ".join(to_sexpr(c) for c in e.children)
    if isinstance(e, Product):
        return "(* %s)" % " ".join(to_sexpr(c) for c in e.children)
    raise UnsupportedNode(type(e).__name__)


def form_sexpr(form):
    return "\n".join("(cell %s)" % to_sexpr(e) for e in form.terms)
