"""Implicit Runge-Kutta time stepping for 1D finite element problems.

The package is organised around five layers:

``tableaux``
    Butcher tableaux: collocation families (Gauss-Legendre, RadauIIA,
    LobattoIIIA, LobattoIIIC), classical named schemes, order-condition
    checks and stability functions.
``symbolic``
    A small expression language for semidiscrete variational forms with a
    time-derivative operator, plus the rewrite that turns a form and a
    tableau into the coupled stage system, Gateaux derivatives, and
    time differentiation of boundary data.
``fem``
    Uniform 1D meshes, CG/DG Lagrange spaces, quadrature-based assembly of
    sparse matrices, residuals and functionals, interpolation and error
    norms.
``linalg``
    Sparse LU, right-preconditioned GMRES, the Kronecker stage operator
    I (x) M + dt A (x) K with block-diagonal / block-lower-triangular
    preconditioners, and a Newton driver.
``stepper``
    ``TimeStepper`` ties the layers together and advances fields in time;
    ``cli`` exposes the experiment suite (``rkfem --help``).
"""

from . import symbolic
from .fem import (
    BlockLayout,
    FieldFunction,
    FunctionSpace,
    Mesh1D,
    QuadratureRule,
    apply_dirichlet,
    assemble_functional,
    assemble_matrix,
    assemble_residual,
    boundary_dof,
    errornorm,
    interpolate,
    layout_for_fields,
    layout_for_stages,
)
from .linalg import (
    KronOperator,
    MaxIterationsExceeded,
    NewtonDivergence,
    SingularMatrixError,
    SolveStats,
    build_stage_operator,
    detect_kron_structure,
    gmres,
    lu_factor,
    lu_solve,
    make_block_diag_pc,
    make_block_lower_triangular_pc,
    newton_solve,
)
from .stepper import NonIntegerStepCount, SolverConfig, TelemetryWriter, TimeStepper
from .symbolic import (
    BoundaryCondition,
    Coefficient,
    Dt,
    FieldRef,
    Form,
    TestRef,
    diff_time,
    dx_measure,
    gateaux,
    get_stage_form,
)
from .tableaux import (
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

__version__ = "0.1.0"

__all__ = [
    "BlockLayout",
    "BoundaryCondition",
    "ButcherTableau",
    "Coefficient",
    "Dt",
    "FieldFunction",
    "FieldRef",
    "Form",
    "FunctionSpace",
    "GAUSS_LEGENDRE",
    "KronOperator",
    "LOBATTO_IIIA",
    "LOBATTO_IIIC",
    "MAX_STAGES",
    "MaxIterationsExceeded",
    "Mesh1D",
    "NewtonDivergence",
    "NonIntegerStepCount",
    "QuadratureRule",
    "RADAU_IIA",
    "SchemeClass",
    "SingularMatrixError",
    "SolveStats",
    "SolverConfig",
    "TelemetryWriter",
    "TestRef",
    "TimeStepper",
    "apply_dirichlet",
    "assemble_functional",
    "assemble_matrix",
    "assemble_residual",
    "boundary_dof",
    "build_stage_operator",
    "check_order_conditions",
    "classify",
    "detect_kron_structure",
    "diff_time",
    "dx_measure",
    "errornorm",
    "gateaux",
    "get_stage_form",
    "gmres",
    "interpolate",
    "layout_for_fields",
    "layout_for_stages",
    "lu_factor",
    "lu_solve",
    "make_block_diag_pc",
    "make_block_lower_triangular_pc",
    "make_collocation",
    "make_lobatto_iiic",
    "make_named",
    "named_tableaux",
    "newton_solve",
    "order_conditions_ok",
    "stability_at_infinity",
    "stability_function",
    "symbolic",
    "__version__",
]
