"""Command-line experiment drivers.

Subcommands
-----------
tableau
    Report a Butcher tableau: coefficients, classification, order-condition
    residuals, symplecticity residual and the stability limit R(inf).
heat
    Manufactured-solution convergence study for the heat equation on [0, 1]
    (u = e^{-t} sin(pi x), Dirichlet data taken from the exact solution).
wave
    Energy conservation for the 1D mixed wave system (CG sigma x DG u).
bbm
    Solitary-wave run for the BBM equation with invariant tracking.
precond
    Average GMRES iterations per step for the stage-system preconditioners.

Every command prints CSV (UTF-8, LF, header row, 17 significant digits) to
stdout or writes it atomically to ``--out``; ``--plot PATH`` additionally
renders a matplotlib figure for the same data.  Commands exit nonzero on
solver failure and never leave a partial CSV behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import fem, linalg, tableaux
from . import symbolic as sym
from .fem import FieldFunction, FunctionSpace, Mesh1D, interpolate
from .stepper import NonIntegerStepCount, SolverConfig, TimeStepper

#: wave speed of the BBM solitary wave 3c^2/(1-c^2) sech^2((c x + delta)/2)
BBM_C = 0.5
BBM_DELTA = -20.0          # peak at x = -delta/c = 40
BBM_SPEED = 1.0 / (1.0 - BBM_C**2)
BBM_LENGTH = 100.0

_SOLVER_ERRORS = (
    linalg.SingularMatrixError,
    linalg.MaxIterationsExceeded,
    linalg.NewtonDivergence,
    NonIntegerStepCount,
)


# ---------------------------------------------------------------------------
# CSV plumbing


def format_value(value):
    """One CSV cell: floats at 17 significant digits, everything else str()."""
    if isinstance(value, (bool, np.bool_)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def render_csv(header, rows):
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        if isinstance(row, dict):
            row = [row[h] for h in header]
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    """Write a CSV atomically (all rows must already be computed)."""
    text = render_csv(header, rows)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".csv-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Scheme resolution

_FAMILIES = {
    "gauss": tableaux.GAUSS_LEGENDRE,
    "gauss-legendre": tableaux.GAUSS_LEGENDRE,
    "gausslegendre": tableaux.GAUSS_LEGENDRE,
    "radau": tableaux.RADAU_IIA,
    "radau-iia": tableaux.RADAU_IIA,
    "radauiia": tableaux.RADAU_IIA,
    "lobatto-iiia": tableaux.LOBATTO_IIIA,
    "lobattoiiia": tableaux.LOBATTO_IIIA,
    "lobatto-iiic": tableaux.LOBATTO_IIIC,
    "lobattoiiic": tableaux.LOBATTO_IIIC,
}


def make_scheme(family, stages):
    """Build one collocation-family tableau from CLI-style tokens."""
    key = family.strip().lower()
    if key not in _FAMILIES:
        raise ValueError(
            "unknown family %r (try gauss, radau, lobatto-iiia, lobatto-iiic)"
            % family)
    canonical = _FAMILIES[key]
    if canonical == tableaux.LOBATTO_IIIC:
        return tableaux.make_lobatto_iiic(int(stages))
    return tableaux.make_collocation(canonical, int(stages))


def resolve_schemes(family=None, stages=None, named=None):
    """Turn --family/--stages/--named values into a list of tableaux."""
    schemes = []
    if named:
        for token in str(named).split(","):
            if token.strip():
                schemes.append(tableaux.make_named(token.strip()))
    if family is not None:
        if not stages:
            raise ValueError("--family needs --stages")
        for s in _int_list(stages):
            schemes.append(make_scheme(family, s))
    if not schemes:
        raise ValueError("select a scheme with --named or --family/--stages")
    return schemes


def _int_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(tok) for tok in str(value).split(",") if tok.strip()]


def _float_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(tok) for tok in str(value).split(",") if tok.strip()]


def _steps(T, dt):
    n = round(T / dt)
    if n <= 0 or abs(T / dt - n) > 1e-9 * max(1.0, T / dt):
        raise NonIntegerStepCount(
            "T=%g is not a whole number of dt=%g steps" % (T, dt))
    return int(n)


# ---------------------------------------------------------------------------
# tableau command


def symplecticity_residual(tab):
    """max_ij |b_i A_ij + b_j A_ji - b_i b_j|; zero for symplectic schemes."""
    b, A = tab.b, tab.A
    M = b[:, None] * A + (b[:, None] * A).T - np.outer(b, b)
    return float(np.abs(M).max())


def cmd_tableau(tab):
    """Rows of (kind, i, j, value) describing one Butcher tableau."""
    header = ("kind", "i", "j", "value")
    s = tab.num_stages
    rows = [
        ("name", "", "", tab.name),
        ("stages", "", "", s),
        ("order", "", "", tab.order),
        ("stage_order", "", "", tab.stage_order),
        ("classification", "", "", tableaux.classify(tab).value),
    ]
    rows.extend(("A", i, j, tab.A[i, j]) for i in range(s) for j in range(s))
    rows.extend(("b", "", j, tab.b[j]) for j in range(s))
    rows.extend(("c", i, "", tab.c[i]) for i in range(s))
    rows.extend(("order_condition", label, "", residual)
                for label, residual in tableaux.check_order_conditions(tab))
    rows.append(("symplecticity", "", "", symplecticity_residual(tab)))
    try:
        rinf = "%.17g" % tableaux.stability_at_infinity(tab)
    except ValueError:
        rinf = "undefined"
    rows.append(("R_infinity", "", "", rinf))
    return header, rows


# ---------------------------------------------------------------------------
# heat command


def heat_problem(exact=None):
    """Heat form and Dirichlet conditions for a manufactured solution.

    The forcing is derived symbolically: f = u_t - u_xx of the target.
    Returns (form, bcs, exact).
    """
    if exact is None:
        exact = sym.exp(-sym.t) * sym.sin(np.pi * sym.x)
    forcing = sym.diff_time(exact) - sym.differentiate(
        sym.differentiate(exact, sym.x), sym.x)
    u, v = sym.FieldRef(0), sym.TestRef(0)
    form = (sym.Dt(u) * v + u.dx() * v.dx() - forcing * v) * sym.dx_measure
    bcs = (sym.BoundaryCondition(0, sym.LEFT, exact),
           sym.BoundaryCondition(0, sym.RIGHT, exact))
    return form, bcs, exact


def run_heat(N, degree, tab, cfl, T, config=None, exact=None):
    """One manufactured-solution run; returns (dt, rel l2, rel h1, bc drift)."""
    form, bcs, exact = heat_problem(exact)
    mesh = Mesh1D(0.0, 1.0, N)
    V = FunctionSpace(mesh, "CG", degree)
    dt = cfl / N
    _steps(T, dt)
    uh = interpolate(exact, V, bindings={sym.t: 0.0})
    stepper = TimeStepper(form, tab, {0: uh}, bcs=bcs, dt=dt, config=config)
    stepper.advance_to(T)

    at_T = {sym.t: T}
    l2 = fem.errornorm(exact, uh, norm="l2", bindings=at_T)
    h1 = fem.errornorm(exact, uh, norm="h1", bindings=at_T)
    dex = sym.differentiate(exact, sym.x)
    l2_ref = np.sqrt(fem.assemble_functional(exact * exact, mesh=mesh,
                                             bindings=at_T))
    h1_ref = np.sqrt(fem.assemble_functional(
        exact * exact + dex * dex, mesh=mesh, bindings=at_T))
    # a zero manufactured solution degrades gracefully to absolute errors
    l2_ref = l2_ref if l2_ref > 0.0 else 1.0
    h1_ref = h1_ref if h1_ref > 0.0 else 1.0
    drift = max(
        abs(uh.coefficients[fem.boundary_dof(V, loc)]
            - sym.evaluate(exact, {sym.t: T, sym.x: xb}))
        for loc, xb in ((sym.LEFT, mesh.a), (sym.RIGHT, mesh.b)))
    return dt, l2 / l2_ref, h1 / h1_ref, drift


def cmd_heat(Ns, degree, tab, cfls, T, config=None, exact=None):
    """CSV rows (N, dt, l2, h1, bc_drift), one per (cfl, N) pair."""
    header = ("N", "dt", "l2", "h1", "bc_drift")
    rows = []
    for cfl in cfls:
        for N in Ns:
            dt, l2, h1, drift = run_heat(N, degree, tab, cfl, T,
                                         config=config, exact=exact)
            rows.append((N, dt, l2, h1, drift))
    return header, rows


# ---------------------------------------------------------------------------
# wave command


def wave_problem():
    """First-order wave system: u_t + sigma_x = 0, sigma_t - u_x = 0 (weakly)."""
    u, v = sym.FieldRef(0), sym.TestRef(0)        # DG potential
    sigma, w = sym.FieldRef(1), sym.TestRef(1)    # CG flux
    form = ((sym.Dt(u) * v + sigma.dx() * v)
            + (sym.Dt(sigma) * w - u * w.dx())) * sym.dx_measure
    return form


def wave_energy(uf, sf):
    u, sigma = sym.FieldRef(0), sym.FieldRef(1)
    return 0.5 * fem.assemble_functional(u * u + sigma * sigma,
                                         fields={0: uf, 1: sf})


def run_wave(N, degree, tab, dt, T, config=None):
    """Return E(T)/E(0) for one scheme at one step size."""
    mesh = Mesh1D(0.0, 1.0, N)
    Vu = FunctionSpace(mesh, "DG", degree - 1)
    Vs = FunctionSpace(mesh, "CG", degree)
    uf = interpolate(sym.sin(2.0 * np.pi * sym.x), Vu)
    sf = FieldFunction(Vs)
    e0 = wave_energy(uf, sf)
    stepper = TimeStepper(wave_problem(), tab, {0: uf, 1: sf}, dt=dt,
                          config=config)
    stepper.advance_to(T)
    return wave_energy(uf, sf) / e0


def cmd_wave(N, degree, schemes, dts, T, config=None):
    """CSV rows (scheme, dt, energy_ratio)."""
    header = ("scheme", "dt", "energy_ratio")
    rows = []
    for tab in schemes:
        for dt in dts:
            _steps(T, dt)
            rows.append((tab.name, dt, run_wave(N, degree, tab, dt, T,
                                                config=config)))
    return header, rows


# ---------------------------------------------------------------------------
# bbm command


def bbm_initial_expr():
    c, delta = BBM_C, BBM_DELTA
    amplitude = 3.0 * c * c / (1.0 - c * c)
    return amplitude * sym.sech(0.5 * (c * sym.x + delta)) ** 2


def bbm_problem():
    """BBM equation u_t + u_x + u u_x - u_txx = 0 in weak form (periodic)."""
    u, v = sym.FieldRef(0), sym.TestRef(0)
    form = (sym.Dt(u) * v + u.dx() * v + u * u.dx() * v
            + sym.Dt(u).dx() * v.dx()) * sym.dx_measure
    return form


def bbm_invariants(uf):
    """(I1, I2, I3) = (int u, int u^2 + u_x^2, int u_x^2 + u^3/3)."""
    u = sym.FieldRef(0)
    du = u.dx()
    fields = {0: uf}
    i1 = fem.assemble_functional(u, fields=fields)
    i2 = fem.assemble_functional(u * u + du * du, fields=fields)
    i3 = fem.assemble_functional(du * du + sym.Const(1.0 / 3.0) * u ** 3,
                                 fields=fields)
    return i1, i2, i3


def bbm_exact_profile(t):
    """Callable u(x, t): the initial profile advected by 4/3 t, wrapped."""
    c = BBM_C
    amplitude = 3.0 * c * c / (1.0 - c * c)
    peak = -BBM_DELTA / c + BBM_SPEED * t
    half = 0.5 * BBM_LENGTH

    def profile(x):
        xs = np.mod(x - peak + half, BBM_LENGTH) - half
        return amplitude / np.cosh(0.5 * c * xs) ** 2

    return profile


@dataclass
class BbmRun:
    """Per-step telemetry plus the profiles needed for a figure."""
    header: tuple
    rows: list
    dt: float
    x: np.ndarray
    u_initial: np.ndarray
    u_final: np.ndarray
    u_exact_final: np.ndarray


def run_bbm(N, dt_factor, tab, T, config=None):
    mesh = Mesh1D(0.0, BBM_LENGTH, N, periodic=True)
    V = FunctionSpace(mesh, "CG", 1)
    u0_expr = bbm_initial_expr()
    uf = interpolate(u0_expr, V)
    u_initial = uf.coefficients.copy()
    i10, i20, i30 = bbm_invariants(uf)
    ref_norm = np.sqrt(fem.assemble_functional(u0_expr * u0_expr, mesh=mesh))

    dt = dt_factor * mesh.h
    nsteps = _steps(T, dt)
    if config is None:
        config = SolverConfig(newton_atol=1e-12, newton_rtol=1e-12)
    stepper = TimeStepper(bbm_problem(), tab, {0: uf}, dt=dt, config=config)

    header = ("t", "i1_ratio", "i2_ratio", "i3_ratio", "l2_rel_error")
    rows = []
    for k in range(nsteps):
        stepper.step()
        t_now = (k + 1) * dt
        i1, i2, i3 = bbm_invariants(uf)
        err = fem.errornorm(bbm_exact_profile(t_now), uf) / ref_norm
        rows.append((t_now, i1 / i10, i2 / i20, i3 / i30, err))
    return BbmRun(header, rows, dt, V.dof_coords.copy(), u_initial,
                  uf.coefficients.copy(),
                  bbm_exact_profile(T)(V.dof_coords))


def cmd_bbm(N, dt_factor, tab, T, config=None):
    run = run_bbm(N, dt_factor, tab, T, config=config)
    return run.header, run.rows, run


# ---------------------------------------------------------------------------
# precond command


def run_precond(N, degree, tab, pc, cfl, nsteps, rtol=1e-8):
    """Average GMRES iterations and wall time over nsteps heat steps."""
    form, bcs, exact = heat_problem()
    mesh = Mesh1D(0.0, 1.0, N)
    V = FunctionSpace(mesh, "CG", degree)
    uh = interpolate(exact, V, bindings={sym.t: 0.0})
    config = SolverConfig(pc=pc, rtol=rtol)
    stepper = TimeStepper(form, tab, {0: uh}, bcs=bcs, dt=cfl / N,
                          config=config)
    start = time.perf_counter()
    iters = [stepper.step().iterations for _ in range(nsteps)]
    wall = time.perf_counter() - start
    return float(np.mean(iters)), wall


def cmd_precond(Ns, degree, tab, pc, cfl, nsteps, rtol=1e-8):
    """CSV rows (N, stages, avg_gmres_iterations, wall_time)."""
    header = ("N", "stages", "avg_gmres_iterations", "wall_time")
    rows = []
    for N in Ns:
        avg, wall = run_precond(N, degree, tab, pc, cfl, nsteps, rtol=rtol)
        rows.append((N, tab.num_stages, avg, wall))
    return header, rows


# ---------------------------------------------------------------------------
# argument parsing


def _scheme_args(parser, family=None, stages=None, named=None):
    parser.add_argument("--family", default=None,
                        help="collocation family: gauss, radau, "
                             "lobatto-iiia, lobatto-iiic")
    parser.add_argument("--stages", default=stages,
                        help="stage count(s), comma separated")
    parser.add_argument("--named", default=named,
                        help="named tableau(x), e.g. qin-zhang or rk4")
    # the command's fallback family applies only when no scheme was selected
    # on the command line, so an explicit --named does not collide with it
    parser.set_defaults(fallback_family=family)


def _io_args(parser):
    parser.add_argument("--out", default=None,
                        help="CSV destination (default: stdout)")
    parser.add_argument("--plot", default=None, metavar="PATH",
                        help="also render a figure to PATH")


def _solver_args(parser):
    parser.add_argument("--pc", default="direct",
                        choices=("direct", "blockdiag", "blocktri", "none"),
                        help="stage-system solver/preconditioner")
    parser.add_argument("--rtol", type=float, default=None,
                        help="relative tolerance (GMRES and Newton)")
    parser.add_argument("--atol", type=float, default=None,
                        help="absolute tolerance (GMRES and Newton)")


def _schemes_from(args):
    family = args.family
    if family is None and not args.named:
        family = args.fallback_family
    return resolve_schemes(family, args.stages, args.named)


def _single_scheme(args):
    schemes = _schemes_from(args)
    if len(schemes) != 1:
        raise ValueError("this command wants exactly one scheme")
    return schemes[0]


def _config_from(args, **defaults):
    kwargs = dict(defaults)
    kwargs["pc"] = args.pc
    if args.rtol is not None:
        kwargs["rtol"] = args.rtol
        kwargs["newton_rtol"] = args.rtol
    if args.atol is not None:
        kwargs["atol"] = args.atol
        kwargs["newton_atol"] = args.atol
    return SolverConfig(**kwargs)


def _handle_tableau(args):
    header, rows = cmd_tableau(_single_scheme(args))
    write_csv(args.out, header, rows)
    if args.plot:
        from . import plots
        plots.plot_stability_region(_single_scheme(args), args.plot)
    return 0


def _handle_heat(args):
    tab = _single_scheme(args)
    config = _config_from(args)
    header, rows = cmd_heat(_int_list(args.N), args.degree, tab,
                            _float_list(args.cfl), args.T, config=config)
    write_csv(args.out, header, rows)
    if args.plot:
        from . import plots
        plots.plot_convergence(rows, args.plot)
    return 0


def _handle_wave(args):
    schemes = _schemes_from(args)
    config = _config_from(args)
    header, rows = cmd_wave(args.N, args.degree, schemes,
                            _float_list(args.dt), args.T, config=config)
    write_csv(args.out, header, rows)
    if args.plot:
        from . import plots
        plots.plot_energy(rows, args.plot)
    return 0


def _handle_bbm(args):
    tab = _single_scheme(args)
    config = None
    if args.rtol is not None or args.atol is not None or args.pc != "direct":
        config = _config_from(args, newton_atol=1e-12, newton_rtol=1e-12)
    header, rows, run = cmd_bbm(args.N, args.cfl, tab, args.T, config=config)
    write_csv(args.out, header, rows)
    if args.plot:
        from . import plots
        plots.plot_bbm(run, args.plot)
    return 0


def _handle_precond(args):
    tab = _single_scheme(args)
    rtol = args.rtol if args.rtol is not None else 1e-8
    nsteps = args.steps
    header, rows = cmd_precond(_int_list(args.N), args.degree, tab, args.pc,
                               args.cfl, nsteps, rtol=rtol)
    write_csv(args.out, header, rows)
    if args.plot:
        from . import plots
        plots.plot_iterations(rows, args.plot)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rkfem",
        description="Runge-Kutta finite element experiment suite (1D)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tableau", help="describe a Butcher tableau")
    _scheme_args(p)
    _io_args(p)
    p.set_defaults(func=_handle_tableau)

    p = sub.add_parser("heat", help="heat equation convergence study")
    _scheme_args(p, family="radau", stages="3")
    p.add_argument("--N", default="8,16,32,64", help="mesh sizes, comma list")
    p.add_argument("--degree", type=int, default=3, help="CG degree")
    p.add_argument("--cfl", default="1,4,16",
                   help="dt = cfl/N values, comma list")
    p.add_argument("--T", type=float, default=2.0, help="final time")
    _solver_args(p)
    _io_args(p)
    p.set_defaults(func=_handle_heat)

    p = sub.add_parser("wave", help="mixed wave energy conservation")
    _scheme_args(p, family="gauss", stages="1,2")
    p.add_argument("--N", type=int, default=10, help="number of cells")
    p.add_argument("--degree", type=int, default=2,
                   help="CG degree for the flux (potential uses DG degree-1)")
    p.add_argument("--dt", default="0.1,0.5,1.0", help="time steps, comma list")
    p.add_argument("--T", type=float, default=10.0, help="final time")
    _solver_args(p)
    _io_args(p)
    p.set_defaults(func=_handle_wave)

    p = sub.add_parser("bbm", help="BBM solitary wave invariants")
    _scheme_args(p, family="gauss", stages="2")
    p.add_argument("--N", type=int, default=1000, help="number of cells")
    p.add_argument("--cfl", type=float, default=10.0,
                   help="dt as a multiple of the cell width")
    p.add_argument("--T", type=float, default=18.0, help="final time")
    _solver_args(p)
    _io_args(p)
    p.set_defaults(func=_handle_bbm)

    p = sub.add_parser("precond", help="stage-solver iteration counts")
    _scheme_args(p, family="radau", stages="2")
    p.add_argument("--N", default="64,128,256,512,1024",
                   help="mesh sizes, comma list")
    p.add_argument("--degree", type=int, default=1, help="CG degree")
    p.add_argument("--cfl", type=float, default=4.0, help="dt = cfl/N")
    p.add_argument("--steps", type=int, default=8,
                   help="number of steps to average over")
    _solver_args(p)
    _io_args(p)
    p.set_defaults(func=_handle_precond)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _SOLVER_ERRORS as exc:
        print("rkfem: solver failure: %s" % exc, file=sys.stderr)
        return 1
    except ValueError as exc:
        print("rkfem: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
