"""Figure rendering for the CLI report paths.

Each function takes the rows produced by the matching ``cli`` command and
saves a single PNG/PDF (matplotlib picks the format from the extension).
The module selects the Agg backend so it works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from . import tableaux  # noqa: E402


def plot_stability_region(tab, path, extent=(-8.0, 4.0, -6.0, 6.0), n=241):
    """Filled contour of |R(z)| <= 1 in the complex plane."""
    re = np.linspace(extent[0], extent[1], n)
    im = np.linspace(extent[2], extent[3], n)
    mag = np.empty((n, n))
    for i, y in enumerate(im):
        for j, xr in enumerate(re):
            try:
                mag[i, j] = abs(tableaux.stability_function(tab,
                                                            complex(xr, y)))
            except np.linalg.LinAlgError:  # grid point sits on a pole of R
                mag[i, j] = np.inf
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    ax.contourf(re, im, mag, levels=[0.0, 1.0], colors=["#9ecae1"])
    ax.contour(re, im, mag, levels=[1.0], colors="k", linewidths=1.2)
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.axvline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel(r"$\mathrm{Re}\, z$")
    ax.set_ylabel(r"$\mathrm{Im}\, z$")
    ax.set_title("%s: $|R(z)| \\leq 1$" % tab.name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_convergence(rows, path):
    """log-log relative error vs N, one curve per (cfl, norm) pair."""
    rows = sorted(rows, key=lambda r: (r[1] * r[0], r[0]))  # (cfl, N)
    by_cfl = {}
    for N, dt, l2, h1, _drift in rows:
        by_cfl.setdefault(round(dt * N, 12), []).append((N, l2, h1))
    fig, ax = plt.subplots(figsize=(5.6, 4.4))
    for cfl, data in sorted(by_cfl.items()):
        data.sort()
        Ns = np.array([d[0] for d in data], dtype=float)
        ax.loglog(Ns, [d[1] for d in data], "o-",
                  label=r"$L^2$, $\Delta t = %g/N$" % cfl)
        ax.loglog(Ns, [d[2] for d in data], "s--",
                  label=r"$H^1$, $\Delta t = %g/N$" % cfl)
    ax.set_xlabel("$N$")
    ax.set_ylabel("relative error at $t=T$")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_energy(rows, path):
    """Energy ratio E(T)/E(0) vs dt, one line per scheme."""
    by_scheme = {}
    for scheme, dt, ratio in rows:
        by_scheme.setdefault(scheme, []).append((dt, ratio))
    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    for scheme, data in sorted(by_scheme.items()):
        data.sort()
        ax.plot([d[0] for d in data], [d[1] for d in data], "o-",
                label=scheme)
    ax.axhline(1.0, color="0.5", lw=0.8, ls=":")
    ax.set_xlabel(r"$\Delta t$")
    ax.set_ylabel("$E(T)/E(0)$")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bbm(run, path):
    """Two panels: wave profiles and invariant drift over time."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    order = np.argsort(run.x)
    ax1.plot(run.x[order], run.u_initial[order], "0.6", lw=1.0,
             label="$t=0$")
    ax1.plot(run.x[order], run.u_final[order], "C0", lw=1.2,
             label="computed $t=T$")
    ax1.plot(run.x[order], run.u_exact_final[order], "k:", lw=1.2,
             label="traveling wave $t=T$")
    ax1.set_xlabel("$x$")
    ax1.set_ylabel("$u$")
    ax1.legend(fontsize=8)

    t = [r[0] for r in run.rows]
    for idx, label in ((1, "$I_1$"), (2, "$I_2$"), (3, "$I_3$")):
        drift = np.abs(np.array([r[idx] for r in run.rows]) - 1.0)
        ax2.semilogy(t, np.maximum(drift, 1e-17), label=label + " drift")
    ax2.set_xlabel("$t$")
    ax2.set_ylabel("|ratio - 1|")
    ax2.grid(True, which="both", alpha=0.3)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_iterations(rows, path):
    """Average GMRES iterations per step vs mesh size."""
    rows = sorted(rows)
    Ns = [r[0] for r in rows]
    its = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.semilogx(Ns, its, "o-", base=2)
    ax.set_xlabel("$N$")
    ax.set_ylabel("average GMRES iterations per step")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
