"""Report figures. Every function takes data plus a path and writes a PNG;
nothing here touches an interactive backend."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_worst_case_curve(model, path, rho_lo=None, rho_hi=None, knot_lams=None):
    """Interpolated worst-case load factor over density, knots marked."""
    lam = model.components["lam_wc"]
    lo = lam.knots[0] if rho_lo is None else rho_lo
    hi = model.rho_range[1] if rho_hi is None else rho_hi
    xs = np.linspace(lo, hi, 400)
    fig, ax = plt.subplots(figsize=(5.5, 3.6), constrained_layout=True)
    ax.plot(xs, [model.lam_wc(x) for x in xs], "-", lw=1.5, label="interpolation")
    ax.plot(lam.knots, lam.values, "o", ms=4, label="homogenized data")
    if knot_lams:
        ks, vs = zip(*sorted(knot_lams.items()))
        ax.plot(ks, vs, "s", ms=3, alpha=0.6)
    ax.axvline(lam.knots[-1], color="0.6", ls=":", lw=0.8)
    ax.set_xlabel(r"relative density $\rho$")
    ax.set_ylabel("worst-case buckling load factor")
    ax.legend(loc="upper left")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_tensor_curves(model, path):
    """Independent tensor components over density."""
    lo, hi = model.rho_range
    xs = np.linspace(lo, hi, 300)
    fig, ax = plt.subplots(figsize=(5.5, 3.6), constrained_layout=True)
    for name in ("E11", "E12", "E22", "E33"):
        comp = model.components[name]
        ax.plot(xs, [comp(x) for x in xs], lw=1.2, label=name)
        ax.plot(comp.knots, comp.values, ".", ms=3, color="0.3")
    ax.set_xlabel(r"relative density $\rho$")
    ax.set_ylabel("tensor component (Pa)")
    ax.legend(loc="upper left", ncols=2, fontsize=8)
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_sweep_polar(sweep_result, path):
    """Load factor versus azimuth, one line per (inclination, repetitions).

    The azimuth axis covers the folded 0..30 degree wedge; inclination groups
    get distinct colors, repetition counts distinct line styles."""
    groups = {}
    for en in sweep_result.entries:
        groups.setdefault((en.theta_deg, en.kappa), []).append((en.phi_deg, en.lam))
    thetas = sorted({t for t, _ in groups})
    kappas = sorted({k for _, k in groups})
    cmap = plt.get_cmap("viridis")
    styles = ["-", "--", ":", "-."]
    fig, ax = plt.subplots(figsize=(5.5, 4.0), constrained_layout=True)
    for (theta, kappa), pts in sorted(groups.items()):
        pts.sort()
        phis, lams = zip(*pts)
        ci = thetas.index(theta) / max(len(thetas) - 1, 1)
        ax.plot(
            phis,
            lams,
            styles[kappas.index(kappa) % len(styles)],
            color=cmap(ci),
            lw=1.0,
            label=f"incl {theta:g}, rep {kappa}" if kappa == kappas[0] else None,
        )
    ax.set_xlabel("azimuth (deg, folded)")
    ax.set_ylabel("buckling load factor")
    ax.set_yscale("log")
    ax.set_title(f"density {sweep_result.rho:g}")
    ax.legend(loc="best", fontsize=7, ncols=2)
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_density_map(mesh, rho_elem, path, title=None, vmin=0.0, vmax=1.0):
    """Element densities on the macro grid (or any 2D mesh) as filled cells."""
    fig, ax = plt.subplots(figsize=(4.8, 4.8), constrained_layout=True)
    corners = mesh.corner_coords()
    polys = matplotlib.collections.PolyCollection(
        corners, array=np.asarray(rho_elem), cmap="gray_r", edgecolors="none"
    )
    polys.set_clim(vmin, vmax)
    ax.add_collection(polys)
    ax.autoscale()
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.colorbar(polys, ax=ax, shrink=0.8, label=r"$\rho$")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_front(points, path, label="bound variant"):
    """Pareto front: optimized worst load factor over the compliance budget."""
    ok = [p for p in points if np.isfinite(p.s)]
    fig, ax = plt.subplots(figsize=(5.0, 3.6), constrained_layout=True)
    ax.plot([p.c0 for p in ok], [p.s for p in ok], "o-", ms=3, lw=1.2, label=label)
    bad = [p for p in points if not np.isfinite(p.s)]
    if bad:
        ax.plot([p.c0 for p in bad], [0.0] * len(bad), "rx", ms=5, label="failed")
    ax.set_xlabel(r"compliance budget $c_0$")
    ax.set_ylabel(r"bound $s^*$")
    ax.legend(loc="lower right")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_history(history, path):
    """Objective and KKT residual over optimizer iterations."""
    its = [h["it"] for h in history]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.0, 4.6), sharex=True, constrained_layout=True)
    ax1.plot(its, [h["f0"] for h in history], lw=1.2)
    ax1.set_ylabel("objective")
    kkt = np.array([h["kkt"] for h in history])
    kkt[~np.isfinite(kkt)] = np.nan
    ax2.semilogy(its, kkt, lw=1.0, label="KKT residual")
    ax2.semilogy(its, [max(h["max_g"], 1e-16) for h in history], lw=1.0, label="max violation")
    ax2.set_xlabel("iteration")
    ax2.legend(fontsize=8)
    fig.savefig(path, dpi=160)
    plt.close(fig)


def save_mode(mesh, vector, path, scale=0.15, title=None):
    """Deformed outline of a buckling mode over the undeformed mesh."""
    phi = vector.reshape(-1, 2)
    peak = np.abs(phi).max()
    box = float(np.max(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
    disp = mesh.nodes + (scale * box / peak) * phi if peak > 0 else mesh.nodes
    fig, ax = plt.subplots(figsize=(4.2, 4.8), constrained_layout=True)
    if mesh.element_type in ("tri3", "tri6"):
        tris = mesh.elements[:, :3]
        ax.triplot(mesh.nodes[:, 0], mesh.nodes[:, 1], tris, lw=0.1, color="0.85")
        ax.triplot(disp[:, 0], disp[:, 1], tris, lw=0.15, color="C0")
    else:
        mag = np.hypot(phi[:, 0], phi[:, 1])
        corners = mesh.corner_coords()
        cell_vals = mag[mesh.elements[:, :4]].mean(axis=1)
        polys = matplotlib.collections.PolyCollection(corners, array=cell_vals, cmap="magma", edgecolors="none")
        ax.add_collection(polys)
    ax.autoscale()
    ax.set_aspect("equal")
    if title:
        ax.set_title(title, fontsize=9)
    fig.savefig(path, dpi=160)
    plt.close(fig)
