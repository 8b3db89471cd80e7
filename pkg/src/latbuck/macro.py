"""Macroscale sizing analysis on a structured quad4 grid.

The design variable is one relative density per element. Analysis runs on
filtered densities (cone-kernel density filter); every public gradient is
chained back through the filter to the raw design variables.

Load factors live on both scales: eigenvalues Lambda of K phi = Lambda G phi
for macroscopic buckling, and the material model's worst-case prediction
lam_wc(rho) / |sigma| per element for cell-level buckling. Signs are kept:
constraints act on |Lambda|, with the sign entering the gradients.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import fem, homog

INF_LF = float("inf")


def build_density_filter(mesh, radius):
    """Row-stochastic cone-kernel filter matrix on element centers.

    radius <= 0 returns the identity.
    """
    M = mesh.n_elements
    if radius <= 0:
        return sp.identity(M, format="csr")
    centers = mesh.corner_coords().mean(axis=1)
    tree = cKDTree(centers)
    pairs = tree.query_ball_point(centers, radius)
    rows, cols, vals = [], [], []
    for i, nbrs in enumerate(pairs):
        nbrs = np.asarray(nbrs)
        w = radius - np.linalg.norm(centers[nbrs] - centers[i], axis=1)
        keep = w > 0
        nbrs, w = nbrs[keep], w[keep]
        w = w / w.sum()
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, M))


@dataclass
class MacroProblem:
    """Mesh, supports, loads and material law for one macro structure."""

    mesh: object
    qd: object
    constraints: object
    f: np.ndarray
    filter: sp.csr_matrix
    material_mode: str = "model"    # model | simp | linear | explicit
    model: object = None
    E0: float = 10.0
    nu: float = 0.3
    simp_p: float = 3.0
    simp_floor: float = 1e-3
    explicit_Emats: np.ndarray = None
    n_modes: int = 6

    @property
    def areas(self):
        return self.qd.areas

    @property
    def volume_total(self):
        return float(self.areas.sum())

    def materials(self, rho_t):
        """(Emats, dEmats) per element for filtered densities."""
        M = rho_t.shape[0]
        base = fem.plane_stress_matrix(self.E0, self.nu)
        if self.material_mode == "explicit":
            return self.explicit_Emats, np.zeros_like(self.explicit_Emats)
        if self.material_mode == "linear":
            return rho_t[:, None, None] * base, np.broadcast_to(base, (M, 3, 3)).copy()
        if self.material_mode == "simp":
            r = np.maximum(rho_t, self.simp_floor)
            return (r**self.simp_p)[:, None, None] * base, (self.simp_p * r ** (self.simp_p - 1.0))[
                :, None, None
            ] * np.broadcast_to(base, (M, 3, 3))
        if self.material_mode == "model":
            Em = np.empty((M, 3, 3))
            dEm = np.empty((M, 3, 3))
            for e in range(M):
                Em[e], dEm[e] = self.model.tensor_with_derivative(rho_t[e])
            return Em, dEm
        raise ValueError(f"unknown material mode {self.material_mode!r}")


def make_column_problem(
    nx,
    ny,
    Lx,
    Ly,
    total_load=1.0,
    material_mode="model",
    model=None,
    filter_radius=None,
    E0=10.0,
    nu=0.3,
    n_modes=6,
    mesh=None,
    explicit_Emats=None,
):
    """Axially compressed column: the bottom edge is held vertically with
    the midnode also held horizontally; a uniform downward traction with the
    given resultant acts on the top edge."""
    from .geometry import mesh_macro_grid

    if mesh is None:
        mesh = mesh_macro_grid(nx, ny, Lx, Ly)
    qd = fem.quadrature_data(mesh)
    bottom = mesh.boundary_node_sets["bottom"]
    top = mesh.boundary_node_sets["top"]
    xb = mesh.nodes[bottom, 0]
    center = bottom[np.argmin(np.abs(xb - 0.5 * Lx))]
    fixed = np.concatenate([2 * bottom + 1, [2 * center]])
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=fixed)
    f = np.zeros(mesh.n_dofs)
    # consistent loads for a uniform edge traction on equispaced nodes
    f[2 * top + 1] = -total_load / (len(top) - 1)
    f[2 * top[np.argmin(mesh.nodes[top, 0])] + 1] /= 2.0
    f[2 * top[np.argmax(mesh.nodes[top, 0])] + 1] /= 2.0
    h = Lx / nx
    if filter_radius is None:
        filter_radius = 1.6 * h
    filt = build_density_filter(mesh, filter_radius)
    return MacroProblem(
        mesh=mesh,
        qd=qd,
        constraints=con,
        f=f,
        filter=filt,
        material_mode=material_mode,
        model=model,
        E0=E0,
        nu=nu,
        n_modes=n_modes,
        explicit_Emats=explicit_Emats,
    )


@dataclass
class MacroState:
    """Analysis results at one design, with factorizations kept for the
    sensitivity passes."""

    rho: np.ndarray
    rho_t: np.ndarray
    u: np.ndarray
    compliance: float
    sigma_avg: np.ndarray          # (M, 3) element-average stress
    lam_macro: np.ndarray          # signed Lambda, |.| ascending
    modes: object                  # BucklingSolution or None
    lam_micro: np.ndarray          # per-element predicted micro load factor
    Emats: np.ndarray
    dEmats: np.ndarray
    factor: object
    K: object
    sigma_ip: np.ndarray
    n_filtered: int
    n_extrapolated: int = 0        # elements past the buckling-data knot range


def analyze(problem, rho, n_modes=None, want_buckling=True, filter_threshold=0.05):
    """Assemble, solve immersion and buckling, and predict micro buckling.

    Zero loads short-circuit: compliance 0, no stress, infinite load
    factors on both scales.
    """
    n_modes = problem.n_modes if n_modes is None else n_modes
    rho = np.asarray(rho, dtype=float)
    rho_t = problem.filter @ rho
    Emats, dEmats = problem.materials(rho_t)
    qd = problem.qd
    M = qd.c.shape[0]
    K = fem.assemble_stiffness(qd, Emats)

    if np.linalg.norm(problem.f) == 0.0:
        return MacroState(
            rho=rho,
            rho_t=rho_t,
            u=np.zeros(problem.mesh.n_dofs),
            compliance=0.0,
            sigma_avg=np.zeros((M, 3)),
            lam_macro=np.full(n_modes, INF_LF),
            modes=None,
            lam_micro=np.full(M, INF_LF),
            Emats=Emats,
            dEmats=dEmats,
            factor=None,
            K=K,
            sigma_ip=np.zeros((M, qd.c.shape[1], 3)),
            n_filtered=0,
        )

    lin = fem.solve_linear(K, problem.f, problem.constraints)
    u = lin.u
    c = float(problem.f @ u)
    sigma_ip = fem.ip_stress(qd, Emats, u)
    sigma_avg = fem.element_stress(qd, Emats, u) / qd.areas[:, None]

    lam_macro = np.full(n_modes, INF_LF)
    modes = None
    n_filtered = 0
    if want_buckling:
        G = fem.assemble_geometric_stiffness(qd, sigma_ip)
        modes = fem.solve_buckling(
            K, G, n_modes, problem.constraints, filter_threshold=filter_threshold, k_factor=lin.factor
        )
        lam_macro = modes.values
        n_filtered = modes.n_filtered

    lam_micro = np.full(M, INF_LF)
    n_extrapolated = 0
    if problem.material_mode == "model" and problem.model is not None:
        s_norm = homog.stress_norm(sigma_avg, axis=1)
        lw = np.array([problem.model.lam_wc(r) for r in rho_t])
        nz = s_norm > 1e-300
        lam_micro[nz] = lw[nz] / s_norm[nz]
        n_extrapolated = int(np.count_nonzero(rho_t > problem.model.lam_data_max))

    return MacroState(
        rho=rho,
        rho_t=rho_t,
        u=u,
        compliance=c,
        sigma_avg=sigma_avg,
        lam_macro=lam_macro,
        modes=modes,
        lam_micro=lam_micro,
        Emats=Emats,
        dEmats=dEmats,
        factor=lin.factor,
        K=K,
        sigma_ip=sigma_ip,
        n_filtered=n_filtered,
        n_extrapolated=n_extrapolated,
    )


def _strain_energy_density(qd, dEmats, ua, ub):
    """Per-element sum_k c eps(ua)^T dE eps(ub)."""
    ea = fem.ip_strain(qd, ua)
    eb = fem.ip_strain(qd, ub)
    return np.einsum("ekp,epq,ekq,ek->e", ea, dEmats, eb, qd.c)


def compliance_grad(problem, state):
    """d(f^T u)/d rho for design-independent loads, filter chained."""
    g_t = -_strain_energy_density(problem.qd, state.dEmats, state.u, state.u)
    return problem.filter.T @ g_t


def _mode_geometric_ip(qd, phi):
    """Per-ip vector y with phi^T G phi = sum c sigma . y for stress sigma."""
    pe = phi[qd.dof_map]
    px = pe[:, 0::2]
    py = pe[:, 1::2]
    gx = qd.dNdx[..., 0]
    gy = qd.dNdx[..., 1]
    dxx = np.einsum("ekn,en->ek", gx, px)   # d phi_x / dx
    dxy = np.einsum("ekn,en->ek", gy, px)   # d phi_x / dy
    dyx = np.einsum("ekn,en->ek", gx, py)
    dyy = np.einsum("ekn,en->ek", gy, py)
    yxx = dxx**2 + dyx**2
    yyy = dxy**2 + dyy**2
    yxy = 2.0 * (dxx * dxy + dyx * dyy)
    return np.stack([yxx, yyy, yxy], axis=-1)


def macro_lf_grad(problem, state, mode_index=0):
    """Gradient of the signed eigenvalue Lambda_l w.r.t. the raw densities.

    For coincident eigenvalues this is a subgradient (the derivative of the
    selected eigenpair along the current eigenvector).
    """
    qd = problem.qd
    phi = state.modes.vectors[:, mode_index]
    lam = state.modes.values[mode_index]
    con = problem.constraints
    # sign of the G-normalization: phi^T G phi = +-1
    y = _mode_geometric_ip(qd, phi)
    gsign = float(np.einsum("ekp,ekp,ek->", state.sigma_ip, y, qd.c))

    # explicit G derivative: stress changes with the element material
    dsig = fem.ip_stress(qd, state.dEmats, state.u)
    dG_e = np.einsum("ekp,ekp,ek->e", dsig, y, qd.c)

    # K derivative contracted with the mode
    dK_e = _strain_energy_density(qd, state.dEmats, phi, phi)

    # adjoint for the displacement dependence of G: K w = d(phi^T G phi)/du
    p = np.einsum("epq,ekq->ekp", state.Emats, y)
    r = fem.ip_force_vector(qd, p)
    w = fem.solve_linear(state.K, r, con, factor=state.factor).u
    cross_e = _strain_energy_density(qd, state.dEmats, w, state.u)

    g_t = (dK_e - lam * (dG_e - cross_e)) / gsign
    return problem.filter.T @ g_t


def micro_lf_grad(problem, state, elements):
    """Rows d lam_micro_e / d rho for the requested elements: (n_e, M).

    lam_micro_e = lam_wc(rho_t_e) / |sigma_avg_e| (tensor stress norm). The
    stress dependence on
    every density enters through one adjoint solve per element.
    """
    qd = problem.qd
    con = problem.constraints
    elements = np.asarray(elements, dtype=int)
    M = qd.c.shape[0]
    out = np.zeros((elements.size, M))
    if elements.size == 0:
        return out

    areas = qd.areas
    u = state.u
    rhs = np.zeros((con.n_full, elements.size))
    direct = np.zeros((elements.size, M))
    coef = np.zeros((elements.size, 3))
    for n, e in enumerate(elements):
        sig = state.sigma_avg[e]
        s = homog.stress_norm(sig)
        lw, dlw = problem.model.lam_wc(state.rho_t[e], derivative=True)
        if s < 1e-300:
            continue
        wsig = homog.STRESS_NORM_WEIGHTS * sig
        # direct density dependence of lam_wc and of the element stress
        dsig_e = fem.element_stress(_single_element(qd, e), state.dEmats[e], u) / areas[e]
        direct[n, e] = dlw / s - (lw / s**3) * float(wsig @ dsig_e[0])
        # adjoint load: d lam / du = -(lw/s^3) (W sigma)^T dsigma_avg/du
        coef[n] = -(lw / s**3) * wsig / areas[e]
        p = np.einsum("pq,q->p", state.Emats[e], coef[n])
        rhs[:, n] = _scatter_single_force(qd, e, p)

    z = state.factor.solve(con.reduce_vector(rhs))
    if z.ndim == 1:
        z = z[:, None]
    for n, e in enumerate(elements):
        if np.all(rhs[:, n] == 0.0):
            out[n] = direct[n]
            continue
        zn = con.T @ z[:, n]
        cross = _strain_energy_density(qd, state.dEmats, zn, u)
        out[n] = direct[n] - cross
    return (problem.filter.T @ out.T).T


def _single_element(qd, e):
    """A one-element view of the quadrature data."""
    return fem.QuadData(dNdx=qd.dNdx[e : e + 1], c=qd.c[e : e + 1], dof_map=qd.dof_map[e : e + 1], n_dofs=qd.n_dofs)


def _scatter_single_force(qd, e, p):
    sub = _single_element(qd, e)
    return fem.ip_force_vector(sub, np.broadcast_to(p, sub.dNdx.shape[:2] + (3,)))
