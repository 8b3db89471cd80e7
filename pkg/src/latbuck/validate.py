"""Validation studies for the two-scale pipeline.

Covers the closed-form column check, the reinforced-column (endo versus
exoskeleton) pre-study, buckling-mode classification on dehomogenized
meshes, a posteriori per-element homogenization against the worst-case
prediction, full dehomogenized-design analysis, and a bow-tie domain that
exercises tension, compression, and shear regions at once.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem, geometry, homog, macro
from .mesh import Mesh


def euler_critical_load(L, E, I):
    """Critical load of a column clamped at one end and free at the other."""
    return math.pi**2 * E * I / (4.0 * L**2)


@dataclass
class EulerResult:
    analytic: float
    numeric: float
    rel_gap: float


def euler_check(nx=25, ny=130, Lx=1.0, Ly=5.2, E0=10.0, nu=0.3, return_state=False):
    """Solid-column buckling against the closed form (unit depth)."""
    I = Lx**3 / 12.0
    analytic = euler_critical_load(Ly, E0, I)
    prob = macro.make_column_problem(nx, ny, Lx, Ly, total_load=1.0, material_mode="linear", E0=E0, nu=nu, n_modes=3)
    st = macro.analyze(prob, np.ones(prob.mesh.n_elements), n_modes=3)
    numeric = float(np.abs(st.lam_macro).min())
    res = EulerResult(analytic=analytic, numeric=numeric, rel_gap=abs(numeric - analytic) / analytic)
    if return_state:
        return res, st, prob
    return res


@dataclass
class SkeletonResult:
    endo: float
    exo: float
    ratio: float
    E_weak: np.ndarray


def skeleton_study(
    E0=10.0,
    nu=0.3,
    width=1.75,
    height=5.2,
    n_across=35,
    n_up=104,
    solid_width=0.5,
    weak_rho=0.4,
    plate_scale=100.0,
    plate_thickness=0.25,
    cell_target=1200,
    r_rel=geometry.DEFAULT_R_REL,
):
    """Critical loads of a weak column with a solid reinforcement placed
    either as a central spine or as two flanking strips of half the width.
    The load enters through a much stiffer plate on top; the plate carries
    the load down and its thickness extends the buckling moment arm. The
    weak region uses the homogenized lattice tensor at the given density."""
    E0_mat = fem.plane_stress_matrix(E0, nu)
    cell = homog.solve_cell_problems(
        geometry.UnitCellParams(d=1.0, rho=weak_rho, r_rel=r_rel), kappa=1, target_elements=cell_target, E0_mat=E0_mat
    )
    E_weak = homog.homogenized_tensor(cell)

    h = width / n_across
    n_plate = max(1, int(round(plate_thickness / h)))
    ny = n_up + n_plate
    mesh = geometry.mesh_macro_grid(n_across, ny, width, height + n_plate * h)
    solid_mat = E0_mat
    plate_mat = fem.plane_stress_matrix(plate_scale * E0, nu)

    def run(strip_mask):
        Emats = np.empty((mesh.n_elements, 3, 3))
        for e in range(mesh.n_elements):
            col = e % n_across
            row = e // n_across
            if row >= n_up:
                Emats[e] = plate_mat
            elif strip_mask[col]:
                Emats[e] = solid_mat
            else:
                Emats[e] = E_weak
        prob = macro.make_column_problem(
            n_across, ny, width, height + n_plate * h,
            total_load=1.0, material_mode="explicit", explicit_Emats=Emats, n_modes=4, mesh=mesh,
        )
        st = macro.analyze(prob, np.ones(mesh.n_elements), n_modes=4)
        return float(np.abs(st.lam_macro).min())

    n_solid = int(round(solid_width / h))
    endo_mask = np.zeros(n_across, dtype=bool)
    lo = (n_across - n_solid) // 2
    endo_mask[lo : lo + n_solid] = True
    exo_mask = np.zeros(n_across, dtype=bool)
    exo_mask[: n_solid // 2] = True
    exo_mask[n_across - n_solid // 2 :] = True

    endo = run(endo_mask)
    exo = run(exo_mask)
    return SkeletonResult(endo=endo, exo=exo, ratio=exo / endo, E_weak=E_weak)


# ---------------------------------------------------------------------------
# mode classification


@dataclass
class ModeClass:
    label: str                 # macroscopic | microscopic-boundary | microscopic-interior
    boundary_ratio: float      # max boundary |phi| / max |phi|
    active_fraction: float     # fraction of nodes with |phi| >= 10% of peak


def outer_boundary_nodes(mesh):
    """Nodes on the axis-aligned bounding box of the mesh. For the lattice
    domains produced here the structural boundary is exactly the outer
    rectangle; interior void rims do not count as boundary."""
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    tol = 1e-6 * float(np.max(hi - lo))
    on = (
        (np.abs(mesh.nodes[:, 0] - lo[0]) < tol)
        | (np.abs(mesh.nodes[:, 0] - hi[0]) < tol)
        | (np.abs(mesh.nodes[:, 1] - lo[1]) < tol)
        | (np.abs(mesh.nodes[:, 1] - hi[1]) < tol)
    )
    return np.flatnonzero(on)


def classify_modes(solution, mesh, boundary=None, interior_cutoff=0.01, active_level=0.1, macro_fraction=0.15):
    """Label buckling modes by where they deflect.

    A mode with essentially no boundary motion is a microscopic interior
    mode: the quantity homogenization can legitimately predict. Among
    boundary-deflecting modes, those engaging a large share of the nodes are
    macroscopic; localized ones are boundary cell-wall modes. Labels are
    invariant under mode scaling and sign."""
    if boundary is None:
        boundary = outer_boundary_nodes(mesh)
    out = []
    for k in range(solution.vectors.shape[1]):
        phi = solution.vectors[:, k].reshape(-1, 2)
        mag = np.hypot(phi[:, 0], phi[:, 1])
        peak = float(mag.max())
        if peak <= 0.0:
            out.append(ModeClass(label="microscopic-interior", boundary_ratio=0.0, active_fraction=0.0))
            continue
        bratio = float(mag[boundary].max() / peak) if len(boundary) else 0.0
        afrac = float(np.count_nonzero(mag >= active_level * peak)) / mag.shape[0]
        if bratio <= interior_cutoff:
            label = "microscopic-interior"
        elif afrac >= macro_fraction:
            label = "macroscopic"
        else:
            label = "microscopic-boundary"
        out.append(ModeClass(label=label, boundary_ratio=bratio, active_fraction=afrac))
    return out


# ---------------------------------------------------------------------------
# a posteriori homogenization


@dataclass
class ElementCheck:
    element: int
    rho: float
    rho_q: float
    sigma: np.ndarray
    lam_pred: float
    lam_ap: float
    rel_diff: float
    safeguard_ok: bool


@dataclass
class ValidationReport:
    checks: list
    mean_rel_diff: float
    std_rel_diff: float
    frac_safeguard: float
    n_checked: int
    bounds: dict = field(default_factory=dict)

    @staticmethod
    def from_checks(checks, bounds=None):
        diffs = np.array([c.rel_diff for c in checks]) if checks else np.zeros(0)
        ok = np.array([c.safeguard_ok for c in checks]) if checks else np.zeros(0, dtype=bool)
        return ValidationReport(
            checks=checks,
            mean_rel_diff=float(diffs.mean()) if diffs.size else 0.0,
            std_rel_diff=float(diffs.std()) if diffs.size else 0.0,
            frac_safeguard=float(ok.mean()) if ok.size else 1.0,
            n_checked=len(checks),
            bounds=dict(bounds or {}),
        )


class _CellCache:
    """RVE solutions keyed by quantized density and repetition count.

    One factorization serves every stress direction at that density, so the
    per-element cost after the first hit is a single eigensolve."""

    def __init__(self, r_rel, target_elements_per_cell, E0_mat):
        self.r_rel = r_rel
        self.target = target_elements_per_cell
        self.E0_mat = E0_mat
        self._cells = {}

    def get(self, rho_q, kappa):
        key = (rho_q, kappa)
        if key not in self._cells:
            params = geometry.UnitCellParams(d=1.0, rho=rho_q, r_rel=self.r_rel)
            cell = homog.solve_cell_problems(
                params, kappa=kappa, target_elements=self.target * kappa**2, E0_mat=self.E0_mat
            )
            self._cells[key] = (cell, homog.homogenized_tensor(cell))
        return self._cells[key]


def a_posteriori(
    rho_t,
    sigma_avg,
    model,
    kappa_set=(1, 2, 3),
    elements=None,
    quant_step=0.01,
    target_elements_per_cell=1200,
    E0=10.0,
    nu=0.3,
    r_rel=geometry.DEFAULT_R_REL,
    n_modes=3,
    filter_threshold=0.05,
    min_stress_rel=1e-8,
    progress=None,
    cache=None,
):
    """Re-homogenize selected elements with their actual stress.

    For each element the density is snapped to a quantization grid (shared
    RVE solutions make the study tractable), the cell problem is solved per
    repetition count, and the buckling load factor under the element's real
    average stress is minimized over repetitions. The worst-case prediction
    at the same quantized density is the comparison value; by construction
    it can only be lower, up to interpolation and eigensolver tolerance."""
    rho_t = np.asarray(rho_t, dtype=float)
    sigma_avg = np.asarray(sigma_avg, dtype=float)
    M = rho_t.shape[0]
    if elements is None:
        elements = np.arange(M)
    elements = np.asarray(elements, dtype=int)
    lo, hi = geometry.density_bounds(r_rel)
    if cache is None:
        cache = _CellCache(r_rel, target_elements_per_cell, fem.plane_stress_matrix(E0, nu))
    smax = float(homog.stress_norm(sigma_avg, axis=1).max())
    checks = []
    for n, e in enumerate(elements):
        sig = sigma_avg[e]
        s = homog.stress_norm(sig)
        rho_e = float(rho_t[e])
        if s <= min_stress_rel * smax or rho_e >= hi:
            continue  # unloaded or effectively solid: no lattice buckling to check
        rho_q = float(np.clip(round(rho_e / quant_step) * quant_step, max(lo * 1.05, quant_step), hi - quant_step))
        lam_ap = np.inf
        for kappa in kappa_set:
            cell, EH = cache.get(rho_q, kappa)
            mb = homog.micro_buckling_lf(cell, EH, sig, n_modes=n_modes, filter_threshold=filter_threshold)
            lam_ap = min(lam_ap, float(mb.lam))
        lam_pred = float(model.lam_wc(rho_q)) / s
        rel = (lam_ap - lam_pred) / lam_pred
        checks.append(
            ElementCheck(
                element=int(e),
                rho=rho_e,
                rho_q=rho_q,
                sigma=sig.copy(),
                lam_pred=lam_pred,
                lam_ap=lam_ap,
                rel_diff=rel,
                safeguard_ok=bool(lam_ap >= lam_pred * (1.0 - 1e-6)),
            )
        )
        if progress is not None:
            progress(n + 1, len(elements), checks[-1])
    return ValidationReport.from_checks(checks)


def a_priori_bounds(sweep_result):
    """Per stress type: relative headroom between the best direction on that
    type's curve and the worst case over everything. This bounds the error
    the worst-case simplification can introduce for that stress type."""
    lam_wc = sweep_result.worst_case()[0]
    per_theta = {}
    for en in sweep_result.entries:
        if not np.isfinite(en.lam):
            continue
        key = (en.theta_deg, en.phi_deg)
        cur = per_theta.setdefault(en.theta_deg, {})
        cur[en.phi_deg] = min(cur.get(en.phi_deg, np.inf), en.lam)
    return {
        theta: float(max(dirs.values()) / lam_wc - 1.0)
        for theta, dirs in per_theta.items()
    }


# ---------------------------------------------------------------------------
# dehomogenized-design analysis


def _edge_traction(mesh, node_set, total, direction=(0.0, -1.0)):
    """Consistent nodal forces for a uniform traction with the given
    resultant over the boundary edges whose nodes all lie in node_set."""
    members = np.zeros(mesh.n_nodes, dtype=bool)
    members[node_set] = True
    f = np.zeros(mesh.n_dofs)
    total_len = 0.0
    edges = []
    if mesh.element_type == "tri6":
        pairs = [(0, 1, 3), (1, 2, 4), (2, 0, 5)]
        seen = set()
        for el in mesh.elements:
            for a, b, m in pairs:
                na, nb, nm = el[a], el[b], el[m]
                if members[na] and members[nb] and members[nm]:
                    key = (min(na, nb), max(na, nb))
                    if key in seen:
                        continue
                    seen.add(key)
                    L = float(np.linalg.norm(mesh.nodes[nb] - mesh.nodes[na]))
                    edges.append(((na, nb, nm), L))
                    total_len += L
        for (na, nb, nm), L in edges:
            for node, w in ((na, 1.0 / 6.0), (nb, 1.0 / 6.0), (nm, 4.0 / 6.0)):
                f[2 * node] += w * L * direction[0]
                f[2 * node + 1] += w * L * direction[1]
    else:
        n_corner = {"quad4": 4, "tri3": 3}[mesh.element_type]
        seen = set()
        for el in mesh.elements:
            for a in range(n_corner):
                na, nb = el[a], el[(a + 1) % n_corner]
                if members[na] and members[nb]:
                    key = (min(na, nb), max(na, nb))
                    if key in seen:
                        continue
                    seen.add(key)
                    L = float(np.linalg.norm(mesh.nodes[nb] - mesh.nodes[na]))
                    edges.append(((na, nb), L))
                    total_len += L
        for (na, nb), L in edges:
            for node in (na, nb):
                f[2 * node] += 0.5 * L * direction[0]
                f[2 * node + 1] += 0.5 * L * direction[1]
    if total_len == 0.0:
        raise ValueError("no boundary edges found inside the node set")
    return f * (total / total_len)


@dataclass
class DehomResult:
    n_cells_x: int
    n_elements: int
    n_dofs: int
    gamma: float
    compliance: float
    compliance_pred: float
    macro_blf: float
    macro_blf_pred: float
    macro_mode_index: int
    interior_lf: float
    interior_mode_index: int
    min_micro_pred: float
    mode_labels: list
    values: np.ndarray
    info: dict


def dehom_validation(
    problem,
    rho,
    n_cells_x=12,
    target_elements=100000,
    total_load=1.0,
    n_modes_scan=60,
    interior_cutoff=0.01,
    filter_threshold=0.02,
    r_rel=geometry.DEFAULT_R_REL,
    progress=None,
):
    """Dehomogenize the optimized density field, rerun the full-resolution
    buckling analysis, and compare against the homogenized predictions.

    The macroscopic load factor comes from the first mode classified as
    macroscopic; the interior load factor from the first mode with no
    boundary deflection. The dehomogenized interior value should sit at or
    above the worst-case prediction."""
    st = macro.analyze(problem, rho, want_buckling=True)
    finite = np.isfinite(st.lam_micro)
    min_micro_pred = float(np.min(st.lam_micro[finite])) if np.any(finite) else float("inf")

    bset = problem.mesh.boundary_node_sets
    nx = len(bset["bottom"]) - 1
    ny = len(bset["left"]) - 1
    Lx = float(problem.mesh.nodes[:, 0].max())
    Ly = float(problem.mesh.nodes[:, 1].max())
    field = geometry.DensityField(nx, ny, Lx, Ly, st.rho_t)
    mesh, info = geometry.dehomogenize(field, n_cells_x, target_elements, r_rel=r_rel)
    if progress is not None:
        progress("mesh", mesh.n_elements, mesh.n_dofs)

    qd = fem.quadrature_data(mesh)
    E0_mat = fem.plane_stress_matrix(problem.E0, problem.nu)
    K = fem.assemble_stiffness(qd, E0_mat)
    bottom = mesh.boundary_node_sets["bottom"]
    xb = mesh.nodes[bottom, 0]
    center = bottom[np.argmin(np.abs(xb - 0.5 * Lx))]
    fixed = np.concatenate([2 * bottom + 1, [2 * center]])
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=fixed)
    f = _edge_traction(mesh, mesh.boundary_node_sets["top"], total_load)
    lin = fem.solve_linear(K, f, con)
    compliance = float(f @ lin.u)
    if progress is not None:
        progress("linear", compliance, None)

    sigma_ip = fem.ip_stress(qd, E0_mat, lin.u)
    G = fem.assemble_geometric_stiffness(qd, sigma_ip)
    sol = fem.solve_buckling(
        K, G, n_modes_scan, con, filter_threshold=filter_threshold, k_factor=lin.factor
    )
    labels = classify_modes(sol, mesh, interior_cutoff=interior_cutoff)
    if progress is not None:
        progress("buckling", sol.values, [l.label for l in labels])

    macro_idx = next((i for i, l in enumerate(labels) if l.label == "macroscopic"), -1)
    interior_idx = next((i for i, l in enumerate(labels) if l.label == "microscopic-interior"), -1)
    return DehomResult(
        n_cells_x=n_cells_x,
        n_elements=mesh.n_elements,
        n_dofs=mesh.n_dofs,
        gamma=info["gamma"],
        compliance=compliance,
        compliance_pred=float(st.compliance),
        macro_blf=float(abs(sol.values[macro_idx])) if macro_idx >= 0 else float("nan"),
        macro_blf_pred=float(np.abs(st.lam_macro).min()),
        macro_mode_index=macro_idx,
        interior_lf=float(abs(sol.values[interior_idx])) if interior_idx >= 0 else float("nan"),
        interior_mode_index=interior_idx,
        min_micro_pred=min_micro_pred,
        mode_labels=[l.label for l in labels],
        values=sol.values.copy(),
        info=info,
    )


# ---------------------------------------------------------------------------
# bow-tie domain: tension, compression, and shear at once


def bowtie_mesh(nx, ny, Lx=2.0, Ly=1.0, waist=0.5):
    """Structured quadrilateral mesh of a bow-tie: full height at the left
    and right edges, pinched to waist*Ly midway, straight taper."""
    nodes = np.empty(((nx + 1) * (ny + 1), 2))
    for i in range(nx + 1):
        x = Lx * i / nx
        w = Ly * (waist + (1.0 - waist) * abs(x - 0.5 * Lx) / (0.5 * Lx))
        y0 = 0.5 * (Ly - w)
        for j in range(ny + 1):
            nodes[j * (nx + 1) + i] = (x, y0 + w * j / ny)
    elems = np.empty((nx * ny, 4), dtype=int)
    for j in range(ny):
        for i in range(nx):
            n0 = j * (nx + 1) + i
            elems[j * nx + i] = (n0, n0 + 1, n0 + nx + 2, n0 + nx + 1)
    sets = {
        "left": np.arange(0, (nx + 1) * (ny + 1), nx + 1),
        "right": np.arange(nx, (nx + 1) * (ny + 1), nx + 1),
    }
    return Mesh(nodes=nodes, elements=elems, element_type="quad4", boundary_node_sets=sets)


def stress_direction(sigma):
    """Angles (theta, phi_folded) in degrees locating a stress on the unit
    sphere; theta 0 is biaxial compression, 45 uniaxial compression, 90
    shear, 135 uniaxial tension, 180 biaxial tension. Components are taken
    in the tensor inner product so every uniaxial stress reads theta = 45
    or 135 exactly; phi is folded into the sweep range [0, 30]."""
    sig = np.asarray(sigma, dtype=float)
    n = homog.stress_norm(sig)
    if n == 0.0:
        return float("nan"), float("nan")
    ws = homog.STRESS_NORM_WEIGHTS * sig / n
    a = float(ws @ homog._A1)
    b = float(ws @ homog._A2)
    c = float(ws @ homog._A3)
    theta = math.degrees(math.atan2(math.hypot(b, c), a))
    phi = math.degrees(math.atan2(c, b))
    return theta, homog.fold_azimuth(phi)


STRESS_TYPE_BANDS = {
    "biaxial-compression": (0.0, 15.0),
    "uniaxial-compression": (33.0, 57.0),
    "shear": (78.0, 102.0),
    "uniaxial-tension": (123.0, 147.0),
    "biaxial-tension": (165.0, 180.0),
}


def stress_type(sigma):
    theta, _ = stress_direction(sigma)
    if math.isnan(theta):
        return "unloaded"
    for label, (lo, hi) in STRESS_TYPE_BANDS.items():
        if lo <= theta <= hi:
            return label
    return "mixed"


@dataclass
class BowtieResult:
    ratios: dict           # stress type -> mean lam_ap / lam_pred
    counts: dict
    report: ValidationReport
    types: list


def bowtie_study(
    model,
    nx=40,
    ny=20,
    waist=0.5,
    rho=0.5,
    total_load=1.0,
    kappa_set=(1, 2, 3),
    per_type=8,
    min_stress_frac=0.25,
    E0=10.0,
    nu=0.3,
    target_elements_per_cell=1200,
    progress=None,
):
    """Uniform-density bow-tie under a downward edge load: the waist carries
    shear while the flanks above and below it see uniaxial tension and
    compression. A posteriori homogenization per region quantifies how much
    the worst-case model undershoots for each stress type."""
    mesh = bowtie_mesh(nx, ny, waist=waist)
    left = mesh.boundary_node_sets["left"]
    right = mesh.boundary_node_sets["right"]
    fixed = np.concatenate([2 * left, 2 * left + 1, 2 * right])
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=fixed)
    f = _edge_traction(mesh, right, total_load)
    prob = macro.MacroProblem(
        mesh=mesh,
        qd=fem.quadrature_data(mesh),
        constraints=con,
        f=f,
        filter=macro.build_density_filter(mesh, 0.0),
        material_mode="model",
        model=model,
        E0=E0,
        nu=nu,
        n_modes=2,
    )
    st = macro.analyze(prob, np.full(mesh.n_elements, rho), want_buckling=False)

    norms = homog.stress_norm(st.sigma_avg, axis=1)
    types = [stress_type(st.sigma_avg[e]) for e in range(mesh.n_elements)]
    strong = norms >= min_stress_frac * norms.max()

    rng = np.random.default_rng(0)
    picked = []
    for label in ("shear", "uniaxial-compression", "uniaxial-tension"):
        cand = [e for e in range(mesh.n_elements) if types[e] == label and strong[e]]
        if len(cand) > per_type:
            cand = list(rng.choice(cand, size=per_type, replace=False))
        picked.extend(cand)

    report = a_posteriori(
        st.rho_t,
        st.sigma_avg,
        model,
        kappa_set=kappa_set,
        elements=np.array(sorted(picked), dtype=int),
        target_elements_per_cell=target_elements_per_cell,
        E0=E0,
        nu=nu,
        progress=progress,
    )
    ratios = {}
    counts = {}
    for c in report.checks:
        label = types[c.element]
        ratios.setdefault(label, []).append(c.lam_ap / c.lam_pred)
    for label, vals in ratios.items():
        counts[label] = len(vals)
        ratios[label] = float(np.mean(vals))
    return BowtieResult(ratios=ratios, counts=counts, report=report, types=types)
