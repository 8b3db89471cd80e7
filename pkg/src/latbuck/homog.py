"""Asymptotic homogenization of the lattice cell and microscale buckling.

Cell problems are solved on a periodic kappa x kappa block. The homogenized
tensor is independent of kappa; buckling is not, since larger blocks admit
longer-wavelength cell-periodic modes. Worst-case load factors therefore
minimize over a set of repetition counts kappa as well as over the stress
direction sphere.

Unit stress directions: the deviatoric/volumetric split

    sigma(theta, phi) = cos(theta) * (-1,-1,0)/sqrt(2)
                      + sin(theta) * (cos(phi) * (1,-1,0)/sqrt(2)
                                      + sin(phi) * (0,0,1)/sqrt(2))

covers all unit stresses with theta in [0, 180) and phi in [0, 360).
Magnitudes use the tensor (Frobenius) inner product, which weights the
engineering shear component by 2; only in that metric do the lattice
symmetries act as rigid motions of the sphere (rotating a stress by 60
degrees in the plane shifts phi by 120), so uniaxial stresses sit on one
circle of latitude and the folded azimuth range [0, 30] covers the sphere.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import fem
from .geometry import SQRT3, UnitCellParams, mesh_unit_cell

# Voigt component weights of the tensor inner product
STRESS_NORM_WEIGHTS = np.array([1.0, 1.0, 2.0])

_A1 = np.array([-1.0, -1.0, 0.0]) / np.sqrt(2.0)
_A2 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
_A3 = np.array([0.0, 0.0, 1.0]) / np.sqrt(2.0)


def stress_norm(sigma, axis=-1):
    """Tensor-norm magnitude of Voigt stresses along the given axis."""
    s = np.asarray(sigma, dtype=float)
    out = np.sqrt(np.sum(STRESS_NORM_WEIGHTS * s * s, axis=axis))
    return float(out) if np.ndim(out) == 0 else out

UNIT_STRAINS = np.eye(3)


def unit_stress(theta_deg, phi_deg):
    """Voigt stress of unit tensor norm for sphere angles in degrees."""
    t = np.radians(theta_deg)
    p = np.radians(phi_deg)
    return np.cos(t) * _A1 + np.sin(t) * (np.cos(p) * _A2 + np.sin(p) * _A3)


def fold_azimuth(phi_deg):
    """Fold an azimuth into the stored sweep range [0, 30].

    Lattice symmetry alone gives azimuth period 120 with mirrors at 0 and
    60; the further fold onto [0, 30] identifies each stress with its
    negative (equal load factor magnitudes), which flips the inclination
    to 180 - theta. On the shear equator the fold is a plain symmetry.
    """
    p = phi_deg % 60.0
    return 60.0 - p if p > 30.0 else p


def sphere_grid(theta_step_deg, phi_step_deg, phi_max_deg=30.0):
    """(theta, phi) pairs covering the reduced stress sphere."""
    thetas = np.arange(0.0, 180.0, theta_step_deg)
    phis = np.arange(0.0, phi_max_deg + 1e-9, phi_step_deg)
    pairs = [(float(t), float(p)) for t in thetas for p in phis]
    return pairs


def brillouin_points(kappa):
    """Distinct wave-vector fractions (n1/kappa, n2/kappa) in [0,1)^2 sampled
    by a kappa x kappa periodic block. Fractions are exact, so the point set
    of kappa divides that of any multiple of kappa."""
    pts = set()
    for n1 in range(kappa):
        for n2 in range(kappa):
            pts.add((Fraction(n1, kappa), Fraction(n2, kappa)))
    return sorted(pts)


@dataclass
class CellSolution:
    """Cell problem solutions on one periodic block.

    chi: (n_dofs, 3) correctors for the three unit strains. factor is the
    sparse LU of the reduced stiffness, reused by the buckling solves.
    """

    params: UnitCellParams
    kappa: int
    mesh: object
    qd: object
    E0: np.ndarray
    chi: np.ndarray
    constraints: object
    K: object
    factor: object
    domain_area: float


def periodic_constraints(mesh, pin_node=None):
    """Periodic master-slave reduction with one pinned node to remove the
    translation nullspace."""
    if pin_node is None:
        masters = set(map(int, mesh.periodic_masters))
        slaves = set(map(int, mesh.periodic_slaves))
        pin_node = 0
        while pin_node in slaves:
            pin_node += 1
        del masters
    fixed = np.array([2 * pin_node, 2 * pin_node + 1])
    return fem.build_constraints(
        mesh.n_dofs,
        fixed_dofs=fixed,
        periodic_node_pairs=(mesh.periodic_masters, mesh.periodic_slaves),
    )


def solve_cell_problems(params, kappa, target_elements, E0_mat, mesh=None):
    """Solve the three unit-strain cell problems on a kappa block."""
    if mesh is None:
        mesh = mesh_unit_cell(params, kappa=kappa, target_elements=target_elements)
    qd = fem.quadrature_data(mesh)
    con = periodic_constraints(mesh)
    K = fem.assemble_stiffness(qd, E0_mat)
    chi = np.zeros((mesh.n_dofs, 3))
    factor = None
    for j in range(3):
        f = fem.strain_load_vector(qd, E0_mat, UNIT_STRAINS[j])
        sol = fem.solve_linear(K, f, con, factor=factor)
        factor = sol.factor
        chi[:, j] = sol.u
    area = (kappa * params.d) ** 2 * SQRT3 / 2.0
    return CellSolution(
        params=params,
        kappa=kappa,
        mesh=mesh,
        qd=qd,
        E0=E0_mat,
        chi=chi,
        constraints=con,
        K=K,
        factor=factor,
        domain_area=area,
    )


def homogenized_tensor(cell):
    """Homogenized plane-stress tensor from the cell correctors."""
    qd = cell.qd
    # corrected strain fields eps~^j - B chi^j at every integration point
    r = [UNIT_STRAINS[j][None, None, :] - fem.ip_strain(qd, cell.chi[:, j]) for j in range(3)]
    EH = np.empty((3, 3))
    for i in range(3):
        Er_i = np.einsum("pq,ekq->ekp", cell.E0, r[i])
        for j in range(i, 3):
            EH[i, j] = EH[j, i] = float(np.einsum("ekp,ekp,ek->", Er_i, r[j], qd.c))
    return EH / cell.domain_area


def isotropic_constants(EH):
    """(E, nu) of the closest isotropic interpretation of a tensor in
    plane stress: nu from E12/E11, E from E11 (1 - nu^2)."""
    nu = EH[0, 1] / EH[0, 0]
    E = EH[0, 0] * (1.0 - nu * nu)
    return float(E), float(nu)


@dataclass
class MicroBuckling:
    lam: float              # smallest |Lambda|
    values: np.ndarray      # signed, |.| ascending
    n_filtered: int
    solution: object = None


def micro_stress(cell, EH, sigma_bar):
    """Pointwise microscopic stress under a macroscopic stress sigma_bar."""
    eps_bar = np.linalg.solve(EH, np.asarray(sigma_bar, dtype=float))
    u = cell.chi @ eps_bar
    return fem.ip_stress(cell.qd, cell.E0, -u, strain_offset=eps_bar)


def micro_buckling_lf(cell, EH, sigma_bar, n_modes=3, filter_threshold=0.05, keep_solution=False):
    """Microscale buckling load factor of the cell block under sigma_bar.

    Returns the smallest-|Lambda| eigenvalue of K phi = Lambda G(sigma) phi
    on the periodic block, after discarding artificial modes. By linearity
    lam(t sigma) = lam(sigma) / t.
    """
    s_ip = micro_stress(cell, EH, sigma_bar)
    G = fem.assemble_geometric_stiffness(cell.qd, s_ip)
    sol = fem.solve_buckling(
        cell.K,
        G,
        n_modes,
        cell.constraints,
        filter_threshold=filter_threshold,
        k_factor=cell.factor,
    )
    return MicroBuckling(
        lam=float(np.abs(sol.values).min()),
        values=sol.values,
        n_filtered=sol.n_filtered,
        solution=sol if keep_solution else None,
    )


@dataclass
class SweepEntry:
    rho: float
    kappa: int
    theta_deg: float
    phi_deg: float
    sigma: np.ndarray
    lam: float
    n_modes_filtered: int


@dataclass
class SweepResult:
    """All sweep entries for one density."""

    rho: float
    entries: list
    EH: np.ndarray
    failures: list

    def lam_table(self):
        return np.array([e.lam for e in self.entries])

    def worst_case(self):
        """(lam_wc, argmin entry); exact minimum over the swept set."""
        lams = self.lam_table()
        ok = np.isfinite(lams)
        if not np.any(ok):
            raise fem.SolverError(f"sweep at rho={self.rho} produced no finite load factors")
        i = int(np.flatnonzero(ok)[np.argmin(lams[ok])])
        return float(lams[i]), self.entries[i]


def sweep(
    params,
    kappa_set=(1, 2, 3),
    theta_step_deg=22.5,
    phi_step_deg=15.0,
    phi_max_deg=30.0,
    target_elements_per_cell=1200,
    n_modes=3,
    E0_mat=None,
    filter_threshold=0.05,
    progress=None,
):
    """Sweep the reduced stress sphere for one density over kappa blocks.

    One mesh and factorization per kappa is reused across all stress points.
    Entries that fail to solve are recorded with lam = nan in 'failures'
    instead of aborting the sweep.
    """
    if E0_mat is None:
        E0_mat = fem.plane_stress_matrix(10.0, 0.3)
    grid = sphere_grid(theta_step_deg, phi_step_deg, phi_max_deg)
    entries = []
    failures = []
    EH = None
    for kappa in kappa_set:
        cell = solve_cell_problems(params, kappa, target_elements_per_cell * kappa**2, E0_mat)
        if EH is None:
            EH = homogenized_tensor(cell)
        for theta, phi in grid:
            sig = unit_stress(theta, phi)
            try:
                mb = micro_buckling_lf(cell, EH, sig, n_modes=n_modes, filter_threshold=filter_threshold)
                lam, nf = mb.lam, mb.n_filtered
            except fem.SolverError as err:
                failures.append({"kappa": kappa, "theta": theta, "phi": phi, "error": str(err)})
                lam, nf = float("nan"), -1
            entries.append(
                SweepEntry(
                    rho=params.rho,
                    kappa=kappa,
                    theta_deg=theta,
                    phi_deg=phi,
                    sigma=sig,
                    lam=lam,
                    n_modes_filtered=nf,
                )
            )
            if progress is not None:
                progress(kappa, theta, phi, lam)
    return SweepResult(rho=params.rho, entries=entries, EH=EH, failures=failures)
