import numpy as np
import pytest

from latbuck import fem, geometry
from latbuck.mesh import Mesh, element_areas
from latbuck.meshing import tri3_to_tri6

E0 = fem.plane_stress_matrix(10.0, 0.3)


def _tri6_patch():
    """Irregular two-triangle patch upgraded to tri6."""
    nodes = np.array([[0.0, 0.0], [1.1, 0.1], [0.9, 1.2], [-0.1, 0.8]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    n6, conn, _ = tri3_to_tri6(nodes, tris)
    return Mesh(nodes=n6, elements=conn, element_type="tri6")


def _quad_grid(nx=3, ny=2, Lx=1.2, Ly=0.7):
    return geometry.mesh_macro_grid(nx, ny, Lx, Ly)


def test_plane_stress_matrix_values():
    E, nu = 10.0, 0.3
    C = fem.plane_stress_matrix(E, nu)
    f = E / (1 - nu**2)
    assert np.allclose(C, f * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]]))


@pytest.mark.parametrize("mesh_fn", [_tri6_patch, _quad_grid])
def test_quadrature_weights_sum_to_area(mesh_fn):
    mesh = mesh_fn()
    qd = fem.quadrature_data(mesh)
    assert np.allclose(qd.areas, element_areas(mesh), rtol=1e-12)


@pytest.mark.parametrize("mesh_fn", [_tri6_patch, _quad_grid])
def test_patch_linear_field_exact(mesh_fn):
    # linear displacement fields carry constant strain through both element
    # types, so internal forces reduce to the prescribed-strain load vector
    mesh = mesh_fn()
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    eps = np.array([0.3, -0.2, 0.5])
    A = np.array([[eps[0], eps[2] / 2], [eps[2] / 2, eps[1]]])
    u = (mesh.nodes @ A.T).reshape(-1)
    assert np.allclose(K @ u, fem.strain_load_vector(qd, E0, eps), atol=1e-12)
    sig = fem.ip_stress(qd, E0, u)
    assert np.allclose(sig, (E0 @ eps)[None, None, :], atol=1e-12)


def test_stiffness_symmetric_psd_with_rigid_modes():
    mesh = _quad_grid()
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0).toarray()
    assert np.allclose(K, K.T, atol=1e-12)
    w = np.linalg.eigvalsh(K)
    assert w[0] > -1e-10 * w[-1]
    assert np.sum(w < 1e-10 * w[-1]) == 3  # two translations + one rotation


def test_element_stress_average():
    mesh = _quad_grid()
    qd = fem.quadrature_data(mesh)
    eps = np.array([0.1, 0.0, -0.4])
    A = np.array([[eps[0], eps[2] / 2], [eps[2] / 2, eps[1]]])
    u = (mesh.nodes @ A.T).reshape(-1)
    avg = fem.element_stress(qd, E0, u) / qd.areas[:, None]
    assert np.allclose(avg, (E0 @ eps)[None, :], atol=1e-12)


def test_constraints_fixed_and_periodic():
    mesh = _quad_grid(2, 2, 1.0, 1.0)
    left = mesh.boundary_node_sets["left"]
    right = mesh.boundary_node_sets["right"]
    con = fem.build_constraints(
        mesh.n_dofs, fixed_dofs=(2 * left[0] + np.array([0, 1])), periodic_node_pairs=(left, right)
    )
    assert con.n_reduced == mesh.n_dofs - 2 - 2 * len(left)
    ur = np.arange(con.n_reduced, dtype=float)
    u = con.expand(ur)
    assert np.allclose(u[2 * right], u[2 * left])
    assert np.allclose(u[2 * right + 1], u[2 * left + 1])
    assert u[2 * left[0]] == 0.0 and u[2 * left[0] + 1] == 0.0


def test_fixed_values_enter_solution():
    # stretch a strip by prescribing end displacements; pin u_y at one node
    # only, so the exact uniform uniaxial-stress field satisfies every BC
    mesh = _quad_grid(4, 2, 2.0, 0.5)
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    left = mesh.boundary_node_sets["left"]
    right = mesh.boundary_node_sets["right"]
    bl = left[np.argmin(mesh.nodes[left, 1])]
    pull = 0.03
    fixed = np.concatenate([2 * left, 2 * right, [2 * bl + 1]])
    values = np.concatenate([np.zeros(len(left)), np.full(len(right), pull), [0.0]])
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=fixed, fixed_values=values)
    sol = fem.solve_linear(K, np.zeros(mesh.n_dofs), con)
    assert sol.residual < 1e-10
    exx = pull / 2.0
    assert np.allclose(sol.u[0::2], mesh.nodes[:, 0] * exx, atol=1e-12)
    assert np.allclose(sol.u[1::2], -0.3 * exx * mesh.nodes[:, 1], atol=1e-12)


def test_solve_linear_rank_deficient_reports():
    mesh = _quad_grid(2, 1, 1.0, 1.0)
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    con = fem.build_constraints(mesh.n_dofs)  # nothing fixed: floating body
    with pytest.raises(fem.SolverError):
        fem.solve_linear(K, np.ones(mesh.n_dofs), con)


def test_buckling_rejects_tiny_reduced_system():
    mesh = _quad_grid(1, 1, 1.0, 1.0)
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    G = fem.assemble_geometric_stiffness(qd, np.ones((1, qd.c.shape[1], 3)))
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=np.arange(mesh.n_dofs - 1))
    with pytest.raises(fem.SolverError):
        fem.solve_buckling(K, G, 2, con)


def _column_buckling(nx, ny, Lx, Ly):
    mesh = geometry.mesh_macro_grid(nx, ny, Lx, Ly)
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    bottom = mesh.boundary_node_sets["bottom"]
    top = mesh.boundary_node_sets["top"]
    center = bottom[np.argmin(np.abs(mesh.nodes[bottom, 0] - Lx / 2))]
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=np.concatenate([2 * bottom + 1, [2 * center]]))
    f = np.zeros(mesh.n_dofs)
    f[2 * top + 1] = -1.0 / (len(top) - 1)
    f[2 * top[0] + 1] /= 2
    f[2 * top[-1] + 1] /= 2
    sol = fem.solve_linear(K, f, con)
    sigma = fem.ip_stress(qd, E0, sol.u)
    G = fem.assemble_geometric_stiffness(qd, sigma)
    return fem.solve_buckling(K, G, 4, con, k_factor=sol.factor), K, G


def test_buckling_matches_euler_column():
    sol, K, G = _column_buckling(8, 64, 0.5, 4.0)
    euler = np.pi**2 * 10.0 * 0.5**3 / 12.0 / (4 * 4.0**2)
    lam1 = abs(sol.values[0])
    assert lam1 == pytest.approx(euler, rel=0.05)
    assert np.all(np.diff(np.abs(sol.values)) >= -1e-12)
    # G-normalization of eigenvectors
    for k in range(sol.values.shape[0]):
        phi = sol.vectors[:, k]
        assert abs(abs(phi @ (G @ phi)) - 1.0) < 1e-8
    assert sol.residuals.max() < 1e-6


def test_buckling_empty_spectrum_for_zero_stress():
    mesh = _quad_grid(2, 2, 1.0, 1.0)
    qd = fem.quadrature_data(mesh)
    K = fem.assemble_stiffness(qd, E0)
    G = fem.assemble_geometric_stiffness(qd, np.zeros((mesh.n_elements, qd.c.shape[1], 3)))
    bottom = mesh.boundary_node_sets["bottom"]
    con = fem.build_constraints(mesh.n_dofs, fixed_dofs=np.concatenate([2 * bottom, 2 * bottom + 1]))
    with pytest.raises(fem.SolverError):
        fem.solve_buckling(K, G, 2, con)


def test_geometric_stiffness_scales_with_stress():
    mesh = _quad_grid()
    qd = fem.quadrature_data(mesh)
    rng = np.random.default_rng(0)
    sigma = rng.standard_normal((mesh.n_elements, qd.c.shape[1], 3))
    G1 = fem.assemble_geometric_stiffness(qd, sigma)
    G2 = fem.assemble_geometric_stiffness(qd, 2.5 * sigma)
    assert np.allclose(G2.toarray(), 2.5 * G1.toarray(), atol=1e-14)
    assert np.allclose(G1.toarray(), G1.toarray().T, atol=1e-14)
