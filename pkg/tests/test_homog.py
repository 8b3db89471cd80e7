import numpy as np
import pytest

from latbuck import fem, geometry, homog

E0_MAT = fem.plane_stress_matrix(10.0, 0.3)


def test_unit_stress_reference_axes():
    assert np.allclose(homog.unit_stress(0.0, 123.0), [-1, -1, 0] / np.sqrt(2))
    assert np.allclose(homog.unit_stress(90.0, 0.0), [1, -1, 0] / np.sqrt(2))
    assert np.allclose(homog.unit_stress(90.0, 90.0), [0, 0, 1 / np.sqrt(2)])
    assert np.allclose(homog.unit_stress(180.0, 0.0), [1, 1, 0] / np.sqrt(2))


def test_unit_stress_has_unit_tensor_norm():
    rng = np.random.default_rng(0)
    for theta, phi in rng.uniform([0, 0], [180, 360], size=(25, 2)):
        sig = homog.unit_stress(theta, phi)
        assert homog.stress_norm(sig) == pytest.approx(1.0, abs=1e-14)


def test_stress_norm_weights_shear():
    # the shear component carries weight 2: norm of pure shear tau is tau*sqrt(2)
    assert homog.stress_norm([0.0, 0.0, 3.0]) == pytest.approx(3.0 * np.sqrt(2))
    assert homog.stress_norm([[1, 1, 0], [0, 0, 1]], axis=1) == pytest.approx([np.sqrt(2), np.sqrt(2)])


def test_fold_azimuth():
    assert homog.fold_azimuth(0.0) == 0.0
    assert homog.fold_azimuth(29.0) == 29.0
    assert homog.fold_azimuth(31.0) == 29.0
    assert homog.fold_azimuth(60.0) == 0.0
    assert homog.fold_azimuth(95.0) == 25.0
    assert homog.fold_azimuth(-10.0) == 10.0


def test_sphere_grid_desk_counts():
    grid = homog.sphere_grid(22.5, 15.0)
    assert len(grid) == 24  # 8 inclinations x 3 azimuths
    assert all(0.0 <= p <= 30.0 for _, p in grid)
    assert len(homog.sphere_grid(11.25, 5.0)) == 112  # 16 x 7, paper-scale grid


def test_brillouin_points_nesting():
    for kappa in (1, 2, 3, 4):
        assert len(homog.brillouin_points(kappa)) == kappa**2
    assert set(homog.brillouin_points(1)) <= set(homog.brillouin_points(2))
    assert set(homog.brillouin_points(2)) <= set(homog.brillouin_points(4))
    assert not set(homog.brillouin_points(2)) <= set(homog.brillouin_points(3))


def test_solid_cell_recovers_base_material():
    params = geometry.UnitCellParams(d=1.0, rho=1.0)
    cell = homog.solve_cell_problems(params, 1, 800, E0_MAT)
    EH = homog.homogenized_tensor(cell)
    assert np.max(np.abs(EH - E0_MAT)) < 1e-6
    # homogeneous medium: correctors are pure rigid translation (zero strain)
    assert np.max(np.abs(fem.ip_strain(cell.qd, cell.chi[:, 0]))) < 1e-10


def test_corrector_periodicity_exact(cell_03):
    mesh = cell_03.mesh
    m = mesh.periodic_masters
    s = mesh.periodic_slaves
    assert len(m) > 0
    for j in range(3):
        chi = cell_03.chi[:, j]
        assert np.array_equal(chi[2 * s], chi[2 * m])
        assert np.array_equal(chi[2 * s + 1], chi[2 * m + 1])


def test_flux_and_energy_forms_agree(cell_03):
    # with the correctors in equilibrium, the energy form of the homogenized
    # tensor equals the plain flux average of the corrected stresses
    qd = cell_03.qd
    EH = homog.homogenized_tensor(cell_03)
    flux = np.empty((3, 3))
    for j in range(3):
        eps = homog.UNIT_STRAINS[j][None, None, :] - fem.ip_strain(qd, cell_03.chi[:, j])
        sig = np.einsum("pq,ekq->ekp", cell_03.E0, eps)
        flux[:, j] = np.einsum("ekp,ek->p", sig, qd.c) / cell_03.domain_area
    assert np.max(np.abs(flux - EH)) < 1e-8


def test_corrector_residuals(cell_03):
    con = cell_03.constraints
    for j in range(3):
        f = fem.strain_load_vector(cell_03.qd, cell_03.E0, homog.UNIT_STRAINS[j])
        f_red = con.reduce_vector(f)
        r = con.T.T @ (cell_03.K @ cell_03.chi[:, j]) - f_red
        assert np.linalg.norm(r) / np.linalg.norm(f_red) < 1e-10


@pytest.fixture(scope="module")
def cell_05():
    params = geometry.UnitCellParams(d=1.0, rho=0.5)
    return homog.solve_cell_problems(params, 1, 1200, E0_MAT)


@pytest.mark.parametrize("fixture_name", ["cell_03", "cell_05"])
def test_tensor_isotropy(fixture_name, request):
    cell = request.getfixturevalue(fixture_name)
    EH = homog.homogenized_tensor(cell)
    assert np.allclose(EH, EH.T)
    assert EH[0, 0] == pytest.approx(EH[1, 1], rel=1e-3)
    assert EH[2, 2] == pytest.approx((EH[0, 0] - EH[0, 1]) / 2.0, rel=1e-2)
    # sixfold symmetry forbids normal-shear coupling
    assert abs(EH[0, 2]) < 1e-3 * EH[0, 0]
    assert abs(EH[1, 2]) < 1e-3 * EH[0, 0]
    assert np.linalg.eigvalsh(EH)[0] > 0.0


def test_engineering_constants_at_30pct(cell_03):
    E, nu = homog.isotropic_constants(homog.homogenized_tensor(cell_03))
    assert E == pytest.approx(1.1952, rel=0.05)
    assert nu == pytest.approx(0.35904, rel=0.05)


def test_micro_stress_averages_to_macro(cell_03):
    # the pointwise micro stress integrates back to the applied macro stress
    EH = homog.homogenized_tensor(cell_03)
    sig_bar = np.array([-0.4, 0.9, 0.3])
    s_ip = homog.micro_stress(cell_03, EH, sig_bar)
    mean = np.einsum("ekp,ek->p", s_ip, cell_03.qd.c) / cell_03.domain_area
    assert np.allclose(mean, sig_bar, atol=1e-8 * np.max(np.abs(sig_bar)))


def test_micro_buckling_linearity(cell_03):
    EH = homog.homogenized_tensor(cell_03)
    sig = homog.unit_stress(0.0, 0.0)
    base = homog.micro_buckling_lf(cell_03, EH, sig).lam
    for t in (0.1, 3.0):
        scaled = homog.micro_buckling_lf(cell_03, EH, t * sig).lam
        assert scaled * t == pytest.approx(base, rel=1e-9)


def test_azimuthal_symmetry(cell_03):
    EH = homog.homogenized_tensor(cell_03)

    def lam(theta, phi):
        return homog.micro_buckling_lf(cell_03, EH, homog.unit_stress(theta, phi)).lam

    # a 60 deg azimuthal rotation is a strict symmetry on the shear equator
    assert lam(90.0, 15.0) == pytest.approx(lam(90.0, 75.0), rel=1e-3)
    # elsewhere the 60 deg shift pairs with the flipped inclination
    assert lam(45.0, 75.0) == pytest.approx(lam(135.0, 15.0), rel=1e-3)
    # the 120 deg rotation (lattice rotation by 60 deg) holds everywhere
    assert lam(22.5, 135.0) == pytest.approx(lam(22.5, 15.0), rel=1e-3)


def test_sign_symmetry(cell_03):
    EH = homog.homogenized_tensor(cell_03)
    sig = homog.unit_stress(67.5, 20.0)
    a = homog.micro_buckling_lf(cell_03, EH, sig).lam
    b = homog.micro_buckling_lf(cell_03, EH, -sig).lam
    assert a == pytest.approx(b, rel=1e-9)


@pytest.fixture(scope="module")
def cell_03_k2():
    params = geometry.UnitCellParams(d=1.0, rho=0.3)
    return homog.solve_cell_problems(params, 2, 1200 * 4, E0_MAT)


def test_mode_nesting_kappa(cell_03, cell_03_k2):
    # a 2x2 block contains every 1x1-periodic mode, so its minimum cannot rise
    EH = homog.homogenized_tensor(cell_03)
    sig = homog.unit_stress(45.0, 0.0)
    lam1 = homog.micro_buckling_lf(cell_03, EH, sig).lam
    lam2 = homog.micro_buckling_lf(cell_03_k2, EH, sig).lam
    assert lam2 <= lam1 + 1e-6 * lam1


@pytest.mark.slow
def test_biaxial_anchor_kappa3():
    params = geometry.UnitCellParams(d=1.0, rho=0.3)
    cell = homog.solve_cell_problems(params, 3, 1200 * 9, E0_MAT)
    EH = homog.homogenized_tensor(cell)
    lam = homog.micro_buckling_lf(cell, EH, homog.unit_stress(0.0, 0.0)).lam
    assert lam == pytest.approx(0.0263, rel=0.10)


@pytest.mark.slow
def test_sweep_table_and_worst_case():
    params = geometry.UnitCellParams(d=1.0, rho=0.3)
    sw = homog.sweep(params, kappa_set=(1, 2), theta_step_deg=45.0, phi_step_deg=30.0)
    assert len(sw.entries) == 2 * 4 * 2
    assert not sw.failures
    lam_wc, argmin = sw.worst_case()
    lams = sw.lam_table()
    assert lam_wc == np.min(lams[np.isfinite(lams)])
    assert argmin.lam == lam_wc
    assert argmin.theta_deg <= 90.0  # compressive worst case
    assert np.isfinite(sw.EH).all()
