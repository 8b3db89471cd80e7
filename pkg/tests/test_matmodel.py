import numpy as np
import pytest

from latbuck import matmodel

KNOTS = np.array([0.10, 0.18, 0.25, 0.37, 0.50, 0.60])


def quad(x):
    return 2.0 + 3.0 * np.asarray(x) - 1.7 * np.asarray(x) ** 2


def test_knot_exactness():
    m = matmodel.build_hermite(KNOTS, np.sin(KNOTS * 7.0))
    assert np.max(np.abs(m(KNOTS) - np.sin(KNOTS * 7.0))) < 1e-12


def test_quadratic_reproduction_including_extrapolation():
    m = matmodel.build_hermite(KNOTS, quad(KNOTS))
    # inside, at knots, and beyond both ends the end quadratics continue exactly
    x = np.concatenate([np.linspace(0.02, 0.75, 113), KNOTS])
    assert np.max(np.abs(m(x) - quad(x))) < 1e-13
    v, dv = m.eval(x, derivative=True)
    assert np.max(np.abs(dv - (3.0 - 3.4 * x))) < 1e-12


def test_c1_continuity():
    # both polynomials evaluated exactly at each shared knot
    m = matmodel.build_hermite(KNOTS, np.cos(KNOTS * 9.0))
    for i in range(len(KNOTS) - 2):
        a = m.coefs[i]
        b = m.coefs[i + 1]
        hl = KNOTS[i + 1] - KNOTS[i]
        hr = KNOTS[i + 2] - KNOTS[i + 1]
        assert abs(a.sum() - b[0]) < 1e-10
        dl = (a[1] + 2 * a[2] + 3 * a[3]) / hl
        dr = b[1] / hr
        assert abs(dr - dl) < 1e-10


def test_derivative_matches_fd():
    m = matmodel.build_hermite(KNOTS, np.exp(KNOTS))
    rng = np.random.default_rng(5)
    x = rng.uniform(0.12, 0.58, size=40)
    _, dv = m.eval(x, derivative=True)
    h = 1e-7
    fd = (m(x + h) - m(x - h)) / (2.0 * h)
    assert np.max(np.abs(dv - fd)) < 1e-6


def test_two_point_model_is_linear():
    m = matmodel.build_hermite([0.0, 1.0], [1.0, 3.0])
    assert m(0.25) == pytest.approx(1.5)
    assert m.eval(0.7, derivative=True)[1] == pytest.approx(2.0)


def test_build_hermite_validation():
    with pytest.raises(ValueError):
        matmodel.build_hermite([0.1], [1.0])
    with pytest.raises(ValueError):
        matmodel.build_hermite([0.1, 0.1, 0.2], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        matmodel.build_hermite([0.1, 0.2], [1.0, 2.0, 3.0])


def _toy_model():
    rho = np.array([0.1, 0.2, 0.3, 0.4])
    EH_list = [np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 0.75]]) * r for r in rho]
    lam_rho = np.array([0.1, 0.2, 0.3])
    lam = np.array([0.01, 0.04, 0.09])
    return matmodel.build_material_model(rho, EH_list, lam, meta={"tag": "toy"}, lam_rho_knots=lam_rho)


def test_material_model_tensor_and_ranges():
    m = _toy_model()
    EH = m.tensor(0.2)
    assert np.allclose(EH, EH.T)
    assert EH[0, 0] == pytest.approx(0.4)
    EH2, dEH = m.tensor_with_derivative(0.2)
    assert np.allclose(EH, EH2)
    assert dEH[0, 0] == pytest.approx(2.0, rel=1e-12)  # linear data, exact slope
    assert m.rho_range == (0.1, 0.4)
    assert m.lam_data_max == 0.3
    assert m.lam_wc(0.2) == pytest.approx(0.04)
    assert m.spd_min_eig([0.15, 0.35]) > 0.0


def test_lam_knot_length_validation():
    rho = np.array([0.1, 0.2])
    EH_list = [np.eye(3) * r for r in rho]
    with pytest.raises(ValueError):
        matmodel.build_material_model(rho, EH_list, [0.01, 0.02, 0.03], lam_rho_knots=[0.1, 0.2])


def test_micro_lf_predict_zero_and_scaling():
    m = _toy_model()
    lam0, dr, ds = m.micro_lf_predict(0.2, np.zeros(3))
    assert np.isinf(lam0) and dr == 0.0 and np.all(ds == 0.0)
    sig = np.array([0.3, -0.1, 0.2])
    lam1 = m.micro_lf_predict(0.2, sig)[0]
    lam2 = m.micro_lf_predict(0.2, 2.0 * sig)[0]
    assert lam2 == pytest.approx(lam1 / 2.0, rel=1e-12)
    # norm weights: pure shear of size t has magnitude t*sqrt(2)
    lam_sh = m.micro_lf_predict(0.2, [0.0, 0.0, 0.5])[0]
    assert lam_sh == pytest.approx(m.lam_wc(0.2) / (0.5 * np.sqrt(2.0)), rel=1e-12)


def test_micro_lf_predict_derivatives_fd():
    m = _toy_model()
    sig = np.array([-0.4, 0.25, 0.15])
    lam, dr, ds = m.micro_lf_predict(0.22, sig)
    h = 1e-7
    fd_r = (m.micro_lf_predict(0.22 + h, sig)[0] - m.micro_lf_predict(0.22 - h, sig)[0]) / (2 * h)
    assert dr == pytest.approx(fd_r, rel=1e-6)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (m.micro_lf_predict(0.22, sig + e)[0] - m.micro_lf_predict(0.22, sig - e)[0]) / (2 * h)
        assert ds[k] == pytest.approx(fd, rel=1e-6)


def test_save_load_byte_identical(tmp_path):
    m = _toy_model()
    p1 = tmp_path / "m1.txt"
    p2 = tmp_path / "m2.txt"
    data1 = matmodel.save_model(m, p1)
    loaded = matmodel.load_model(p1)
    data2 = matmodel.save_model(loaded, p2)
    assert data1 == data2
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.meta["tag"] == "toy"
    x = np.linspace(0.05, 0.45, 37)
    for name in m.components:
        assert np.array_equal(m.components[name](x), loaded.components[name](x))


def test_load_rejects_foreign_files(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("E11,0,0.1,0.2,1.0,2.0,1.0,1.0,0.0,0.0\n")
    with pytest.raises(ValueError):
        matmodel.load_model(p)
    p.write_text('# {"format": "something-else"}\n')
    with pytest.raises(ValueError):
        matmodel.load_model(p)


def test_session_model_knot_exactness(model):
    for name, comp in model.components.items():
        assert np.max(np.abs(comp(comp.knots) - comp.values)) < 1e-12


def test_session_model_sane(model):
    lo, hi = model.rho_range
    assert (lo, hi) == (0.1, 1.0)
    assert model.lam_data_max == pytest.approx(0.6)
    assert list(model.meta["stress_norm_weights"]) == [1.0, 1.0, 2.0]
    # stiffer with density, and exact base material at full density
    grid = np.linspace(lo, hi, 19)
    E11 = model.components["E11"](grid)
    assert np.all(np.diff(E11) > 0.0)
    assert model.tensor(1.0)[0, 0] == pytest.approx(10.0 / (1 - 0.09), rel=1e-6)
    assert model.spd_min_eig(grid) > 0.0
    lw, dlw = model.lam_wc(0.35, derivative=True)
    assert 0.0 < lw < 1.0 and dlw > 0.0


@pytest.mark.slow
def test_build_model_tiny_knots():
    m, sweeps = matmodel.build_model(
        tensor_knots=(0.25, 0.35, 1.0),
        lam_knots=(0.25, 0.35),
        kappa_set=(1,),
        theta_step_deg=90.0,
        phi_step_deg=30.0,
        target_elements_per_cell=700,
    )
    assert set(sweeps) == {0.25, 0.35}
    assert len(sweeps[0.25].entries) == 4
    assert m.lam_wc(0.25) == pytest.approx(sweeps[0.25].worst_case()[0])
    assert m.tensor(1.0)[0, 0] == pytest.approx(10.0 / 0.91, rel=1e-9)
    assert m.components["E11"].knots.shape == (3,)
    assert m.components["lam_wc"].knots.shape == (2,)
