import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latbuck import geometry, homog
from latbuck.mesh import check_periodic_pairs, element_areas


def test_density_bounds_default_radius():
    lo, hi = geometry.density_bounds(0.05)
    assert 0.0 < lo < 0.02
    assert 0.97 < hi < 1.0


@given(st.floats(0.05, 0.95), st.floats(0.01, 0.08))
@settings(max_examples=60, deadline=None)
def test_width_density_round_trip(rho, r_rel):
    lo, hi = geometry.density_bounds(r_rel)
    rho = lo + rho * (hi - lo)
    w = geometry.strut_width_for_volume(rho, r_rel)
    assert geometry.density_from_width(w, r_rel) == pytest.approx(rho, abs=1e-8)


def test_width_monotone_in_density():
    ws = [geometry.strut_width_for_volume(r, 0.05) for r in np.linspace(0.05, 0.9, 20)]
    assert np.all(np.diff(ws) > 0)


def test_infeasible_density_raises():
    with pytest.raises(geometry.InfeasibleDensity):
        geometry.strut_width_for_volume(0.001, 0.05)
    with pytest.raises(geometry.InfeasibleDensity):
        geometry.strut_width_for_volume(0.999, 0.05)


@pytest.mark.parametrize("rho", [0.15, 0.3, 0.6])
def test_unit_cell_area_fraction(rho):
    params = geometry.UnitCellParams(d=1.0, rho=rho, r_rel=0.05)
    mesh = geometry.mesh_unit_cell(params, kappa=1, target_elements=1200)
    frac = float(np.sum(element_areas(mesh))) / params.cell_area
    assert frac == pytest.approx(rho, rel=1e-3)


def test_unit_cell_positive_areas_and_periodicity():
    params = geometry.UnitCellParams(d=1.0, rho=0.3, r_rel=0.05)
    mesh = geometry.mesh_unit_cell(params, kappa=2, target_elements=4000)
    assert np.all(element_areas(mesh) > 0)
    assert mesh.periodic_masters.size > 0
    assert check_periodic_pairs(mesh)
    # every slave offset is an integer combination of the scaled lattice vectors
    lat = 2.0 * params.d * np.column_stack([geometry.R1, geometry.R2])
    coeff = np.linalg.solve(lat, mesh.periodic_shifts.T).T
    assert np.allclose(coeff, np.round(coeff), atol=1e-9)


def test_solid_cell_has_no_voids():
    params = geometry.UnitCellParams(d=1.0, rho=0.995, r_rel=0.05)
    mesh = geometry.mesh_unit_cell(params, kappa=1, target_elements=800)
    frac = float(np.sum(element_areas(mesh))) / params.cell_area
    assert frac == pytest.approx(1.0, rel=1e-9)


def test_macro_grid_shape_and_sets():
    mesh = geometry.mesh_macro_grid(4, 7, 2.0, 3.5)
    assert mesh.n_elements == 28
    assert mesh.element_type == "quad4"
    assert len(mesh.boundary_node_sets["bottom"]) == 5
    assert len(mesh.boundary_node_sets["left"]) == 8
    assert np.allclose(element_areas(mesh), (2.0 / 4) * (3.5 / 7))


def test_density_field_bilinear_constant_and_clamp():
    field = geometry.DensityField(3, 3, 1.0, 1.0, np.full(9, 0.4))
    pts = np.array([[0.5, 0.5], [0.0, 0.0], [1.0, 1.0], [-5.0, 2.0]])
    assert np.allclose(field.bilinear(pts), 0.4)


def test_density_field_bilinear_linear_ramp():
    # densities linear in x are reproduced exactly between cell centers
    nx, ny = 5, 3
    cx = (np.arange(nx) + 0.5) / nx
    rho = np.tile(0.2 + 0.5 * cx, ny)
    field = geometry.DensityField(nx, ny, 1.0, 1.0, rho)
    pts = np.column_stack([np.linspace(cx[0], cx[-1], 11), np.full(11, 0.5)])
    assert np.allclose(field.bilinear(pts), 0.2 + 0.5 * pts[:, 0], atol=1e-12)


@pytest.mark.slow
def test_dehomogenize_area_and_conformity():
    rng = np.random.default_rng(3)
    rho = np.clip(0.45 + 0.25 * rng.standard_normal(6 * 12), 0.15, 0.9)
    field = geometry.DensityField(6, 12, 1.0, 2.0, rho)
    mesh, info = geometry.dehomogenize(field, 6, 20000)
    areas = element_areas(mesh)
    assert np.all(areas > 0)
    assert info["rel_area_error"] <= 1e-5
    achieved = float(np.sum(areas))
    assert achieved == pytest.approx(info["target_area"], rel=2e-5)
    # cell-center sampling keeps the global volume near the field mean
    assert achieved == pytest.approx(float(np.mean(rho)) * 2.0, rel=0.05)
    # tri6 midside nodes sit midway between their corners
    for a, b, m in ((0, 1, 3), (1, 2, 4), (2, 0, 5)):
        gap = mesh.nodes[mesh.elements[:, m]] - 0.5 * (
            mesh.nodes[mesh.elements[:, a]] + mesh.nodes[mesh.elements[:, b]]
        )
        assert np.max(np.abs(gap)) < 1e-12


def test_dehomogenize_solid_region_kept_solid():
    # densities beyond the fillet limit saturate to fully solid cells
    field = geometry.DensityField(2, 2, 1.0, 1.0, np.full(4, 0.995))
    mesh, info = geometry.dehomogenize(field, 2, 3000)
    assert info["n_cells"] == 0  # every covering cell beyond the lattice limit
    assert float(np.sum(element_areas(mesh))) == pytest.approx(1.0, rel=1e-9)
