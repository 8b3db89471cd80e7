"""Macro analysis layer: density filter, compliance and load-factor
gradients, per-element micro buckling predictions."""

import numpy as np
import pytest

from latbuck import fem, geometry, homog, macro


def mirror_perm(mesh, Lx):
    """Element permutation for the mirror x -> Lx - x."""
    c = mesh.corner_coords().mean(axis=1)
    key = {(round(x, 9), round(y, 9)): i for i, (x, y) in enumerate(c)}
    return np.array([key[(round(Lx - x, 9), round(y, 9))] for x, y in c])


def test_filter_radius_zero_identity():
    mesh = geometry.mesh_macro_grid(3, 3, 1.0, 1.0)
    F = macro.build_density_filter(mesh, 0.0)
    assert np.array_equal(F.toarray(), np.eye(9))


def test_filter_rows_stochastic():
    mesh = geometry.mesh_macro_grid(5, 5, 1.0, 1.0)
    F = macro.build_density_filter(mesh, 0.33)
    assert np.allclose(np.asarray(F.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    # partition of unity: uniform fields pass through unchanged
    assert np.allclose(F @ np.full(25, 0.7), 0.7, atol=1e-12)


def test_filter_spike_cone_kernel():
    # brute-force cone kernel over all element-center pairs
    mesh = geometry.mesh_macro_grid(5, 5, 1.0, 1.0)
    h = 0.2
    radius = 1.6 * h
    centers = mesh.corner_coords().mean(axis=1)
    W = np.zeros((25, 25))
    for i in range(25):
        for j in range(25):
            w = radius - np.hypot(*(centers[j] - centers[i]))
            W[i, j] = max(w, 0.0)
    W /= W.sum(axis=1, keepdims=True)
    F = macro.build_density_filter(mesh, radius).toarray()
    assert np.allclose(F, W, atol=1e-12)
    spike = np.zeros(25)
    spike[12] = 1.0
    ft = F @ spike
    assert ft[12] == pytest.approx(1.6 / (1.6 + 4 * 0.6 + 4 * (1.6 - np.sqrt(2.0))), rel=1e-12)
    assert np.count_nonzero(ft) == 9


def test_zero_load_short_circuit(model):
    prob = macro.make_column_problem(3, 3, 1.0, 1.0, material_mode="model", model=model)
    prob.f[:] = 0.0
    st = macro.analyze(prob, np.full(9, 0.4))
    assert st.compliance == 0.0
    assert np.all(np.isinf(st.lam_macro))
    assert np.all(np.isinf(st.lam_micro))
    assert np.all(st.sigma_avg == 0.0)


def test_analyze_deterministic():
    prob = macro.make_column_problem(4, 6, 1.0, 1.5, material_mode="linear")
    rho = np.linspace(0.3, 0.9, 24)
    a = macro.analyze(prob, rho)
    b = macro.analyze(prob, rho)
    assert np.array_equal(a.lam_macro, b.lam_macro)
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.sigma_avg, b.sigma_avg)
    assert a.compliance == b.compliance


def fd_gradient(func, rho, h=1e-6):
    g = np.empty(rho.size)
    for e in range(rho.size):
        dp = rho.copy()
        dm = rho.copy()
        dp[e] += h
        dm[e] -= h
        g[e] = (func(dp) - func(dm)) / (2.0 * h)
    return g


def test_compliance_grad_fd():
    prob = macro.make_column_problem(3, 3, 1.0, 1.0, material_mode="linear")
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.3, 0.9, 9)
    st = macro.analyze(prob, rho, want_buckling=False)
    g = macro.compliance_grad(prob, st)

    def func(r):
        return macro.analyze(prob, r, want_buckling=False).compliance

    gfd = fd_gradient(func, rho)
    assert np.linalg.norm(g - gfd, np.inf) <= 1e-5 * np.linalg.norm(gfd, np.inf)


def test_compliance_grad_nonpositive(model):
    # adding material never increases compliance at first order
    prob = macro.make_column_problem(4, 4, 1.0, 1.0, material_mode="model", model=model)
    rng = np.random.default_rng(3)
    for _ in range(3):
        rho = rng.uniform(0.15, 0.95, 16)
        st = macro.analyze(prob, rho, want_buckling=False)
        g = macro.compliance_grad(prob, st)
        assert np.all(g <= 1e-12)


def test_compliance_grad_mirror_symmetry():
    # even nx puts the pinned node on the symmetry axis
    prob = macro.make_column_problem(4, 6, 1.0, 1.5, material_mode="linear")
    rho = np.full(24, 0.6)
    st = macro.analyze(prob, rho, want_buckling=False)
    g = macro.compliance_grad(prob, st)
    p = mirror_perm(prob.mesh, 1.0)
    assert np.allclose(g, g[p], rtol=0, atol=1e-9 * np.abs(g).max())


def test_macro_lf_grad_fd():
    prob = macro.make_column_problem(4, 8, 1.0, 2.0, material_mode="linear", n_modes=4)
    rng = np.random.default_rng(7)
    rho = rng.uniform(0.4, 0.9, 32)
    st = macro.analyze(prob, rho)
    lam = st.lam_macro
    assert abs(lam[1] - lam[0]) > 1e-3 * abs(lam[0])  # simple eigenvalue
    g = macro.macro_lf_grad(prob, st, mode_index=0)

    def func(r):
        return macro.analyze(prob, r).lam_macro[0]

    gfd = fd_gradient(func, rho)
    assert np.linalg.norm(g - gfd, np.inf) <= 1e-4 * np.linalg.norm(gfd, np.inf)


def test_macro_lf_scaling_linear_material():
    # E linear in rho: K scales by t while the stress state, and with it G,
    # stays fixed, so Lambda(t rho) = t Lambda(rho) and the gradient is
    # scale-invariant; Euler's identity rho . grad = Lambda follows.
    prob = macro.make_column_problem(3, 5, 1.0, 1.8, material_mode="linear", n_modes=3)
    rng = np.random.default_rng(11)
    rho = rng.uniform(0.4, 0.55, 15)
    t = 1.7
    a = macro.analyze(prob, rho)
    b = macro.analyze(prob, t * rho)
    assert b.lam_macro[0] == pytest.approx(t * a.lam_macro[0], rel=1e-8)
    ga = macro.macro_lf_grad(prob, a, mode_index=0)
    gb = macro.macro_lf_grad(prob, b, mode_index=0)
    assert np.allclose(gb, ga, rtol=1e-6, atol=1e-9 * np.abs(ga).max())
    assert float(rho @ ga) == pytest.approx(a.lam_macro[0], rel=1e-6)


def test_macro_lf_grad_mirror_symmetry():
    prob = macro.make_column_problem(4, 10, 1.0, 2.5, material_mode="linear", n_modes=3)
    rho = np.full(40, 0.5)
    st = macro.analyze(prob, rho)
    assert abs(st.lam_macro[1] - st.lam_macro[0]) > 1e-3 * abs(st.lam_macro[0])
    g = macro.macro_lf_grad(prob, st, mode_index=0)
    p = mirror_perm(prob.mesh, 1.0)
    assert np.allclose(g, g[p], rtol=0, atol=1e-7 * np.abs(g).max())


def test_micro_lf_grad_fd(model):
    prob = macro.make_column_problem(3, 3, 1.0, 1.0, material_mode="model", model=model)
    rng = np.random.default_rng(5)
    rho = rng.uniform(0.2, 0.55, 9)
    st = macro.analyze(prob, rho, want_buckling=False)
    elements = [0, 4, 8]
    rows = macro.micro_lf_grad(prob, st, elements)
    for n, e in enumerate(elements):

        def func(r):
            return macro.analyze(prob, r, want_buckling=False).lam_micro[e]

        gfd = fd_gradient(func, rho)
        err = np.linalg.norm(rows[n] - gfd, np.inf)
        assert err <= 1e-4 * np.linalg.norm(gfd, np.inf)


def test_micro_lf_grad_determinate_column(model):
    # One element wide with nu = 0: the element stress is fixed by
    # equilibrium alone, so the stress-path terms must cancel exactly and the
    # gradient reduces to the direct lam_wc derivative on the diagonal.
    prob = macro.make_column_problem(
        1, 8, 0.5, 4.0, material_mode="linear", model=model, nu=0.0, filter_radius=0.0
    )
    rho = np.full(8, 0.35)
    st = macro.analyze(prob, rho, want_buckling=False)
    p_edge = 1.0 / 0.5
    assert np.allclose(st.sigma_avg, [0.0, -p_edge, 0.0], atol=1e-12)
    s = homog.stress_norm(st.sigma_avg[3])
    _, dlw = model.lam_wc(0.35, derivative=True)
    rows = macro.micro_lf_grad(prob, st, [3, 4])
    for n, e in enumerate([3, 4]):
        diag = rows[n, e]
        off = np.delete(rows[n], e)
        assert diag == pytest.approx(dlw / s, rel=1e-9)
        assert np.abs(off).max() <= 1e-9 * abs(diag)


def test_load_linearity(model):
    # doubling the load halves every load factor and its gradient
    kw = dict(material_mode="model", model=model)
    p1 = macro.make_column_problem(3, 4, 1.0, 1.5, total_load=1.0, **kw)
    p2 = macro.make_column_problem(3, 4, 1.0, 1.5, total_load=2.0, **kw)
    rng = np.random.default_rng(2)
    rho = rng.uniform(0.25, 0.5, 12)
    s1 = macro.analyze(p1, rho)
    s2 = macro.analyze(p2, rho)
    assert np.allclose(s2.u, 2.0 * s1.u, rtol=1e-12)
    assert s2.compliance == pytest.approx(4.0 * s1.compliance, rel=1e-12)
    assert np.allclose(s2.lam_micro, 0.5 * s1.lam_micro, rtol=1e-12)
    assert np.allclose(s2.lam_macro, 0.5 * s1.lam_macro, rtol=1e-8)
    e = [5]
    g1 = macro.micro_lf_grad(p1, s1, e)
    g2 = macro.micro_lf_grad(p2, s2, e)
    assert np.allclose(g2, 0.5 * g1, rtol=1e-10)


def test_extrapolation_counter(model):
    prob = macro.make_column_problem(2, 2, 1.0, 1.0, material_mode="model", model=model)
    st = macro.analyze(prob, np.full(4, 0.95), want_buckling=False)
    assert st.n_extrapolated == 4
    st = macro.analyze(prob, np.full(4, 0.5), want_buckling=False)
    assert st.n_extrapolated == 0
