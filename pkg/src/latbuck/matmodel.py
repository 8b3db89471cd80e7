"""Interpolated material model over relative density.

Each scalar component (six homogenized tensor entries and the worst-case
buckling load factor) is a piecewise polynomial over the density knots:
cubic Hermite segments in the interior, quadratic end segments, with knot
slopes from nonuniform three-point central differences. The first and last
segments use only the slope at their interior knot, so the construction
needs no one-sided slope estimates. Evaluation outside the knot range
extrapolates the adjacent end quadratic.

A model file is line-oriented: a '#'-prefixed JSON header followed by CSV
segment rows (component, segment, x0, x1, v0, v1, a0, a1, a2, a3) with
full-precision floats, so identical inputs rebuild byte-identical files.
"""

import io
import json
from dataclasses import dataclass

import numpy as np

from . import homog

TENSOR_COMPONENTS = ["E11", "E12", "E13", "E22", "E23", "E33"]
_TENSOR_INDEX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass(frozen=True)
class HermiteModel:
    """Piecewise polynomial v(x) on segments [x_i, x_{i+1}].

    coefs: (n_segments, 4) in the local variable t = (x - x_i) / h_i.
    """

    knots: np.ndarray
    values: np.ndarray
    coefs: np.ndarray

    def eval(self, x, derivative=False):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xf = np.atleast_1d(x)
        i = np.clip(np.searchsorted(self.knots, xf, side="right") - 1, 0, len(self.knots) - 2)
        h = self.knots[i + 1] - self.knots[i]
        t = (xf - self.knots[i]) / h
        a = self.coefs[i]
        v = ((a[:, 3] * t + a[:, 2]) * t + a[:, 1]) * t + a[:, 0]
        if not derivative:
            return float(v[0]) if scalar else v
        dv = ((3.0 * a[:, 3] * t + 2.0 * a[:, 2]) * t + a[:, 1]) / h
        if scalar:
            return float(v[0]), float(dv[0])
        return v, dv

    def __call__(self, x):
        return self.eval(x)


def _central_slopes(x, v):
    """Interior-knot slopes by nonuniform 3-point central differences,
    exact for quadratics on any grid."""
    m = np.zeros_like(v)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    m[1:-1] = (v[2:] * hm**2 + v[1:-1] * (hp**2 - hm**2) - v[:-2] * hp**2) / (hm * hp * (hm + hp))
    return m


def build_hermite(x, v):
    """Fit the piecewise model to samples (x, v); x strictly increasing."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim != 1 or x.size < 2 or v.shape != x.shape:
        raise ValueError("need at least two samples of matching shape")
    if np.any(np.diff(x) <= 0):
        raise ValueError("knots must be strictly increasing")
    n = x.size
    coefs = np.zeros((n - 1, 4))
    if n == 2:
        coefs[0, 0] = v[0]
        coefs[0, 1] = v[1] - v[0]
        return HermiteModel(knots=x, values=v, coefs=coefs)
    m = _central_slopes(x, v)
    for i in range(n - 1):
        h = x[i + 1] - x[i]
        dv = v[i + 1] - v[i]
        if i == 0:
            coefs[i] = [v[0], 2.0 * dv - h * m[1], h * m[1] - dv, 0.0]
        elif i == n - 2:
            coefs[i] = [v[i], h * m[i], dv - h * m[i], 0.0]
        else:
            coefs[i] = [
                v[i],
                h * m[i],
                3.0 * dv - h * (2.0 * m[i] + m[i + 1]),
                -2.0 * dv + h * (m[i] + m[i + 1]),
            ]
    return HermiteModel(knots=x, values=v, coefs=coefs)


@dataclass(frozen=True)
class MaterialModel:
    """Density-parametrized homogenized material and worst-case load factor.

    components: name -> HermiteModel for the six tensor entries and lam_wc.
    meta: provenance of the build (knots, sweep grid, kappa set, ...).
    """

    components: dict
    meta: dict

    def tensor(self, rho):
        EH = np.empty((3, 3))
        for name, (i, j) in zip(TENSOR_COMPONENTS, _TENSOR_INDEX):
            EH[i, j] = EH[j, i] = self.components[name](rho)
        return EH

    def tensor_with_derivative(self, rho):
        EH = np.empty((3, 3))
        dEH = np.empty((3, 3))
        for name, (i, j) in zip(TENSOR_COMPONENTS, _TENSOR_INDEX):
            v, dv = self.components[name].eval(rho, derivative=True)
            EH[i, j] = EH[j, i] = v
            dEH[i, j] = dEH[j, i] = dv
        return EH, dEH

    def lam_wc(self, rho, derivative=False):
        return self.components["lam_wc"].eval(rho, derivative=derivative)

    def micro_lf_predict(self, rho, sigma_bar):
        """Predicted microscale load factor lam_wc(rho) / |sigma| together
        with its derivatives w.r.t. rho and sigma.

        Zero stress carries no buckling risk: returns (inf, 0, 0).
        """
        s = homog.stress_norm(sigma_bar)
        lw, dlw = self.lam_wc(rho, derivative=True)
        if s < 1e-300:
            return np.inf, 0.0, np.zeros(3)
        lam = lw / s
        dlam_drho = dlw / s
        wsig = homog.STRESS_NORM_WEIGHTS * np.asarray(sigma_bar, dtype=float)
        dlam_dsigma = -lw * wsig / s**3
        return lam, dlam_drho, dlam_dsigma

    def spd_min_eig(self, rho_grid):
        """Smallest tensor eigenvalue over a density grid."""
        worst = np.inf
        for rho in rho_grid:
            w = np.linalg.eigvalsh(self.tensor(rho))
            worst = min(worst, float(w[0]))
        return worst

    @property
    def rho_range(self):
        k = self.components["E11"].knots
        return float(k[0]), float(k[-1])

    @property
    def lam_data_max(self):
        """Last density with measured buckling data; beyond it lam_wc is the
        extrapolated end quadratic."""
        return float(self.components["lam_wc"].knots[-1])


def build_material_model(rho_knots, EH_list, lam_wc_list, meta=None, lam_rho_knots=None):
    """Assemble the interpolated model. The load-factor curve may live on its
    own (typically shorter) knot set: eigensolves turn unreliable at high
    density where single-element artifacts dominate, so buckling data stops
    early and the tensor grid keeps going."""
    rho = np.asarray(rho_knots, dtype=float)
    comps = {}
    for name, (i, j) in zip(TENSOR_COMPONENTS, _TENSOR_INDEX):
        comps[name] = build_hermite(rho, np.array([EH[i, j] for EH in EH_list]))
    lam_rho = rho if lam_rho_knots is None else np.asarray(lam_rho_knots, dtype=float)
    lam_vals = np.asarray(lam_wc_list, dtype=float)
    if lam_rho.shape != lam_vals.shape:
        raise ValueError("load-factor knots and values differ in length")
    comps["lam_wc"] = build_hermite(lam_rho, lam_vals)
    return MaterialModel(components=comps, meta=dict(meta or {}))


def compute_model_data(
    tensor_knots,
    lam_knots,
    kappa_set=(1, 2, 3),
    theta_step_deg=22.5,
    phi_step_deg=15.0,
    target_elements_per_cell=1200,
    E0=10.0,
    nu=0.3,
    r_rel=None,
    n_modes=3,
    progress=None,
):
    """Run the cell problems and stress-sphere sweeps backing a model.

    Tensor entries come from plain cell problems at every tensor knot (cheap);
    worst-case load factors come from full sweeps at the (typically shorter)
    lam knot set. Returns (EH_list, lam_wc_list, sweeps dict keyed by rho)."""
    from . import fem, geometry

    if r_rel is None:
        r_rel = geometry.DEFAULT_R_REL
    E0_mat = fem.plane_stress_matrix(E0, nu)
    lam_knots = np.asarray(lam_knots, dtype=float)
    EH_list = []
    lam_wc = {}
    sweeps = {}
    for rho in lam_knots:
        params = geometry.UnitCellParams(d=1.0, rho=float(rho), r_rel=r_rel)
        sw = homog.sweep(
            params,
            kappa_set=kappa_set,
            theta_step_deg=theta_step_deg,
            phi_step_deg=phi_step_deg,
            target_elements_per_cell=target_elements_per_cell,
            n_modes=n_modes,
            E0_mat=E0_mat,
        )
        lam_wc[float(rho)] = sw.worst_case()[0]
        sweeps[float(rho)] = sw
        if progress is not None:
            progress("sweep", float(rho), lam_wc[float(rho)])
    for rho in tensor_knots:
        if float(rho) in sweeps:
            EH_list.append(sweeps[float(rho)].EH)
        elif float(rho) >= 1.0:
            EH_list.append(E0_mat.copy())
        else:
            params = geometry.UnitCellParams(d=1.0, rho=float(rho), r_rel=r_rel)
            cell = homog.solve_cell_problems(params, 1, target_elements_per_cell, E0_mat)
            EH_list.append(homog.homogenized_tensor(cell))
        if progress is not None:
            progress("tensor", float(rho), EH_list[-1][0, 0])
    return EH_list, [lam_wc[float(r)] for r in lam_knots], sweeps


DEFAULT_TENSOR_KNOTS = tuple(np.round(np.arange(0.10, 1.0001, 0.05), 10))
DEFAULT_LAM_KNOTS = tuple(np.round(np.arange(0.10, 0.6001, 0.05), 10))


def build_model(
    tensor_knots=DEFAULT_TENSOR_KNOTS,
    lam_knots=DEFAULT_LAM_KNOTS,
    meta=None,
    **kwargs,
):
    """One-call model build with the default desk-scale sweep settings."""
    EH_list, lam_list, sweeps = compute_model_data(tensor_knots, lam_knots, **kwargs)
    info = {
        "tensor_knots": [float(r) for r in tensor_knots],
        "lam_knots": [float(r) for r in lam_knots],
        "stress_norm_weights": [float(w) for w in homog.STRESS_NORM_WEIGHTS],
    }
    info.update(meta or {})
    model = build_material_model(tensor_knots, EH_list, lam_list, meta=info, lam_rho_knots=lam_knots)
    return model, sweeps


def save_model(model, path):
    buf = io.StringIO()
    header = {
        "format": "lattice-material-model-v1",
        "columns": ["component", "segment", "x0", "x1", "v0", "v1", "a0", "a1", "a2", "a3"],
        "components": {name: int(m.coefs.shape[0]) for name, m in sorted(model.components.items())},
        "meta": model.meta,
    }
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    for name in sorted(model.components):
        m = model.components[name]
        for s in range(m.coefs.shape[0]):
            row = [m.knots[s], m.knots[s + 1], m.values[s], m.values[s + 1], *m.coefs[s]]
            buf.write(name + "," + str(s) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    data = buf.getvalue()
    with open(path, "w") as fh:
        fh.write(data)
    return data


def load_model(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing model header")
    header = json.loads(lines[0][1:])
    if header.get("format") != "lattice-material-model-v1":
        raise ValueError("unknown model format")
    rows = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        name = parts[0]
        seg = int(parts[1])
        rows.setdefault(name, {})[seg] = [float(p) for p in parts[2:]]
    comps = {}
    for name, segs in rows.items():
        n_seg = len(segs)
        knots = np.empty(n_seg + 1)
        values = np.empty(n_seg + 1)
        coefs = np.empty((n_seg, 4))
        for s in range(n_seg):
            x0, x1, v0, v1, a0, a1, a2, a3 = segs[s]
            knots[s] = x0
            knots[s + 1] = x1
            values[s] = v0
            values[s + 1] = v1
            coefs[s] = [a0, a1, a2, a3]
        comps[name] = HermiteModel(knots=knots, values=values, coefs=coefs)
    return MaterialModel(components=comps, meta=header.get("meta", {}))
