"""Batch pipeline driver.

Each subcommand maps to one pipeline stage, reads a JSON config merged over
presets, writes its outputs plus a manifest of input/output content hashes,
and skips the work entirely when the manifest already matches (delete the
outputs or pass --force to recompute). All tables use repr-exact floats so
identical inputs reproduce identical bytes.

Exit codes: 0 success, 2 validation/config/dependency failure, 3 solver
failure.
"""

import copy
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import click
import jsonschema
import numpy as np

from . import __version__, fem, geometry, homog, macro, matmodel, mesh as meshmod, opt, plots, validate

EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def _knots(lo, hi, step):
    return [float(v) for v in np.round(np.arange(lo, hi + step / 2, step), 10)]


DESK_DEFAULTS = {
    "material": {"E0": 10.0, "nu": 0.3},
    "cell": {"r_rel": 0.05, "target_elements": 1200},
    "sweep": {"theta_step_deg": 22.5, "phi_step_deg": 15.0, "kappa_set": [1, 2, 3], "n_modes": 3},
    "model": {
        "tensor_knots": _knots(0.10, 1.00, 0.05),
        "lam_knots": _knots(0.10, 0.60, 0.05),
        "filename": "model.txt",
    },
    "column": {
        "nx": 10,
        "ny": 52,
        "Lx": 1.0,
        "Ly": 5.2,
        "total_load": 1.0,
        "volume_fraction": 0.5,
        "rho_min": 0.1,
        "filter_radius_rel": 1.6,
    },
    "euler": {"nx": 25, "ny": 130},
    "opt": {
        "variant": "C",
        "n_points": 11,
        "max_iter": 150,
        "move": 0.05,
        "n_macro_modes": 6,
        "micro_margin": 0.2,
        "compliance_band": 1e-4,
        "c0_factor": 1.05,
    },
    "dehom": {"n_cells_x": 12, "target_elements": 200000, "n_modes_scan": 60},
    "validate": {"kappa_set": [1, 2, 3], "quant_step": 0.01, "max_elements": 30, "seed": 0},
    "bowtie": {"nx": 40, "ny": 20, "waist": 0.5, "rho": 0.5, "per_type": 6},
}

# full-scale settings from the source experiments; not sized for a laptop
PAPER_OVERRIDES = {
    "cell": {"target_elements": 1000000},
    "sweep": {"theta_step_deg": 11.25, "phi_step_deg": 5.0, "kappa_set": [4, 5, 6, 7]},
    "column": {"nx": 25, "ny": 130},
    "opt": {"n_points": 51, "max_iter": 300},
    "dehom": {"n_cells_x": 20, "target_elements": 800000, "n_modes_scan": 80},
    "validate": {"kappa_set": [4, 5, 6, 7], "max_elements": 200},
}


def _section_schema(defaults):
    props = {}
    for key, val in defaults.items():
        if isinstance(val, bool):
            props[key] = {"type": "boolean"}
        elif isinstance(val, (int, float)):
            props[key] = {"type": "number"}
        elif isinstance(val, str):
            props[key] = {"type": "string"}
        elif isinstance(val, list):
            props[key] = {"type": "array", "items": {"type": "number"}}
        else:
            raise TypeError(key)
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = {
    "type": "object",
    "properties": {name: _section_schema(sec) for name, sec in DESK_DEFAULTS.items()},
    "additionalProperties": False,
}


def load_config(config_path, desk):
    cfg = copy.deepcopy(DESK_DEFAULTS)
    if not desk:
        for name, sec in PAPER_OVERRIDES.items():
            cfg[name].update(sec)
    if config_path:
        with open(config_path) as fh:
            user = json.load(fh)
        try:
            jsonschema.validate(user, CONFIG_SCHEMA)
        except jsonschema.ValidationError as err:
            raise click.ClickException(f"config invalid at {'/'.join(str(p) for p in err.absolute_path)}: {err.message}")
        for name, sec in user.items():
            cfg[name].update(sec)
    return cfg


def n_workers(flag):
    if flag is not None:
        return max(1, flag)
    return max(1, int(os.environ.get("LATBUCK_WORKERS", "1")))


# ---------------------------------------------------------------------------
# deterministic output helpers


def atomic_write(path, data):
    tmp = path + ".tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def fmt_cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_cell(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _hash_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Stage:
    """Output directory + manifest handling for one command invocation.

    The manifest records the input key (config subset + upstream file hashes)
    and the hash of every output. A rerun with the same key and intact
    outputs is a no-op.
    """

    def __init__(self, out_dir, command, inputs, force=False):
        self.dir = out_dir
        self.command = command
        self.key = _hash_bytes(_canonical(inputs).encode())
        self.inputs = inputs
        self.force = force
        self.files = []
        self.t0 = time.perf_counter()
        os.makedirs(out_dir, exist_ok=True)

    @property
    def manifest_path(self):
        return os.path.join(self.dir, f"{self.command}.manifest.json")

    def cached(self):
        if self.force or not os.path.exists(self.manifest_path):
            return False
        try:
            with open(self.manifest_path) as fh:
                man = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return False
        if man.get("input_key") != self.key:
            return False
        for rel, digest in man.get("outputs", {}).items():
            path = os.path.join(self.dir, rel)
            if not os.path.exists(path) or _hash_file(path) != digest:
                return False
        click.echo(f"[{self.command}] cache hit, outputs up to date in {self.dir}")
        return True

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.dir, name)

    def finish(self, extra=None):
        man = {
            "command": self.command,
            "input_key": self.key,
            "inputs": self.inputs,
            "outputs": {rel: _hash_file(os.path.join(self.dir, rel)) for rel in sorted(self.files)},
            "versions": {
                "package": __version__,
                "python": ".".join(map(str, sys.version_info[:3])),
                "numpy": np.__version__,
            },
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
        }
        if extra:
            man.update(extra)
        atomic_write(self.manifest_path, json.dumps(man, indent=2, sort_keys=True) + "\n")
        click.echo(f"[{self.command}] wrote {len(self.files)} files to {self.dir} ({man['wall_time_s']}s)")


def require_file(path, producer):
    if not os.path.exists(path):
        click.echo(f"error: missing {path}; run 'latbuck {producer}' first", err=True)
        sys.exit(EXIT_VALIDATION)
    return path


def common_options(fn):
    for deco in (
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON config; keys override the preset"),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default="runs", show_default=True),
        click.option("--workers", type=int, default=None, help="worker pool size (or env LATBUCK_WORKERS)"),
        click.option("--desk/--paper", "desk", default=True, help="desk-scale or full-scale presets"),
        click.option("--force", is_flag=True, help="recompute even when the manifest is current"),
    ):
        fn = deco(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Two-scale lattice sizing pipeline."""


# ---------------------------------------------------------------------------


@main.command("euler-check")
@common_options
def cmd_euler_check(config_path, out_dir, workers, desk, force):
    """Closed-form vs numeric critical load of the solid column."""
    cfg = load_config(config_path, desk)
    inputs = {"command": "euler-check", "euler": cfg["euler"], "material": cfg["material"], "column": cfg["column"]}
    stage = Stage(out_dir, "euler-check", inputs, force)
    if stage.cached():
        return
    col = cfg["column"]
    res, state, prob = validate.euler_check(
        nx=int(cfg["euler"]["nx"]),
        ny=int(cfg["euler"]["ny"]),
        Lx=col["Lx"],
        Ly=col["Ly"],
        E0=cfg["material"]["E0"],
        nu=cfg["material"]["nu"],
        return_state=True,
    )
    write_json(stage.path("euler_check.json"), {"analytic_N": res.analytic, "numeric_N": res.numeric, "rel_gap": res.rel_gap})
    write_csv(stage.path("euler_check.csv"), ["analytic_N", "numeric_N", "rel_gap"], [[res.analytic, res.numeric, res.rel_gap]])
    plots.save_mode(prob.mesh, state.modes.vectors[:, 0], stage.path("euler_mode.png"),
                    title=f"first mode, load factor {res.numeric:.4f}")
    stage.finish({"rel_gap": res.rel_gap})
    click.echo(f"analytic {res.analytic:.6f} N, numeric {res.numeric:.6f} N, gap {res.rel_gap * 100:.2f}%")


@main.command("cell-mesh")
@click.option("--rho", type=float, default=0.3, show_default=True)
@click.option("--kappa", type=int, default=1, show_default=True)
@common_options
def cmd_cell_mesh(rho, kappa, config_path, out_dir, workers, desk, force):
    """Mesh one kappa x kappa RVE and report mesh quality."""
    cfg = load_config(config_path, desk)
    inputs = {"command": "cell-mesh", "rho": rho, "kappa": kappa, "cell": cfg["cell"]}
    stage = Stage(out_dir, "cell-mesh", inputs, force)
    if stage.cached():
        return
    params = geometry.UnitCellParams(d=1.0, rho=rho, r_rel=cfg["cell"]["r_rel"])
    m = geometry.mesh_unit_cell(params, kappa=kappa, target_elements=int(cfg["cell"]["target_elements"]) * kappa**2)
    areas = meshmod.element_areas(m)
    tag = f"rho{rho:g}_k{kappa}"
    meshmod.write_vtk(m, stage.path(f"cell_{tag}.vtk"), title=f"unit cell {tag}")
    write_json(
        stage.path(f"cell_{tag}.json"),
        {
            "rho": rho,
            "kappa": kappa,
            "n_nodes": m.n_nodes,
            "n_elements": m.n_elements,
            "n_periodic_pairs": int(m.periodic_masters.size),
            "area_fraction": float(np.sum(areas)) / (geometry.SQRT3 / 2.0 * kappa**2),
            "min_area": float(areas.min()),
        },
    )
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5), constrained_layout=True)
    ax.triplot(m.nodes[:, 0], m.nodes[:, 1], m.elements[:, :3], lw=0.2)
    ax.set_aspect("equal")
    fig.savefig(stage.path(f"cell_{tag}.png"), dpi=160)
    plt.close(fig)
    stage.finish({"n_elements": m.n_elements})


@main.command("homogenize")
@click.option("--rho", type=float, default=0.3, show_default=True)
@common_options
def cmd_homogenize(rho, config_path, out_dir, workers, desk, force):
    """Homogenized elasticity tensor at one density."""
    cfg = load_config(config_path, desk)
    inputs = {"command": "homogenize", "rho": rho, "cell": cfg["cell"], "material": cfg["material"]}
    stage = Stage(out_dir, "homogenize", inputs, force)
    if stage.cached():
        return
    params = geometry.UnitCellParams(d=1.0, rho=rho, r_rel=cfg["cell"]["r_rel"])
    E0_mat = fem.plane_stress_matrix(cfg["material"]["E0"], cfg["material"]["nu"])
    try:
        cell = homog.solve_cell_problems(params, 1, int(cfg["cell"]["target_elements"]), E0_mat)
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    EH = homog.homogenized_tensor(cell)
    E, nu = homog.isotropic_constants(EH)
    write_csv(
        stage.path(f"tensor_rho{rho:g}.csv"),
        ["E11", "E12", "E13", "E22", "E23", "E33"],
        [[EH[0, 0], EH[0, 1], EH[0, 2], EH[1, 1], EH[1, 2], EH[2, 2]]],
    )
    write_json(stage.path(f"homogenize_rho{rho:g}.json"), {"rho": rho, "E": E, "nu": nu})
    stage.finish()
    click.echo(f"rho={rho:g}: E={E:.6g} Pa, nu={nu:.5g}")


def _sweep_once(task):
    """Worker for one density sweep; returns plain arrays for pickling."""
    cfg = task["cfg"]
    params = geometry.UnitCellParams(d=1.0, rho=task["rho"], r_rel=cfg["cell"]["r_rel"])
    sw = homog.sweep(
        params,
        kappa_set=tuple(int(k) for k in task["kappa_set"]),
        theta_step_deg=cfg["sweep"]["theta_step_deg"],
        phi_step_deg=cfg["sweep"]["phi_step_deg"],
        target_elements_per_cell=int(cfg["cell"]["target_elements"]),
        n_modes=int(cfg["sweep"]["n_modes"]),
        E0_mat=fem.plane_stress_matrix(cfg["material"]["E0"], cfg["material"]["nu"]),
    )
    rows = [[sw.rho, en.kappa, en.theta_deg, en.phi_deg, en.sigma[0], en.sigma[1], en.sigma[2], en.lam] for en in sw.entries]
    return {"rho": task["rho"], "rows": rows, "EH": sw.EH, "n_failures": len(sw.failures)}


SWEEP_HEADER = ["rho", "kappa", "theta_deg", "phi_deg", "sigma_xx", "sigma_yy", "sigma_xy", "lam"]


@main.command("sweep")
@click.option("--rho", type=float, default=0.3, show_default=True)
@click.option("--kappa", "kappa_list", default=None, help="comma list, e.g. 1,2,3 (default: config)")
@common_options
def cmd_sweep(rho, kappa_list, config_path, out_dir, workers, desk, force):
    """Stress-sphere buckling sweep at one density."""
    cfg = load_config(config_path, desk)
    kset = [int(k) for k in kappa_list.split(",")] if kappa_list else list(cfg["sweep"]["kappa_set"])
    inputs = {"command": "sweep", "rho": rho, "kappa_set": kset, "cell": cfg["cell"], "sweep": cfg["sweep"], "material": cfg["material"]}
    stage = Stage(out_dir, "sweep", inputs, force)
    if stage.cached():
        return
    try:
        res = _sweep_once({"cfg": cfg, "rho": rho, "kappa_set": kset})
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    write_csv(stage.path(f"sweep_rho{rho:g}.csv"), SWEEP_HEADER, res["rows"])
    sw = homog.SweepResult(
        rho=rho,
        entries=[
            homog.SweepEntry(rho=r[0], kappa=int(r[1]), theta_deg=r[2], phi_deg=r[3],
                             sigma=np.array(r[4:7]), lam=r[7], n_modes_filtered=0)
            for r in res["rows"]
        ],
        EH=res["EH"],
        failures=[],
    )
    plots.save_sweep_polar(sw, stage.path(f"sweep_rho{rho:g}.png"))
    lam_wc, worst = sw.worst_case()
    stage.finish({"n_entries": len(res["rows"]), "lam_wc": lam_wc})
    click.echo(f"{len(res['rows'])} entries; worst case {lam_wc:.6g} at incl {worst.theta_deg:g}, azim {worst.phi_deg:g}, rep {worst.kappa}")


@main.command("model-build")
@common_options
def cmd_model_build(config_path, out_dir, workers, desk, force):
    """Sweep all densities and fit the interpolated material model."""
    cfg = load_config(config_path, desk)
    inputs = {"command": "model-build", "cell": cfg["cell"], "sweep": cfg["sweep"], "model": cfg["model"], "material": cfg["material"]}
    stage = Stage(out_dir, "model-build", inputs, force)
    if stage.cached():
        return
    lam_knots = cfg["model"]["lam_knots"]
    tensor_knots = cfg["model"]["tensor_knots"]
    tasks = [{"cfg": cfg, "rho": float(r), "kappa_set": cfg["sweep"]["kappa_set"]} for r in lam_knots]
    nw = n_workers(workers)
    try:
        if nw > 1:
            with ProcessPoolExecutor(max_workers=nw) as pool:
                results = list(pool.map(_sweep_once, tasks))
        else:
            results = []
            for task in tasks:
                results.append(_sweep_once(task))
                click.echo(f"  sweep rho={task['rho']:.2f} done")
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    results.sort(key=lambda r: r["rho"])
    by_rho = {r["rho"]: r for r in results}
    lam_wc_list = []
    all_rows = []
    for r in results:
        lams = [row[7] for row in r["rows"] if np.isfinite(row[7])]
        lam_wc_list.append(min(lams))
        all_rows.extend(r["rows"])

    E0_mat = fem.plane_stress_matrix(cfg["material"]["E0"], cfg["material"]["nu"])
    EH_list = []
    for rho in tensor_knots:
        if float(rho) in by_rho:
            EH_list.append(by_rho[float(rho)]["EH"])
        elif float(rho) >= 1.0:
            EH_list.append(E0_mat.copy())
        else:
            params = geometry.UnitCellParams(d=1.0, rho=float(rho), r_rel=cfg["cell"]["r_rel"])
            cell = homog.solve_cell_problems(params, 1, int(cfg["cell"]["target_elements"]), E0_mat)
            EH_list.append(homog.homogenized_tensor(cell))

    model = matmodel.build_material_model(
        tensor_knots,
        EH_list,
        lam_wc_list,
        meta={"tensor_knots": tensor_knots, "lam_knots": lam_knots, "preset": "desk" if desk else "paper"},
        lam_rho_knots=lam_knots,
    )
    matmodel.save_model(model, stage.path(cfg["model"]["filename"]))
    write_csv(stage.path("sweep_table.csv"), SWEEP_HEADER, all_rows)
    write_csv(
        stage.path("model_knots.csv"),
        ["rho", "lam_wc"],
        [[r, l] for r, l in zip(lam_knots, lam_wc_list)],
    )
    plots.save_worst_case_curve(model, stage.path("worst_case_curve.png"))
    plots.save_tensor_curves(model, stage.path("tensor_curves.png"))
    stage.finish({"n_sweeps": len(lam_knots)})


def _load_model(cfg, out_dir):
    path = os.path.join(out_dir, cfg["model"]["filename"])
    require_file(path, "model-build")
    return matmodel.load_model(path), path


def _column_problem(cfg, model):
    col = cfg["column"]
    h = col["Lx"] / int(col["nx"])
    return macro.make_column_problem(
        int(col["nx"]),
        int(col["ny"]),
        col["Lx"],
        col["Ly"],
        total_load=col["total_load"],
        material_mode="model",
        model=model,
        filter_radius=col["filter_radius_rel"] * h,
        E0=cfg["material"]["E0"],
        nu=cfg["material"]["nu"],
        n_modes=int(cfg["opt"]["n_macro_modes"]),
    )


def _bound_settings(cfg):
    o = cfg["opt"]
    return opt.BoundSettings(
        n_macro_modes=int(o["n_macro_modes"]),
        micro_margin=o["micro_margin"],
        compliance_band=o["compliance_band"],
        move=o["move"],
        max_iter=int(o["max_iter"]),
    )


FRONT_HEADER = ["j", "c0", "c", "s", "min_macro_LF", "min_micro_LF", "min_rho", "iterations", "status"]


def _design_outputs(stage, tag, problem, rho, history=None):
    write_csv(stage.path(f"design_{tag}.csv"), ["element", "rho"], [[e, rho[e]] for e in range(rho.shape[0])])
    plots.save_density_map(problem.mesh, problem.filter @ rho, stage.path(f"density_{tag}.png"), title=tag)
    meshmod.write_vtk(problem.mesh, stage.path(f"design_{tag}.vtk"), cell_data={"rho": rho, "rho_filtered": problem.filter @ rho})
    if history:
        write_csv(
            stage.path(f"history_{tag}.csv"),
            ["it", "f0", "max_g", "kkt", "step"],
            [[h["it"], h["f0"], h["max_g"], h["kkt"], h["step"]] for h in history],
        )
        plots.save_history(history, stage.path(f"history_{tag}.png"))


@main.command("optimize")
@click.option("--problem", "problem_kind", type=click.Choice(["compliance", "A", "B", "C"]), default=None,
              help="compliance minimization or a bound variant (default: config opt.variant)")
@click.option("--c0", type=float, default=None, help="compliance budget (default: c0_factor x anchor)")
@common_options
def cmd_optimize(problem_kind, c0, config_path, out_dir, workers, desk, force):
    """One optimization run on the column problem."""
    cfg = load_config(config_path, desk)
    kind = problem_kind or cfg["opt"]["variant"]
    model, model_path = _load_model(cfg, out_dir)
    inputs = {"command": "optimize", "kind": kind, "c0": c0, "column": cfg["column"], "opt": cfg["opt"], "model": _hash_file(model_path)}
    stage = Stage(out_dir, "optimize", inputs, force)
    if stage.cached():
        return
    problem = _column_problem(cfg, model)
    col = cfg["column"]
    vf, rho_min = col["volume_fraction"], col["rho_min"]
    try:
        res_c, state_c = opt.solve_compliance_min(
            problem, vf, rho_min, move=cfg["opt"]["move"], max_iter=int(cfg["opt"]["max_iter"])
        )
        if kind == "compliance":
            res, extra = res_c, {"c": float(state_c.compliance)}
            _design_outputs(stage, "compliance", problem, res.x, res.history)
        else:
            c_star = float(state_c.compliance)
            budget = c0 if c0 is not None else cfg["opt"]["c0_factor"] * c_star
            if budget < c_star:
                click.echo(f"error: c0={budget:g} below the compliance anchor {c_star:g}", err=True)
                sys.exit(EXIT_VALIDATION)
            bres, bstate = opt.solve_bound_problem(
                problem, budget, vf, rho_min, variant=kind, settings=_bound_settings(cfg), x0=res_c.x
            )
            res = bres
            finite = np.isfinite(bstate.lam_micro)
            extra = {
                "c_star": c_star,
                "c0": budget,
                "c": float(bstate.compliance),
                "s": float(bres.x[-1]),
                "min_macro_LF": float(np.abs(bstate.lam_macro).min()),
                "min_micro_LF": float(np.min(bstate.lam_micro[finite])) if np.any(finite) else float("inf"),
            }
            _design_outputs(stage, kind, problem, bres.x[:-1], bres.history)
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    write_json(
        stage.path("optimize.json"),
        {"kind": kind, "status": res.status, "iterations": res.iterations, "kkt": res.kkt, **extra},
    )
    stage.finish({"status": res.status})
    click.echo(f"{kind}: status={res.status} after {res.iterations} iterations")


@main.command("pareto")
@click.option("--variant", type=click.Choice(["A", "B", "C"]), default=None)
@click.option("--points", "n_points", type=int, default=None, help="front size (default: config opt.n_points)")
@common_options
def cmd_pareto(variant, n_points, config_path, out_dir, workers, desk, force):
    """Sweep the compliance budget and trace one Pareto front."""
    cfg = load_config(config_path, desk)
    var = variant or cfg["opt"]["variant"]
    npts = n_points or int(cfg["opt"]["n_points"])
    model, model_path = _load_model(cfg, out_dir)
    inputs = {"command": "pareto", "variant": var, "points": npts, "column": cfg["column"], "opt": cfg["opt"], "model": _hash_file(model_path)}
    stage = Stage(out_dir, "pareto", inputs, force)
    if stage.cached():
        return
    problem = _column_problem(cfg, model)
    col = cfg["column"]

    def progress(point):
        click.echo(f"  j={point.j} c0={point.c0:.5g} s={point.s:.5g} status={point.status}")

    try:
        points, anchors = opt.pareto_sweep(
            problem, npts, col["volume_fraction"], col["rho_min"],
            variant=var, settings=_bound_settings(cfg), callback=progress,
        )
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    rows = [
        [p.j, p.c0, p.c, p.s, p.min_macro_lf, p.min_micro_lf, p.min_rho, p.iterations, p.status]
        for p in points
    ]
    write_csv(stage.path(f"front_{var}.csv"), FRONT_HEADER, rows)
    plots.save_front(points, stage.path(f"front_{var}.png"), label=f"variant {var}")
    for p in points:
        _design_outputs(stage, f"{var}_{p.j:02d}", problem, p.rho)
    write_json(stage.path(f"pareto_{var}.json"), {"anchors": {k: v for k, v in anchors.items() if k != "rho_cmin"}})
    stage.finish({"variant": var, "n_points": npts})


@main.command("dehom")
@click.option("--design", "design_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="design CSV (default: optimize output in --out)")
@common_options
def cmd_dehom(design_path, config_path, out_dir, workers, desk, force):
    """Realize a density field as an explicit lattice mesh."""
    cfg = load_config(config_path, desk)
    kind = cfg["opt"]["variant"]
    design_path = design_path or require_file(os.path.join(out_dir, f"design_{kind}.csv"), "optimize")
    inputs = {"command": "dehom", "design": _hash_file(design_path), "dehom": cfg["dehom"], "column": cfg["column"], "cell": cfg["cell"]}
    stage = Stage(out_dir, "dehom", inputs, force)
    if stage.cached():
        return
    rho = np.loadtxt(design_path, delimiter=",", skiprows=1, usecols=1)
    col = cfg["column"]
    field = geometry.DensityField(int(col["nx"]), int(col["ny"]), col["Lx"], col["Ly"], rho)
    try:
        m, info = geometry.dehomogenize(
            field, int(cfg["dehom"]["n_cells_x"]), int(cfg["dehom"]["target_elements"]), r_rel=cfg["cell"]["r_rel"]
        )
    except Exception as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    meshmod.write_vtk(m, stage.path("dehom_mesh.vtk"), title="dehomogenized lattice")
    write_json(stage.path("dehom.json"), {**info, "n_nodes": m.n_nodes, "n_elements": m.n_elements})
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(3.5, 3.5 * col["Ly"] / col["Lx"]), constrained_layout=True)
    ax.triplot(m.nodes[:, 0], m.nodes[:, 1], m.elements[:, :3], lw=0.05)
    ax.set_aspect("equal")
    fig.savefig(stage.path("dehom_mesh.png"), dpi=200)
    plt.close(fig)
    stage.finish({"n_elements": m.n_elements})
    click.echo(f"lattice mesh: {m.n_elements} elements, width rescale {info['gamma']:.4f}")


@main.command("validate")
@click.option("--study", type=click.Choice(["dehom", "aposteriori", "bowtie", "all"]), default="all", show_default=True)
@click.option("--design", "design_path", type=click.Path(exists=True, dir_okay=False), default=None)
@common_options
def cmd_validate(study, design_path, config_path, out_dir, workers, desk, force):
    """Check homogenized predictions against full-resolution reanalysis."""
    cfg = load_config(config_path, desk)
    model, model_path = _load_model(cfg, out_dir)
    want = ("dehom", "aposteriori", "bowtie") if study == "all" else (study,)
    inputs = {"command": "validate", "study": study, "model": _hash_file(model_path),
              "validate": cfg["validate"], "dehom": cfg["dehom"], "bowtie": cfg["bowtie"], "column": cfg["column"]}
    if study != "bowtie":
        kind = cfg["opt"]["variant"]
        design_path = design_path or require_file(os.path.join(out_dir, f"design_{kind}.csv"), "optimize")
        inputs["design"] = _hash_file(design_path)
    stage = Stage(out_dir, "validate", inputs, force)
    if stage.cached():
        return
    gates = {}
    report = {}
    vc = cfg["validate"]
    try:
        if "dehom" in want or "aposteriori" in want:
            rho = np.loadtxt(design_path, delimiter=",", skiprows=1, usecols=1)
            problem = _column_problem(cfg, model)
            st = macro.analyze(problem, rho)
        if "aposteriori" in want:
            rng = np.random.default_rng(int(vc["seed"]))
            finite = np.flatnonzero(np.isfinite(st.lam_micro))
            n_take = min(int(vc["max_elements"]), finite.size)
            chosen = np.sort(rng.choice(finite, size=n_take, replace=False))
            ap = validate.a_posteriori(
                st.rho_t, st.sigma_avg, model,
                kappa_set=tuple(int(k) for k in vc["kappa_set"]),
                elements=chosen, quant_step=vc["quant_step"],
                target_elements_per_cell=int(cfg["cell"]["target_elements"]),
                E0=cfg["material"]["E0"], nu=cfg["material"]["nu"],
            )
            write_csv(
                stage.path("aposteriori.csv"),
                ["element", "rho", "rho_q", "sigma_xx", "sigma_yy", "sigma_xy", "lam_pred", "lam_ap", "rel_diff", "safeguard_ok"],
                [[c.element, c.rho, c.rho_q, c.sigma[0], c.sigma[1], c.sigma[2], c.lam_pred, c.lam_ap, c.rel_diff, int(c.safeguard_ok)] for c in ap.checks],
            )
            err_field = np.full(problem.mesh.n_elements, np.nan)
            for c in ap.checks:
                err_field[c.element] = c.rel_diff
            meshmod.write_vtk(problem.mesh, stage.path("aposteriori_error.vtk"),
                              cell_data={"rel_diff": np.nan_to_num(err_field, nan=-1.0), "rho": st.rho_t})
            report["aposteriori"] = {
                "n_checked": ap.n_checked,
                "mean_rel_diff": ap.mean_rel_diff,
                "std_rel_diff": ap.std_rel_diff,
                "frac_safeguard": ap.frac_safeguard,
            }
            gates["aposteriori_safeguard_95"] = bool(ap.frac_safeguard >= 0.95)
        if "dehom" in want:
            dh = validate.dehom_validation(
                problem, rho,
                n_cells_x=int(cfg["dehom"]["n_cells_x"]),
                target_elements=int(cfg["dehom"]["target_elements"]),
                total_load=cfg["column"]["total_load"],
                n_modes_scan=int(cfg["dehom"]["n_modes_scan"]),
                r_rel=cfg["cell"]["r_rel"],
                progress=lambda kind, a, b: click.echo(f"  dehom {kind}: {a}"),
            )
            report["dehom"] = {
                "n_elements": dh.n_elements,
                "macro_blf": dh.macro_blf,
                "macro_blf_pred": dh.macro_blf_pred,
                "interior_lf": dh.interior_lf,
                "interior_mode_index": dh.interior_mode_index,
                "min_micro_pred": dh.min_micro_pred,
                "compliance": dh.compliance,
                "compliance_pred": dh.compliance_pred,
                "mode_labels": dh.mode_labels,
            }
            gates["dehom_macro_blf_10pct"] = bool(
                np.isfinite(dh.macro_blf) and abs(dh.macro_blf - dh.macro_blf_pred) <= 0.10 * dh.macro_blf_pred
            )
            gates["dehom_interior_above_pred"] = bool(
                np.isfinite(dh.interior_lf) and dh.interior_lf >= dh.min_micro_pred * (1 - 1e-6)
            )
            write_csv(
                stage.path("dehom_modes.csv"),
                ["mode", "load_factor", "label"],
                [[i, float(v), lab] for i, (v, lab) in enumerate(zip(dh.values, dh.mode_labels))],
            )
        if "bowtie" in want:
            bw = cfg["bowtie"]
            bt = validate.bowtie_study(
                model, nx=int(bw["nx"]), ny=int(bw["ny"]), waist=bw["waist"], rho=bw["rho"],
                kappa_set=tuple(int(k) for k in vc["kappa_set"]), per_type=int(bw["per_type"]),
                E0=cfg["material"]["E0"], nu=cfg["material"]["nu"],
                target_elements_per_cell=int(cfg["cell"]["target_elements"]),
            )
            report["bowtie"] = {"ratios": bt.ratios, "counts": bt.counts}
            shear = bt.ratios.get("shear", float("nan"))
            gates["bowtie_shear_band"] = bool(1.2 <= shear <= 1.8)
            write_csv(
                stage.path("bowtie.csv"),
                ["element", "rho_q", "lam_pred", "lam_ap", "ratio", "stress_type"],
                [[c.element, c.rho_q, c.lam_pred, c.lam_ap, c.lam_ap / c.lam_pred, bt.types[c.element]] for c in bt.report.checks],
            )
    except fem.SolverError as err:
        click.echo(f"solver failure: {err}", err=True)
        sys.exit(EXIT_SOLVER)
    report["gates"] = gates
    write_json(stage.path("validation.json"), report)
    stage.finish({"gates": gates})
    for name, ok in sorted(gates.items()):
        click.echo(f"  {name}: {'pass' if ok else 'FAIL'}")
    if not all(gates.values()):
        sys.exit(EXIT_VALIDATION)


if __name__ == "__main__":
    main()
