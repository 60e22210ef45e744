"""Command-line experiment runner.

    ellipticlab run CONFIG [--set section.key=value ...]
    ellipticlab EXPERIMENT [--config CONFIG] [--set ...]
    ellipticlab --list-experiments

Relative output directories are resolved under $ELLIPTICLAB_OUTPUT_ROOT when
it is set.  Exit status: 0 on success, 2 for configuration errors, 1 for
failures during an experiment.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .assembly import assemble_form, assemble_volume_load
from .coeffs import CoefficientSet, oscillation_seminorm, pattern, read_coefficient_table
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .estimators import (ESTIMATE_SCHEMA, EstimateReport, boundary_sup_constant, energy_check,
                         interior_constant, k_sweep, manufactured_sine, mms_convergence,
                         parabolic_lift_check)
from .greens import (decay_fit, dirichlet_green, neumann_k_sweep, radial_profile,
                     truncation_study)
from .io import write_csv, write_matrix_market, write_vtk
from .linsolve import SolverConfig, solve
from .mesh import build_box_mesh, named_mask

log = logging.getLogger("ellipticlab")


class ExperimentError(RuntimeError):
    pass


# --- builders ----------------------------------------------------------------------
def build_mesh(cfg: ExperimentConfig, divisions=None):
    m = cfg.values["mesh"]
    div = m["divisions"] if divisions is None else divisions
    return build_box_mesh(m["origin"], m["extent"], div, named_mask(m["mask"], m["origin"], m["extent"]))


def _k_field(cfg: ExperimentConfig, mesh):
    c = cfg.values["coefficients"]
    k0, amp = c["k"], c["k_amplitude"]
    if c["k_variation"] == "none":
        return k0
    x = mesh.cell_centers[:, 0]
    if c["k_variation"] == "sine":
        return k0 + amp * np.sin(2 * np.pi * x)
    mid = mesh.origin[0] + 0.5 * mesh.extent[0]
    return k0 + amp * (x > mid)


def build_coeffs(cfg: ExperimentConfig, mesh, **override) -> CoefficientSet:
    c = dict(cfg.values["coefficients"])
    c.update(override)
    if c["table"] is not None:
        return read_coefficient_table(c["table"], mesh)
    params = {
        "identity": {},
        "checkerboard": dict(gamma_lo=c["gamma_lo"], gamma_hi=c["gamma_hi"], block=c["block"]),
        "sphere_inclusion": dict(center=c["center"], radius=c["radius"], gamma_in=c["gamma_in"],
                                 gamma_out=c["gamma_out"]),
        "rotated_aniso": dict(axis=c["axis"], angle=c["angle"], lambdas=c["lambdas"]),
    }[c["pattern"]]
    return pattern(c["pattern"], mesh, k=_k_field(cfg, mesh), b=c["b"], b_tilde=c["b_tilde"],
                   c=c["c"], **params)


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.values["solver"]
    return SolverConfig(method=s["method"], tol=s["tol"], max_iter=s["max_iter"],
                        preconditioner=s["preconditioner"])


def _center(mesh):
    return tuple(mesh.origin + 0.5 * mesh.extent)


def _header(cfg: ExperimentConfig, mesh=None, coeffs=None, **extra):
    head = {"schema": f"ellipticlab/{cfg.name}/1", "experiment": cfg.name,
            "config_sha256": cfg.digest(), "version": __version__, "kernels": kernels.BACKEND}
    if mesh is not None:
        head["h"] = mesh.h
        head["divisions"] = " ".join(str(int(d)) for d in mesh.divisions)
    if coeffs is not None:
        head["nu"] = coeffs.nu
        head["k"] = coeffs.k_constant if coeffs.k_is_constant else "variable"
    head.update(extra)
    return head


def _formats(cfg):
    return set(cfg.values["output"]["formats"])


# --- experiments -------------------------------------------------------------------
def run_solve(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    bc = cfg["estimator.bc"]
    A = assemble_form(mesh, coeffs, bc)
    x, rep = solve(A, assemble_volume_load(mesh, cfg["coefficients.source"], bc), solver_config(cfg))
    if bc == "dirichlet":
        x[mesh.boundary] = 0.0
    log.info("solve: %d iterations, residual %.2e, %.2fs", rep.iterations, rep.residual, rep.wall_time)
    files = []
    if "csv" in _formats(cfg):
        rows = [(i, *mesh.points[i], x[i].real, x[i].imag) for i in range(mesh.n_nodes)]
        files.append(write_csv(out / "solution.csv", ["node", "x", "y", "z", "re", "im"], rows,
                               _header(cfg, mesh, coeffs, bc=bc, iterations=rep.iterations,
                                       residual=rep.residual)))
    if "vtk" in _formats(cfg):
        for name, vals in (("u_abs", np.abs(x)), ("u_re", x.real), ("u_im", x.imag)):
            files.append(write_vtk(out / f"{name}.vtk", mesh, vals, name))
    if "mtx" in _formats(cfg):
        files.append(write_matrix_market(out / "matrix.mtx", A, f"bc={bc}"))
    return files


def run_mms(cfg, out):
    k = cfg["coefficients.k"]
    exact, source = manufactured_sine(1 + 0.5j, k)
    meshes = [build_mesh(cfg, (n, n, n)) for n in cfg["estimator.mesh_sequence"]]
    rows = mms_convergence(exact, source, lambda m: pattern("identity", m, k=k), meshes, solver_config(cfg))
    return [write_csv(out / "mms.csv", ["divisions", "h", "l2_error", "rate"],
                      [(r.divisions, r.h, r.l2_error, r.rate) for r in rows],
                      _header(cfg, None, None, nu=1.0, k=k))]


def _pole(cfg, mesh):
    y = cfg["estimator.pole"] or _center(mesh)
    return mesh.index_of(y)


def run_green_decay(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    y = _pole(cfg, mesh)
    g = dirichlet_green(mesh, coeffs, y, solver_config(cfg))
    fit = decay_fit(g, y, cfg["estimator.r_min"], cfg["estimator.r_max"])
    head = _header(cfg, mesh, coeffs, pole=" ".join(repr(float(v)) for v in mesh.points[y]))
    files = [write_csv(out / "green_profile.csv", ["r", "abs", "arg"], radial_profile(g, y).tolist(), head),
             write_csv(out / "green_fit.csv",
                       ["r_min", "r_max", "slope", "intercept", "c_est", "sup_bound", "n_samples", "residual"],
                       [(fit.r_min, fit.r_max, fit.slope, fit.intercept, fit.c_est, fit.sup_bound,
                         fit.n_samples, fit.residual)], head)]
    if "vtk" in _formats(cfg):
        files.append(write_vtk(out / "green_abs.vtk", mesh, np.abs(g.values), "G_abs"))
    return files


def run_neumann_sweep(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    y = _pole(cfg, mesh)
    rows = neumann_k_sweep(mesh, coeffs, y, cfg["estimator.k_list"], solver_config(cfg),
                           cfg["estimator.r_min"], cfg["estimator.r_max"])
    return [write_csv(out / "neumann_sweep.csv", ["k", "c_obs", "envelope", "ratio"],
                      [(r.k, r.c_obs, r.envelope, r.ratio) for r in rows],
                      _header(cfg, mesh, coeffs, k="sweep"))]


def _source(cfg):
    return cfg["coefficients.source"]


def run_k_independence(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    est = cfg.values["estimator"]
    solver = solver_config(cfg)
    if est["region"] == "interior":
        x0 = est["x0"] or _center(mesh)
        reports = k_sweep(interior_constant, mesh, coeffs, est["k_list"], f=_source(cfg), x0=x0,
                          r=est["r"], alpha=est["alpha"], p=est["p"], solver=solver)
    else:
        x0 = est["x0"] or tuple(mesh.origin)
        reports = k_sweep(boundary_sup_constant, mesh, coeffs, est["k_list"], f=_source(cfg), x0=x0,
                          r=est["r"], p=est["p"], bc=est["bc"], solver=solver)
    c = [r.c_est for r in reports]
    cols = EstimateReport.columns()
    return [write_csv(out / "k_independence.csv", cols, [[r.row()[k] for k in cols] for r in reports],
                      _header(cfg, mesh, coeffs, k="sweep", report_schema=ESTIMATE_SCHEMA,
                              spread=max(c) / min(c) if min(c) > 0 else float("inf")))]


def run_energy(cfg, out):
    mesh = build_mesh(cfg)
    contrasts = cfg["estimator.contrasts"]
    solver = solver_config(cfg)
    rows = []
    variants = [None] if contrasts is None else sorted(contrasts)
    for contrast in variants:
        if contrast is None:
            coeffs = build_coeffs(cfg, mesh)
        else:
            coeffs = build_coeffs(cfg, mesh, pattern="checkerboard", gamma_lo=1.0, gamma_hi=contrast,
                                  table=None)
        for k in sorted(cfg["estimator.k_list"]):
            rep = energy_check(mesh, coeffs.with_k(k), _source(cfg), solver)
            rows.append((contrast if contrast is not None else float("nan"), rep.k, rep.nu, rep.grad_l2,
                         rep.l2, rep.source_norm, rep.r_grad, rep.r_mass, rep.trivial))
    return [write_csv(out / "energy.csv",
                      ["contrast", "k", "nu", "grad_l2", "l2", "source_norm", "r_grad", "r_mass", "trivial"],
                      rows, _header(cfg, mesh, None, k="sweep"))]


def run_lift_check(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    T = cfg["estimator.T"]
    tol = min(cfg["solver.tol"], 1e-12)
    solver = SolverConfig(method=cfg["solver.method"], tol=tol, max_iter=cfg["solver.max_iter"],
                          preconditioner=cfg["solver.preconditioner"])
    rows = [(s, T / s, parabolic_lift_check(mesh, coeffs, _source(cfg), T, s, solver))
            for s in sorted(cfg["estimator.steps"])]
    return [write_csv(out / "lift_check.csv", ["steps", "dt", "discrepancy"], rows,
                      _header(cfg, mesh, coeffs, T=T))]


def run_truncation(cfg, out):
    est = cfg.values["estimator"]
    y = est["pole"] or (0.0, 0.0, 0.0)
    probe = est["probe"] or (0.25, 0.0, 0.0)
    res = truncation_study(lambda m: build_coeffs(cfg, m), est["radii"], est["h"], y, probe,
                           solver_config(cfg), est["max_nodes"])
    rows = [(r.R, r.value.real, r.value.imag, abs(r.value), r.n_nodes, r.difference) for r in res.rows]
    laplace = 1.0 / (4 * np.pi * np.linalg.norm(np.subtract(probe, y)))
    return [write_csv(out / "truncation.csv", ["R", "re", "im", "abs", "n_nodes", "difference"], rows,
                      _header(cfg, None, None, h=est["h"], k=cfg["coefficients.k"],
                              truncated=res.truncated, largest_R=res.largest_R, laplace_value=laplace))]


def run_oscillation(cfg, out):
    mesh = build_mesh(cfg)
    coeffs = build_coeffs(cfg, mesh)
    est = cfg.values["estimator"]
    radii = est["radii"]
    r_o = est["r_o"] if est["r_o"] is not None else max(radii)
    centers = [mesh.index_of(est["x0"])] if est["x0"] is not None else \
        [mesh.nearest_node(_center(mesh))]
    rep = oscillation_seminorm(coeffs.k, mesh, r_o, est["q"], centers, radii)
    rows = [(s.center, s.radius, s.mean, s.value, s.n_cells, s.skipped) for s in rep.samples]
    return [write_csv(out / "oscillation.csv", ["center", "radius", "mean", "value", "n_cells", "skipped"],
                      rows, _header(cfg, mesh, coeffs, r_o=r_o, q=rep.q, kappa_o=rep.kappa_o))]


RUNNERS = {
    "solve": run_solve, "mms": run_mms, "green-decay": run_green_decay,
    "neumann-sweep": run_neumann_sweep, "k-independence": run_k_independence, "energy": run_energy,
    "lift-check": run_lift_check, "truncation": run_truncation, "oscillation": run_oscillation,
}
assert set(RUNNERS) == set(EXPERIMENTS)


def run(cfg: ExperimentConfig):
    """Run the configured experiment; returns the list of written files."""
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    try:
        return RUNNERS[cfg.name](cfg, out)
    except ConfigError:
        raise
    except Exception as exc:
        raise ExperimentError(f"experiment {cfg.name!r} failed: {exc}") from exc


def _parser():
    p = argparse.ArgumentParser(prog="ellipticlab", description=__doc__.split("\n\n")[0])
    p.add_argument("--list-experiments", action="store_true", help="print experiment names and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("command", nargs="?", help="'run' or an experiment name")
    p.add_argument("config_path", nargs="?", help="config file (with 'run')")
    p.add_argument("--config", help="config file for a named experiment")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config key (repeatable)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.list_experiments:
        print("\n".join(EXPERIMENTS))
        return 0
    if args.command is None:
        _parser().print_usage(sys.stderr)
        return 2
    try:
        if args.command == "run":
            if args.config_path is None:
                raise ConfigError("run", "missing config path")
            cfg = load_config(args.config_path, args.set)
        elif args.command in EXPERIMENTS:
            if args.config_path is not None:
                raise ConfigError(args.command, "use --config to pass a file to a named experiment")
            cfg = load_config(args.config, args.set, experiment=args.command)
        else:
            raise ConfigError(args.command, f"unknown command; experiments: {', '.join(EXPERIMENTS)}")
    except ConfigError as exc:
        print(f"ellipticlab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        files = run(cfg)
    except ExperimentError as exc:
        print(f"ellipticlab: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(Path(f))
    return 0


if __name__ == "__main__":
    sys.exit(main())
