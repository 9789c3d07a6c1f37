"""Command-line interface: ``run``, ``compare``, ``gen-mesh`` and ``verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import CHANNEL, FINE_MESH, ConfigError, ExperimentConfig, MeshConfig, load_config
from .mesh import MeshError, element_quality, obstacle_loop, write_msh22, write_vtu
from .optimizer import IterationRecord, ShapeProblem, Status, augmented_lagrangian_loop
from .shape_calculus import AlParameters
from .verification import check_geometry, check_riesz, check_shape_derivative, check_stokes

log = logging.getLogger("stokes_shape")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_MESH_INVALID = 3
EXIT_ITERATION_CAP = 4
EXIT_LINE_SEARCH = 5

FINE_HELP = "use the fine resolution: 633 obstacle edges, about 10k triangles"

EXIT_CODES = {Status.CONVERGED: EXIT_OK, Status.MESH_INVALID: EXIT_MESH_INVALID,
              Status.ITERATION_CAP: EXIT_ITERATION_CAP, Status.LINE_SEARCH_FAILED: EXIT_LINE_SEARCH}


# -- outputs ---------------------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _vtu(path, iterate, lame):
    sol = iterate.solution
    q, _ = element_quality(iterate.mesh)
    write_vtu(iterate.mesh, path,
              point_data={"velocity": sol.velocity.vertex_values(), "pressure": sol.pressure.vertex_values(),
                          "mu": lame.mu},
              cell_data={"quality": q})


def _float(x):
    return float(x) if np.isfinite(x) else None


def execute(cfg, mesh, outdir, metric=None, memory=None):
    """One optimization run writing its full output set into ``outdir``."""
    metric = metric or cfg.metric
    opt = replace(cfg.optimizer, metric=metric, memory=cfg.optimizer.memory if memory is None else memory)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.toml").write_text(cfg.source_text, encoding="utf-8")
    problem = ShapeProblem(mesh, cfg.inflow_function(), metric)
    snap = cfg.output.snapshots
    if snap:
        _vtu(outdir / "snapshot_00000.vtu", problem.evaluate(mesh, _params(cfg, opt, problem)), problem.lame)

    def callback(iterate, record):
        if snap and record.iter % snap == 0:
            _vtu(outdir / f"snapshot_{record.iter:05d}.vtu", iterate, problem.lame)

    if cfg.fixed_multipliers is not None:
        res = problem.inner_solve(mesh, np.asarray(cfg.fixed_multipliers, float), opt.penalty, opt,
                                  callback=callback)
        state, status, records = res.state, res.status, res.records
        multipliers = np.asarray(cfg.fixed_multipliers, float)
        history, penalty = [multipliers], opt.penalty
        inner_counts, increases = [res.iterations], 0
    else:
        res = augmented_lagrangian_loop(problem, mesh, opt, callback=callback)
        state, status, records = res.state, res.status, res.records
        history, multipliers, penalty = res.multiplier_history, res.multipliers, res.penalty
        inner_counts, increases = res.inner_iterations, res.penalty_increases

    if not cfg.output.timing:
        for r in records:
            r.seconds = 0.0
    _write_csv(outdir / "run.csv", IterationRecord.columns(), [r.row() for r in records])
    final_lam = history[-1]
    _write_csv(outdir / "multipliers.csv", ["outer", "lambda_1", "lambda_2", "lambda_3", "distance_to_final"],
               [[k, *map(float, lam), float(np.linalg.norm(lam - final_lam))] for k, lam in enumerate(history)])
    final = problem.evaluate(state, _params(cfg, opt, problem, multipliers, penalty))
    _vtu(outdir / "final.vtu", final, problem.lame)
    q0 = element_quality(mesh)[1]
    c = problem.constraints(state)
    summary = {
        "version": __version__,
        "status": status.value,
        "exit_code": EXIT_CODES[status],
        "metric": metric.kind,
        "memory": opt.memory,
        "final_J": final.J,
        "final_L_A": final.L_A,
        "constraints": [float(x) for x in c],
        "constraint_norm": float(np.linalg.norm(c)),
        "reference_volume": problem.reference.volume,
        "initial_worst_quality": _float(q0),
        "final_worst_quality": _float(final.worst_quality),
        "max_worst_quality": _float(max([q0] + [r.worst_quality for r in records])),
        "inner_iterations": int(sum(inner_counts)),
        "inner_iterations_per_outer": [int(k) for k in inner_counts],
        "outer_iterations": len(inner_counts),
        "penalty": penalty,
        "penalty_increases": increases,
        "multipliers": [float(x) for x in multipliers],
        "fixed_multipliers": cfg.fixed_multipliers is not None,
        "mesh": {"vertices": mesh.n_vertices, "triangles": mesh.n_triangles,
                 "obstacle_edges": len(obstacle_loop(mesh))},
        "config": _config_dict(cfg),
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _params(cfg, opt, problem, multipliers=None, penalty=None):
    if multipliers is None:
        multipliers = cfg.fixed_multipliers if cfg.fixed_multipliers is not None else np.zeros(3)
    return AlParameters(multipliers, opt.penalty if penalty is None else penalty)


def _config_dict(cfg):
    d = asdict(cfg)
    d.pop("source_text")
    if d["mesh"].get("markers"):
        d["mesh"]["markers"] = {str(k): int(v) for k, v in d["mesh"]["markers"].items()}
    return json.loads(json.dumps(d, default=str))


# -- subcommands -------------------------------------------------------------------------------

def _load(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(getattr(args, "output", None), getattr(args, "snapshots", None),
                              getattr(args, "fine", False))


def cmd_run(args):
    cfg = _load(args)
    mesh = cfg.build_mesh()
    summary = execute(cfg, mesh, cfg.output.directory)
    print(f"{summary['status']}: J={summary['final_J']:.10g} |c|={summary['constraint_norm']:.3e} "
          f"worst quality={summary['final_worst_quality']:.4g} inner iterations={summary['inner_iterations']}")
    return summary["exit_code"]


def _leg(payload):
    cfg, mesh, leg, outdir = payload
    try:
        metric = replace(cfg.metric, kind=leg.metric)
        return leg.name, execute(cfg, mesh, outdir, metric, leg.memory), None
    except Exception as exc:  # a failing leg must not abort the others
        return leg.name, None, f"{type(exc).__name__}: {exc}"


def cmd_compare(args):
    cfg = _load(args)
    mesh = cfg.build_mesh()
    root = Path(cfg.output.directory)
    root.mkdir(parents=True, exist_ok=True)
    payloads = [(cfg, mesh, leg, root / leg.name) for leg in cfg.legs]
    workers = max(1, min(len(payloads), args.jobs))
    if workers == 1:
        results = [_leg(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_leg, payloads))
    columns = {}
    for name, summary, error in results:
        if summary is None:
            print(f"{name}: failed ({error})", file=sys.stderr)
            continue
        with open(root / name / "run.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        columns[name] = {int(r["iter"]): (r["J"], r["worst_quality"]) for r in rows}
        print(f"{name}: {summary['status']} after {summary['inner_iterations']} inner iterations, "
              f"worst quality {summary['max_worst_quality']:.4g}")
    names = [leg.name for leg in cfg.legs if leg.name in columns]
    last = max([max(c, default=0) for c in columns.values()], default=0)
    header = ["iter"] + [f"{k}_{n}" for n in names for k in ("J", "worst_quality")]
    rows = []
    for i in range(1, last + 1):
        row = [i]
        for n in names:
            row += list(columns[n].get(i, ("", "")))
        rows.append(row)
    _write_csv(root / "compare.csv", header, rows)
    status = {name: (summary["status"] if summary else f"error: {error}") for name, summary, error in results}
    with open(root / "compare_summary.json", "w", encoding="utf-8") as fh:
        json.dump({"version": __version__, "runs": status}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if all(summary is not None for _, summary, _ in results) else EXIT_FAILED


def cmd_gen_mesh(args):
    base = load_config(args.config).mesh if args.config else MeshConfig()
    if base.source != CHANNEL:
        raise ConfigError("gen-mesh needs the built-in channel-with-circle geometry")
    kw = {}
    if args.fine:
        kw.update(FINE_MESH)
    for key in ("radius", "n_obstacle", "h_max", "grading"):
        if getattr(args, key) is not None:
            kw[key] = getattr(args, key)
    if args.box is not None:
        kw["box"] = tuple(args.box)
    if args.symmetric is not None:
        kw["symmetric"] = args.symmetric
    mc = replace(base, **kw)
    if mc.symmetric and mc.n_obstacle % 2:
        mc = replace(mc, symmetric=False)
    try:
        mesh = mc.build()
    except MeshError as exc:
        raise ConfigError(f"infeasible geometry: {exc}") from exc
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_msh22(mesh, out)
    print(f"wrote {out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
          f"{len(obstacle_loop(mesh))} obstacle edges, worst quality {element_quality(mesh)[1]:.4g}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _load(args)
    mesh = cfg.build_mesh()
    sign = -1.0 if args.flip_objective_sign else 1.0
    results = [check_stokes(),
               check_shape_derivative(mesh, cfg.inflow_function(), objective_sign=sign, seed=cfg.seed,
                                      metric=cfg.metric),
               check_geometry(seed=cfg.seed)]
    results += check_riesz(mesh, seed=cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


# -- entry point -------------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="stokes-shape", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("--config", metavar="PATH", help="TOML experiment file (defaults apply without it)")
        p.add_argument("--paper-scale", dest="fine", action="store_true", help=FINE_HELP)
        if outputs:
            p.add_argument("--output", metavar="DIR", help="output directory (overrides [output] directory)")
            p.add_argument("--snapshots", type=int, metavar="N", help="write a VTU snapshot every N iterations")

    p = sub.add_parser("run", help="run the augmented Lagrangian optimization")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several metric/memory settings from the same initial mesh")
    common(p)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-mesh", help="write the channel-with-circle mesh in MSH 2.2 format")
    p.add_argument("--config", metavar="PATH", help="take [mesh] defaults from this file")
    p.add_argument("--paper-scale", dest="fine", action="store_true", help=FINE_HELP)
    p.add_argument("--output", metavar="FILE", default="channel.msh")
    p.add_argument("--radius", type=float)
    p.add_argument("--n-obstacle", dest="n_obstacle", type=int)
    p.add_argument("--h-max", dest="h_max", type=float)
    p.add_argument("--grading", type=float)
    p.add_argument("--box", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--symmetric", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_gen_mesh)

    p = sub.add_parser("verify", help="run the oracle checks on the configured mesh")
    common(p, outputs=False)
    p.add_argument("--flip-objective-sign", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
