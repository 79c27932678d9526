"""Command line front end.

Subcommands: fit, density, cv, simulate, mesh-info. Structured reports are
JSON with a schema_version field, point and grid data are CSV. Outputs are
written atomically (temp file plus rename) and are byte-identical for
identical inputs, seed and thread count.

Exit codes: 0 success, 2 input validation, 3 fit did not converge
(artifacts are still written), 4 internal error.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import estimator, model_selection, simbench
from .assets import BUNDLED_MESHES, mesh_paths
from .bernstein import SplineSpec, index_set
from .errors import DidNotConverge, MeshError, PointOutsideDomain, TriDensityError
from .geometry import load_mesh, load_points, mesh_quality

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_INTERNAL = 4


class ValidationError(TriDensityError):
    """Bad command line input or input files."""


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DidNotConverge as exc:
        _error_json("DidNotConverge", str(exc), EXIT_CONVERGENCE)
        return EXIT_CONVERGENCE
    except (ValidationError, MeshError, PointOutsideDomain, ValueError) as exc:
        _error_json(type(exc).__name__, str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except TriDensityError as exc:
        _error_json(type(exc).__name__, str(exc), EXIT_INTERNAL)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - map anything else to exit 4
        _error_json(type(exc).__name__, str(exc), EXIT_INTERNAL)
        return EXIT_INTERNAL


def _error_json(kind, message, code):
    sys.stderr.write(json.dumps(
        {"error": kind, "message": message, "exit_code": code}, sort_keys=True
    ) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tridensity",
        description="Density estimation on triangulated irregular domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a density to scattered points")
    _mesh_flags(p_fit)
    p_fit.add_argument("--data", required=True, help="CSV of points, header x,y")
    _spec_flags(p_fit)
    lam = p_fit.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float,
                     help="fixed smoothing weight")
    lam.add_argument("--lambda-grid", dest="lambda_grid",
                     help="comma separated weights, or 'default'; selects by CV")
    p_fit.add_argument("--folds", type=int, default=10)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--grid", type=int, default=0,
                       help="also write a density grid CSV at this resolution")
    p_fit.add_argument("--threads", type=int, default=1)
    p_fit.add_argument("--drop-outside", action="store_true",
                       help="drop points outside the domain instead of failing")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.set_defaults(handler=cmd_fit)

    p_den = sub.add_parser("density", help="evaluate a saved fit on a grid")
    _mesh_flags(p_den)
    p_den.add_argument("--fit-dir", required=True,
                       help="directory holding fit_report.json and coefficients.csv")
    p_den.add_argument("--grid", type=int, default=100)
    p_den.add_argument("--out", required=True, help="output CSV path")
    p_den.set_defaults(handler=cmd_density)

    p_cv = sub.add_parser("cv", help="cross-validate the smoothing weight")
    _mesh_flags(p_cv)
    p_cv.add_argument("--data", required=True)
    _spec_flags(p_cv)
    p_cv.add_argument("--lambda-grid", dest="lambda_grid", default="default")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--threads", type=int, default=1)
    p_cv.add_argument("--drop-outside", action="store_true")
    p_cv.add_argument("--out", required=True, help="output JSON path")
    p_cv.set_defaults(handler=cmd_cv)

    p_sim = sub.add_parser("simulate", help="run benchmark replications")
    p_sim.add_argument("--scenario", required=True, choices=sorted(simbench.SCENARIOS))
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--methods", default="bpst,kde",
                       help="comma separated subset of bpst,kde")
    _spec_flags(p_sim)
    p_sim.add_argument("--folds", type=int, default=10)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--grid", type=int, default=100,
                       help="error-integration grid resolution per axis")
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--emit-grids", action="store_true",
                       help="also write true/estimated density grids of replication 0")
    p_sim.add_argument("--out", required=True, help="output JSON path")
    p_sim.set_defaults(handler=cmd_simulate)

    p_info = sub.add_parser("mesh-info", help="audit a triangulation")
    _mesh_flags(p_info)
    p_info.add_argument("--out", help="optional JSON path; always prints to stdout")
    p_info.set_defaults(handler=cmd_mesh_info)

    return parser


def _mesh_flags(p):
    p.add_argument("--mesh-vertices", help="CSV of vertices, header x,y")
    p.add_argument("--mesh-triangles", help="CSV of triangles, header v1,v2,v3")
    p.add_argument("--bundled-mesh", choices=BUNDLED_MESHES,
                   help="use a bundled mesh instead of files")


def _spec_flags(p):
    p.add_argument("--m", type=int, default=3, help="polynomial degree")
    p.add_argument("--r", type=int, default=1, help="smoothness order")


def _load_mesh(args):
    if args.bundled_mesh:
        if args.mesh_vertices or args.mesh_triangles:
            raise ValidationError("--bundled-mesh conflicts with mesh file flags")
        return load_mesh(*mesh_paths(args.bundled_mesh))
    if not (args.mesh_vertices and args.mesh_triangles):
        raise ValidationError(
            "either --bundled-mesh or both --mesh-vertices and --mesh-triangles are required"
        )
    return load_mesh(args.mesh_vertices, args.mesh_triangles)


def _load_data(args, tr):
    pts = load_points(args.data)
    if len(pts) == 0:
        raise ValidationError(f"{args.data}: no data points")
    inside = tr.locate(pts) >= 0
    n_dropped = int((~inside).sum())
    if n_dropped and not args.drop_outside:
        rows = np.where(~inside)[0].tolist()
        raise ValidationError(
            f"{args.data}: {n_dropped} points outside the domain at rows {rows[:10]}"
            + ("" if n_dropped <= 10 else f" (+{n_dropped - 10} more)")
            + "; use --drop-outside to ignore them"
        )
    return pts[inside], n_dropped


def _parse_lambda_grid(text):
    if text == "default":
        return list(model_selection.DEFAULT_LAMBDA_GRID)
    try:
        grid = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --lambda-grid value: {exc}") from exc
    if not grid:
        raise ValidationError("--lambda-grid is empty")
    return grid


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _grid_csv(tr, resolution, values_fn):
    """Density grid CSV text: cell centers of the bounding box, row-major in
    x then y; out-of-domain cells carry density 0 and in_domain 0."""
    xmin, xmax, ymin, ymax = tr.bounding_box()
    dx = (xmax - xmin) / resolution
    dy = (ymax - ymin) / resolution
    xs = xmin + dx * (np.arange(resolution) + 0.5)
    ys = ymin + dy * (np.arange(resolution) + 0.5)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    values, inside = values_fn(pts)
    lines = ["x,y,density,in_domain"]
    for (x, y), v, flag in zip(pts, values, inside):
        lines.append(f"{float(x)!r},{float(y)!r},{float(v)!r},{int(flag)}")
    return "\n".join(lines) + "\n"


def _mesh_summary(tr):
    q = mesh_quality(tr)
    return {
        "N": tr.n_triangles,
        "mesh_size": q.mesh_size,
        "beta_ratio": q.beta_ratio,
    }


def cmd_fit(args):
    tr = _load_mesh(args)
    spec = SplineSpec(args.m, args.r)
    pts, n_dropped = _load_data(args, tr)
    if len(pts) == 0:
        raise ValidationError("no data points remain inside the domain")

    space = estimator.ModelSpace(tr, spec)
    cv_block = None
    if args.lambda_grid is not None:
        grid = _parse_lambda_grid(args.lambda_grid)
        report = model_selection.select_lambda(
            tr, pts, spec, grid, folds=args.folds, seed=args.seed,
            space=space, threads=args.threads,
        )
        lam = report.best_lambda
        cv_block = {
            "lambda_grid": report.lambda_grid,
            "cv_errors": report.cv_errors,
            "best_lambda": report.best_lambda,
            "folds": report.folds,
            "seed": report.seed,
        }
    elif args.lam is not None:
        lam = args.lam
    else:
        raise ValidationError("one of --lambda or --lambda-grid is required")

    config = estimator.FitConfig(spec=spec, lam=lam)
    failure = None
    try:
        f = estimator.fit(tr, pts, config, space=space)
    except DidNotConverge as exc:
        f = exc.fit
        failure = exc

    report_obj = {
        "schema_version": SCHEMA_VERSION,
        "lambda": f.lam,
        "iterations": f.iterations,
        "converged": f.converged,
        "final_objective": f.objective_trace[-1],
        "integral_of_density": float(np.exp(f.log_norm_const)),
        "mesh": _mesh_summary(tr),
        "spec": {"m": spec.degree, "r": spec.smoothness},
        "n_points": int(len(pts)),
        "n_dropped": n_dropped,
        "quadrature": {
            "nodes": int(len(space.rule.weights)),
            "exactness": int(space.rule.exactness),
            "family": "symmetric-three-orbit",
        },
    }
    if cv_block is not None:
        report_obj["cv"] = cv_block
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "fit_report.json"), report_obj)
    _write_atomic(os.path.join(args.out, "coefficients.csv"),
                  _coefficients_csv(tr, spec, f.gamma))
    if args.grid:
        _write_atomic(os.path.join(args.out, "density_grid.csv"),
                      _grid_csv(tr, args.grid, f.density))
    if failure is not None:
        raise failure
    return EXIT_OK


def _coefficients_csv(tr, spec, gamma):
    lines = ["triangle,i,j,k,value"]
    dim = spec.per_triangle_dim
    triples = index_set(spec.degree)
    for t in range(tr.n_triangles):
        for pos, (i, j, k) in enumerate(triples):
            lines.append(f"{t},{i},{j},{k},{float(gamma[t * dim + pos])!r}")
    return "\n".join(lines) + "\n"


def _read_coefficients(path, tr, spec):
    triples = {ijk: pos for pos, ijk in enumerate(index_set(spec.degree))}
    dim = spec.per_triangle_dim
    gamma = np.full(spec.dimension(tr), np.nan)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "triangle,i,j,k,value":
            raise ValidationError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            try:
                t, i, j, k, v = line.strip().split(",")
                t = int(t)
                if not 0 <= t < tr.n_triangles:
                    raise ValueError(f"triangle index {t} out of range")
                gamma[t * dim + triples[(int(i), int(j), int(k))]] = float(v)
            except (ValueError, KeyError, IndexError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    if np.any(np.isnan(gamma)):
        raise ValidationError(f"{path}: incomplete coefficient table")
    return gamma


def cmd_density(args):
    tr = _load_mesh(args)
    report_path = os.path.join(args.fit_dir, "fit_report.json")
    coeff_path = os.path.join(args.fit_dir, "coefficients.csv")
    for p in (report_path, coeff_path):
        if not os.path.exists(p):
            raise ValidationError(f"missing fit artifact {p}")
    with open(report_path) as fh:
        report = json.load(fh)
    spec = SplineSpec(report["spec"]["m"], report["spec"]["r"])
    gamma = _read_coefficients(coeff_path, tr, spec)
    if args.grid < 1:
        raise ValidationError("--grid must be at least 1")
    fn = lambda pts: estimator.density_from_gamma(tr, spec, gamma, pts)
    _write_atomic(args.out, _grid_csv(tr, args.grid, fn))
    return EXIT_OK


def cmd_cv(args):
    tr = _load_mesh(args)
    spec = SplineSpec(args.m, args.r)
    pts, n_dropped = _load_data(args, tr)
    report = model_selection.select_lambda(
        tr, pts, spec, _parse_lambda_grid(args.lambda_grid),
        folds=args.folds, seed=args.seed, threads=args.threads,
    )
    _write_json(args.out, {
        "schema_version": SCHEMA_VERSION,
        "lambda_grid": report.lambda_grid,
        "cv_errors": report.cv_errors,
        "best_lambda": report.best_lambda,
        "folds": report.folds,
        "seed": report.seed,
        "fold_assignments": report.fold_assignments.tolist(),
        "failed_folds": report.failed_folds,
        "n_points": int(len(pts)),
        "n_dropped": n_dropped,
        "spec": {"m": spec.degree, "r": spec.smoothness},
    })
    return EXIT_OK


def cmd_simulate(args):
    methods = tuple(tok for tok in args.methods.split(",") if tok)
    for m in methods:
        if m not in ("bpst", "kde"):
            raise ValidationError(f"unknown method {m!r}")
    scenario = simbench.get_scenario(args.scenario)
    spec = SplineSpec(args.m, args.r)
    results = simbench.run_benchmark(
        scenario, args.n, args.reps, methods=methods, seed=args.seed,
        spec=spec, folds=args.folds, mise_resolution=args.grid,
        threads=args.threads,
    )
    _write_json(args.out, {
        "schema_version": SCHEMA_VERSION,
        "scenario": args.scenario,
        "n": args.n,
        "reps": args.reps,
        "seed": args.seed,
        "grid": args.grid,
        "spec": {"m": spec.degree, "r": spec.smoothness},
        "results": [
            {
                "method": r.method,
                "mean_mise": r.mean,
                "sd_mise": r.sd,
                "sd_defined": r.sd_defined,
                "n_failed": r.n_failed,
                "per_replication": r.per_replication,
                "failures": [{"replication": i, "message": msg} for i, msg in r.failures],
            }
            for r in results
        ],
    })

    stem = os.path.splitext(args.out)[0]
    lines = ["replication,method,mise,status"]
    for r in results:
        failed = dict(r.failures)
        values = iter(r.per_replication)
        for rep in range(args.reps):
            if rep in failed:
                lines.append(f"{rep},{r.method},,failed")
            else:
                lines.append(f"{rep},{r.method},{float(next(values))!r},ok")
    _write_atomic(stem + "_replications.csv", "\n".join(lines) + "\n")

    if args.emit_grids:
        tr = scenario.domain
        truth = lambda pts: (scenario.density(pts), tr.locate(pts) >= 0)
        _write_atomic(stem + "_true_density.csv", _grid_csv(tr, args.grid, truth))
        estimators_ = simbench.replication_estimators(
            scenario, args.n, args.seed, methods, spec=spec, folds=args.folds,
        )
        for method, est in estimators_.items():
            if isinstance(est, Exception):
                continue
            if hasattr(est, "density"):
                fn = est.density
            else:
                fn = lambda pts, est=est: (est(pts), tr.locate(pts) >= 0)
            _write_atomic(f"{stem}_{method}_density.csv", _grid_csv(tr, args.grid, fn))
    return EXIT_OK


def cmd_mesh_info(args):
    tr = _load_mesh(args)
    q = mesh_quality(tr)
    obj = {
        "schema_version": SCHEMA_VERSION,
        "N": tr.n_triangles,
        "n_vertices": tr.n_vertices,
        "area": tr.area,
        "mesh_size": q.mesh_size,
        "min_inradius": q.min_inradius,
        "beta_ratio": q.beta_ratio,
        "min_angle_deg": q.min_angle_deg,
    }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write_atomic(args.out, text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
