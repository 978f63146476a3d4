"""Batch command-line front door.

Exit codes: 0 success, 2 verification failure, 3 non-convergence,
4 I/O or configuration error.
"""
from __future__ import annotations

import json
import logging
import os
import sys

import click
import numpy as np

from . import geometry, hn, pwa, theta
from .config import DEFAULT_TOLERANCES, FixedPointConfig, Tolerances
from .convexity import builtin_suite, determinant, frobenius_power, jensen_gap
from .fixedpoint import find_fixed_point, verify_joint_laminate
from .serialization import (FILE_EXTENSION, ArtifactBundle, HashMismatchError,
                            SchemaVersionError, read_bundle, write_bundle)

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_NONCONVERGED = 3
EXIT_CONFIG = 4

# keep the exit-code contract: usage problems are configuration errors
click.UsageError.exit_code = EXIT_CONFIG

log = logging.getLogger("lamlab")

MAP_KINDS = {
    "random": pwa.random_map,
    "equal": pwa.equal_components_map,
    "scaled": pwa.scaled_components_map,
}


def _setup_logging():
    level = os.environ.get("LAMLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


def _fail_config(message):
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_CONFIG)


def _write(bundle, out, default_stem):
    path = out or (default_stem + FILE_EXTENSION)
    try:
        write_bundle(bundle, path)
    except OSError as exc:
        _fail_config(f"cannot write {path}: {exc}")
    click.echo(path)
    return path


def _read(path):
    try:
        return read_bundle(path)
    except (OSError, json.JSONDecodeError, SchemaVersionError,
            HashMismatchError, KeyError) as exc:
        _fail_config(f"cannot read {path}: {exc}")


def _mesh(n, refine):
    try:
        return geometry.build_unit_cube_triangulation(n, refine)
    except (geometry.UnsupportedDimensionError, geometry.MeshSizeError) as exc:
        _fail_config(str(exc))


def _sample(n, refine, seed, map_kind):
    tri = _mesh(n, refine)
    rng = np.random.default_rng(seed)
    pmap = MAP_KINDS[map_kind](tri, rng)
    return tri, pmap


def _tolerances(tol_parallel):
    if tol_parallel is None:
        return DEFAULT_TOLERANCES
    return Tolerances(parallel=tol_parallel)


def common_options(fn):
    fn = click.option("--n", default=2, show_default=True,
                      help="Space dimension N.")(fn)
    fn = click.option("--refine", default=0, show_default=True,
                      help="Mesh refinement level r.")(fn)
    fn = click.option("--seed", default=0, show_default=True)(fn)
    fn = click.option("--out", default=None, help="Output bundle path.")(fn)
    return fn


@click.group()
def main():
    """Numerical laboratory for laminate decompositions of two-component
    periodic piecewise-affine maps."""
    _setup_logging()


@main.command()
@common_options
def triangulate(n, refine, seed, out):
    """Build and validate a periodic mesh; write it as a bundle."""
    tri = _mesh(n, refine)
    report = geometry.validate(tri)
    if not report.ok:
        click.echo("mesh validation failed:", err=True)
        for v in report.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(EXIT_VERIFY)
    bundle = ArtifactBundle({"triangulation": geometry.to_json(tri)},
                            seed=seed, config={"command": "triangulate",
                                               "n": n, "refine": refine})
    _write(bundle, out, f"mesh-n{n}-r{refine}")


@main.command("sample-map")
@common_options
@click.option("--map-kind", type=click.Choice(sorted(MAP_KINDS)),
              default="random", show_default=True)
def sample_map(n, refine, seed, out, map_kind):
    """Sample a seeded periodic map on a fresh mesh."""
    tri, pmap = _sample(n, refine, seed, map_kind)
    bundle = ArtifactBundle(
        {"triangulation": geometry.to_json(tri), "map": pwa.map_to_json(pmap)},
        seed=seed, config={"command": "sample-map", "n": n, "refine": refine,
                           "map_kind": map_kind})
    _write(bundle, out, f"map-n{n}-r{refine}-s{seed}")


@main.command()
@common_options
@click.option("--map-kind", type=click.Choice(sorted(MAP_KINDS)),
              default="random", show_default=True)
@click.option("--in", "in_path", default=None,
              help="Bundle with a map to extract from.")
def extract(n, refine, seed, out, map_kind, in_path):
    """Extract the discrete gradient measure of a map."""
    tri, pmap, cfg = _load_map(n, refine, seed, map_kind, in_path, "extract")
    measure = pwa.extract_measure(pmap)
    jump = pwa.check_jump_compatibility(measure, tri)
    if not jump.ok:
        click.echo("jump compatibility failed:", err=True)
        for v in jump.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(EXIT_VERIFY)
    bundle = ArtifactBundle(
        {"triangulation": geometry.to_json(tri), "map": pwa.map_to_json(pmap),
         "measure": pwa.measure_to_json(measure)},
        seed=seed, config=cfg)
    _write(bundle, out, f"measure-n{n}-r{refine}-s{seed}")


def _load_map(n, refine, seed, map_kind, in_path, command):
    cfg = {"command": command, "n": n, "refine": refine, "map_kind": map_kind}
    if in_path:
        data = _read(in_path)
        try:
            tri = geometry.from_json(data.payloads["triangulation"])
            pmap = pwa.map_from_json(data.payloads["map"], tri)
        except KeyError as exc:
            _fail_config(f"{in_path} lacks payload {exc}")
        cfg = dict(data.config, command=command)
        return tri, pmap, cfg
    tri, pmap = _sample(n, refine, seed, map_kind)
    return tri, pmap, cfg


@main.command()
@common_options
@click.option("--map-kind", type=click.Choice(sorted(MAP_KINDS)),
              default="random", show_default=True)
@click.option("--depth", default=None, type=int,
              help="Tree depth m (default: minimal feasible).")
@click.option("--in", "in_path", default=None)
def select(n, refine, seed, out, map_kind, depth, in_path):
    """Build the tuple selection and weight polytope for a map."""
    tri, pmap, cfg = _load_map(n, refine, seed, map_kind, in_path, "select")
    measure = pwa.extract_measure(pmap)
    try:
        sel = theta.select_tuples(measure, tri, m=depth)
    except (theta.DepthError, theta.MeshStructureError,
            theta.SelectionInfeasibleError) as exc:
        _fail_config(str(exc))
    cfg["depth"] = sel.m
    bundle = ArtifactBundle(
        {"triangulation": geometry.to_json(tri), "map": pwa.map_to_json(pmap),
         "measure": pwa.measure_to_json(measure),
         "selection": theta.selection_to_json(sel)},
        seed=seed, config=cfg)
    _write(bundle, out, f"selection-n{n}-r{refine}-s{seed}")


@main.command()
@common_options
@click.option("--map-kind", type=click.Choice(sorted(MAP_KINDS)),
              default="random", show_default=True)
@click.option("--depth", default=None, type=int)
@click.option("--in", "in_path", default=None)
@click.option("--exact", is_flag=True,
              help="Validate the certificate in exact rational arithmetic "
                   "when the converged weights are rational.")
@click.option("--max-iter", default=200, show_default=True)
@click.option("--max-restarts", default=5, show_default=True)
@click.option("--max-depth-escalations", default=1, show_default=True)
@click.option("--tol-parallel", default=None, type=float)
def decompose(n, refine, seed, out, map_kind, depth, in_path, exact,
              max_iter, max_restarts, max_depth_escalations, tol_parallel):
    """Full pipeline: extract, select, fixed-point search, verification."""
    if max_iter < 1 or max_restarts < 0 or max_depth_escalations < 0:
        _fail_config("iteration/restart/escalation caps must be positive")
    tri, pmap, cfg = _load_map(n, refine, seed, map_kind, in_path, "decompose")
    measure = pwa.extract_measure(pmap)
    tols = _tolerances(tol_parallel)
    try:
        sel = theta.select_tuples(measure, tri, m=depth)
    except (theta.DepthError, theta.MeshStructureError,
            theta.SelectionInfeasibleError) as exc:
        _fail_config(str(exc))
    fp_cfg = FixedPointConfig(max_iter=max_iter, max_restarts=max_restarts,
                              max_depth_escalations=max_depth_escalations,
                              seed=seed, tolerances=tols)
    report = find_fixed_point(sel, fp_cfg)
    payloads = {
        "triangulation": geometry.to_json(tri),
        "map": pwa.map_to_json(pmap),
        "measure": pwa.measure_to_json(measure),
        "selection": theta.selection_to_json(report.selection or sel),
        "fixed_point": _fp_report_json(report),
    }
    ok = report.outcome in ("converged", "depth-escalated")
    if ok and exact:
        # re-derive the certificate on the rational path when possible
        rsel = report.selection or sel
        t_exact = _rationalize(report.t_star, rsel)
        if t_exact is not None:
            cert, vrep = verify_joint_laminate(t_exact, rsel, tols)
            if vrep.ok:
                report.certificate = cert
    if ok and report.certificate is not None:
        payloads["certificate"] = hn.certificate_to_json(report.certificate)
    cfg.update({"depth": (report.selection or sel).m, "exact": bool(exact),
                "max_iter": max_iter, "max_restarts": max_restarts,
                "max_depth_escalations": max_depth_escalations})
    bundle = ArtifactBundle(payloads, seed=seed, config=cfg)
    _write(bundle, out, f"decomposition-n{n}-r{refine}-s{seed}")
    if not ok:
        click.echo(f"fixed-point search failed: {report.failure_reason}",
                   err=True)
        sys.exit(EXIT_NONCONVERGED)


def _rationalize(t_star, sel):
    """Exact weights when the iterate coincides with the reference point."""
    tb = np.array([float(v) for v in sel.t_bar])
    if np.max(np.abs(np.asarray(t_star, float) - tb)) <= 1e-12:
        return list(sel.t_bar)
    return None


def _fp_report_json(report):
    return {
        "outcome": report.outcome,
        "iterations": report.iterations,
        "restarts": report.restarts,
        "escalations": report.escalations,
        "history": [repr(float(h)) for h in report.history],
        "t_star": [repr(float(v)) for v in report.t_star]
        if report.t_star is not None else None,
        "final_distance": repr(float(report.history[-1]))
        if report.history else "0.0",
        "failure_reason": report.failure_reason,
    }


@main.command()
@click.option("--in", "in_path", required=True)
@click.option("--exact", is_flag=True, help="Exact rational validation.")
@click.option("--tol-parallel", default=None, type=float)
def verify(in_path, exact, tol_parallel):
    """Re-validate the certificate stored in a bundle."""
    data = _read(in_path)
    if "certificate" not in data.payloads:
        _fail_config(f"{in_path} carries no certificate")
    cert = hn.certificate_from_json(data.payloads["certificate"])
    tols = _tolerances(tol_parallel)
    tol = 0.0 if exact else max(tols.parallel, 1e-9)
    report = hn.validate_certificate(cert, hn.RANK_ONE_CONE, tol=tol)
    if not report.ok:
        click.echo("certificate validation failed:", err=True)
        for v in report.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(EXIT_VERIFY)
    click.echo("certificate ok")


@main.command()
@click.option("--in", "in_path", default=None,
              help="Bundle with a measure (default: sample one).")
@common_options
@click.option("--quadratics", default=10, show_default=True,
              help="Random quadratic integrands per kind.")
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="table", show_default=True)
def jensen(in_path, n, refine, seed, out, quadratics, fmt):
    """Jensen-gap suite over the builtin integrands."""
    if in_path:
        data = _read(in_path)
        try:
            measure = pwa.measure_from_json(data.payloads["measure"])
        except KeyError:
            _fail_config(f"{in_path} carries no measure")
        n_cols = len(measure.atoms[0][1][0])
    else:
        tri, pmap = _sample(n, refine, seed, "random")
        measure = pwa.extract_measure(pmap)
        n_cols = n
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for psi in builtin_suite(rng, n_cols, random_quadratics=quadratics):
        gap = jensen_gap(psi, measure)
        rows.append({"function": psi.name, "tag": psi.tag, "gap": repr(gap)})
        if psi.tag in ("convex", "rank-one-convex") and gap < worst:
            worst = gap
    det_gap = abs(jensen_gap(determinant(), measure)) if n_cols == 2 else 0.0
    result = {"rows": rows, "worst_gap": repr(worst),
              "abs_det_gap": repr(det_gap)}
    if fmt == "json":
        click.echo(json.dumps(result, sort_keys=True, indent=2))
    else:
        for r in rows:
            click.echo(f"{r['function']:>24}  {r['tag']:>16}  {r['gap']}")
        click.echo(f"worst gap {worst!r}; |det gap| {det_gap!r}")
    if worst < -1e-9 or det_gap > 1e-9:
        click.echo("Jensen violation detected", err=True)
        sys.exit(EXIT_VERIFY)


@main.command("oracle-compare")
@click.option("--count", default=20, show_default=True)
@click.option("--n", default=2, show_default=True)
@click.option("--refine", default=0, show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="First seed; instances use seed..seed+count-1.")
@click.option("--max-depth", default=4, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="table", show_default=True)
def oracle_compare(count, n, refine, seed, max_depth, fmt):
    """Pipeline vs exhaustive rational search on small instances."""
    tri = _mesh(n, refine)
    rows = []
    agree = 0
    for s in range(seed, seed + count):
        rng = np.random.default_rng(s)
        pmap = pwa.random_map(tri, rng)
        measure = pwa.extract_measure(pmap)
        sel = theta.select_tuples(measure, tri)
        rep = find_fixed_point(sel, FixedPointConfig(seed=s))
        pipeline_ok = rep.outcome in ("converged", "depth-escalated")
        try:
            cert = hn.brute_force_laminate_search(
                [(w, uv) for w, uv in measure.atoms], max_depth=max_depth)
        except hn.SearchSizeError as exc:
            _fail_config(str(exc))
        oracle_ok = cert is not None
        if oracle_ok:
            oracle_ok = hn.validate_certificate(
                cert, hn.RANK_ONE_CONE, tol=0.0).ok
        match = pipeline_ok == oracle_ok
        agree += match
        rows.append({"seed": s, "pipeline": pipeline_ok, "oracle": oracle_ok,
                     "agree": match})
    result = {"count": count, "agree": agree, "rows": rows}
    if fmt == "json":
        click.echo(json.dumps(result, sort_keys=True, indent=2))
    else:
        for r in rows:
            click.echo(f"seed {r['seed']:>3}  pipeline={r['pipeline']}  "
                       f"oracle={r['oracle']}  agree={r['agree']}")
        click.echo(f"agreement {agree}/{count}")
    if agree != count:
        sys.exit(EXIT_VERIFY)


@main.command()
@click.option("--in", "in_path", required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="table", show_default=True)
def report(in_path, fmt):
    """Summarize a bundle."""
    data = _read(in_path)
    summary = {
        "schema_version": data.schema_version,
        "seed": data.seed,
        "config": data.config,
        "payloads": sorted(data.payloads),
        "hash": data.content_hash,
    }
    fp = data.payloads.get("fixed_point")
    if fp:
        summary["outcome"] = fp["outcome"]
        summary["iterations"] = fp["iterations"]
        summary["final_distance"] = fp["final_distance"]
    if fmt == "json":
        click.echo(json.dumps(summary, sort_keys=True, indent=2))
    else:
        for k in sorted(summary):
            click.echo(f"{k}: {summary[k]}")


if __name__ == "__main__":
    main()
