"""Command-line front end: ``ksh gen|energy|solve|multistart|verify|sweep-r``.

Every report is JSON (or CSV for tables) with a manifest recording the
resolved parameters, input hashes, version and seed.  Exit codes: 0 on
success, 2 on invalid input, 3 when a check inside ``verify`` fails.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from . import io as kio
from .benchmarks import chain_benchmark, smooth_sphere_values
from .comparison import (
    DEFAULT_SCALES, convexity_defect, defect_scaling, midpoint_energy_defect, radial_energy_defect,
)
from .domain import build_graph_domain, build_grid_domain
from .energy import density_estimate, dirichlet_energy, modified_energy, total_energy
from .sampling import common_trace_partner, random_lipschitz_map, random_unit_interval_map
from .solver import SolverConfig, geodesic_init, multistart_uniqueness, solve
from .targets import Euclidean, RegularBall, Sphere

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 2, 3


class CheckFailed(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    input_hashes: dict = field(default_factory=dict)
    tool_version: str = __version__
    seed: int = 0

    def as_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "input_hashes": self.input_hashes,
                "tool_version": self.tool_version, "seed": self.seed}


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("KSH_THREADS")
    return max(1, int(env)) if env else 1


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from exc


def _manifest(args, inputs=()) -> RunManifest:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and v is not None}
    hashes = {str(p): kio.file_sha256(p) for p in inputs if p}
    return RunManifest(args.command, config, hashes, __version__, int(getattr(args, "seed", 0) or 0))


def _emit(args, manifest: RunManifest, report: dict, table=None):
    fmt = getattr(args, "format", "json")
    out = getattr(args, "out", None)
    if fmt == "csv" and table is not None:
        buf = _stdio.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table[0])
        for row in table[1:]:
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
        text = buf.getvalue()
    else:
        text = kio.dumps({"manifest": manifest.as_dict(), "report": report})
    if out:
        Path(out).write_text(text)
        sys.stdout.write(kio.dumps({"manifest": manifest.as_dict()}))
    else:
        sys.stdout.write(text)


def _load_problem(args, need_trace=False, need_map=False):
    dom = kio.load_domain(args.domain)
    tgt, ball = kio.load_target(args.target)
    trace = kio.load_trace(args.trace, dom, tgt, ball) if need_trace else None
    u = kio.load_map(args.map, dom, tgt, ball) if need_map else None
    return dom, tgt, ball, trace, u


# -- gen --------------------------------------------------------------------

def _write_problem(outdir: Path, dom, ball, trace, edges=None):
    outdir.mkdir(parents=True, exist_ok=True)
    kio.write_json(kio.domain_to_doc(dom, edges), outdir / "domain.json")
    kio.write_json(kio.target_to_doc(ball.target, ball), outdir / "target.json")
    kio.write_json(kio.trace_to_doc(dom, trace), outdir / "trace.json")
    init = geodesic_init(dom, trace, ball, "center")
    kio.write_json(kio.map_to_doc(init), outdir / "init_map.json")
    return [outdir / f for f in ("domain.json", "target.json", "trace.json", "init_map.json")]


def cmd_gen(args):
    outdir = Path(args.out_dir)
    rho = args.rho
    if args.generator == "grid":
        if args.n < 2:
            raise ValueError("--n must be at least 2")
        h = 1.0 / (args.n - 1)
        collar = args.collar if args.collar is not None else 3 * h
        dom = build_grid_domain(args.dim, args.n, (0.0, 1.0), collar)
        ball = RegularBall(Sphere(2), np.array([0.0, 0.0, 1.0]), rho)
        vals = smooth_sphere_values(dom.coordinates, ball, args.amplitude)
        files = _write_problem(outdir, dom, ball, vals[dom.exterior])
    elif args.generator == "chain":
        if args.boundary:
            p, q = (np.array(_floats(b)) for b in args.boundary)
            bench = chain_benchmark(args.n, rho=rho, r_factor=args.r_factor, p=p, q=q)
        else:
            bench = chain_benchmark(args.n, distance=args.distance, rho=rho, r_factor=args.r_factor)
        dom = bench.domain
        files = _write_problem(outdir, dom, bench.ball, bench.trace)
        kio.write_json({"values": bench.oracle}, outdir / "oracle_map.json")
        files.append(outdir / "oracle_map.json")
    else:
        rng = np.random.default_rng(args.seed)
        pts = rng.uniform(-0.2, 1.2, size=(args.n, 2))
        k = min(args.neighbors + 1, args.n)
        dist, idx = cKDTree(pts).query(pts, k=k)
        edges = sorted({(int(min(i, j)), int(max(i, j)), float(d))
                        for i in range(args.n) for j, d in zip(idx[i, 1:], dist[i, 1:])})
        interior = [i for i in range(args.n) if np.all((pts[i] >= 0) & (pts[i] <= 1))]
        dom = build_graph_domain(edges, interior, np.full(args.n, 1.0 / args.n), ids=list(range(args.n)))
        ball = RegularBall(Sphere(2), np.array([0.0, 0.0, 1.0]), rho)
        vals = smooth_sphere_values(pts, ball, args.amplitude)
        files = _write_problem(outdir, dom, ball, vals[dom.exterior], edges=edges)
    report = {"files": [str(f) for f in files], "n_points": dom.n,
              "n_interior": int(dom.interior.sum())}
    _emit(args, _manifest(args), report)


# -- energy, solve, multistart ---------------------------------------------

def cmd_energy(args):
    dom, tgt, ball, _, u = _load_problem(args, need_map=True)
    rep = total_energy(u, args.r)
    report = {"r": args.r, "total": rep.total, "dirichlet_total": dirichlet_energy(u, args.r)}
    inputs = [args.domain, args.target, args.map]
    if args.per_point:
        report["per_point_ks"] = rep.per_point_ks
    if args.modified:
        if args.alpha is None:
            raise ValueError("--modified needs --alpha")
        v, w = (kio.load_map(f, dom, tgt, ball) for f in args.modified)
        mod = modified_energy(u, v, w, args.alpha, args.r)
        report["modified"] = {"alpha": args.alpha, "total": mod.total,
                              "max_excluded_mass_fraction": float(mod.excluded_mass_fraction.max())}
        if args.per_point:
            report["modified"]["per_point_ks"] = mod.per_point_ks
        inputs += list(args.modified)
    _emit(args, _manifest(args, inputs), report)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(r=args.r, max_sweeps=args.max_sweeps, energy_tol=args.energy_tol,
                        move_tol=args.move_tol, seed=args.seed, method=args.method,
                        relaxation=args.relaxation, objective=args.objective)


def cmd_solve(args):
    dom, tgt, ball, trace, _ = _load_problem(args, need_trace=True)
    if ball is None:
        raise ValueError("the target file must specify a regular ball (center, rho)")
    u0 = geodesic_init(dom, trace, ball, args.init)
    res = solve(u0, _solver_config(args), trace=trace)
    report = {"converged": res.converged, "sweeps_used": res.sweeps_used,
              "initial_energy": res.initial_energy, "energy_trace": res.energy_trace,
              "cauchy_trace": res.cauchy_trace, "projections": res.projections,
              "max_moves": res.max_moves, "map": kio.map_to_doc(res.map)}
    _emit(args, _manifest(args, [args.domain, args.target, args.trace]), report)


def cmd_multistart(args):
    dom, tgt, ball, trace, _ = _load_problem(args, need_trace=True)
    if ball is None:
        raise ValueError("the target file must specify a regular ball (center, rho)")
    rep = multistart_uniqueness(dom, trace, ball, _solver_config(args), args.starts, args.perturb,
                                threads=_threads(args))
    report = {"max_l2": rep.max_l2, "max_cauchy": rep.max_cauchy,
              "closing_bound_holds": rep.closing_bound_holds,
              "pairwise_l2": rep.pairwise_l2, "pairwise_cauchy": rep.pairwise_cauchy,
              "unconverged": rep.unconverged,
              "sweeps_used": [r.sweeps_used for r in rep.results]}
    _emit(args, _manifest(args, [args.domain, args.target, args.trace]), report)


# -- verify -----------------------------------------------------------------

def _verify_estimate(args):
    scales = _floats(args.scales) if args.scales else list(DEFAULT_SCALES)
    tgt = Sphere(2) if args.target_type == "sphere" else Euclidean(3)
    rep = defect_scaling(args.kind, scales, args.samples, args.seed, tgt, args.family, _threads(args))
    report = rep.as_dict()
    checks = {}
    if args.target_type == "sphere":
        checks["slope_at_least_2.8"] = bool(np.isfinite(rep.slope) and rep.slope >= 2.8)
    elif args.kind == "estimateI":
        checks["flat_positive_part_below_1e-12"] = bool(np.all(rep.max_positive <= 1e-12))
    report["checks"] = checks
    table = [["scale", "p50", "p95", "max", "fraction_positive"]]
    table += [[float(s), float(a), float(b), float(c), float(d)] for s, a, b, c, d in
              zip(rep.scales, rep.p50, rep.p95, rep.max_positive, rep.fraction_positive)]
    return report, table, checks


def _verify_maps(args):
    r_values = _floats(args.r_sweep)
    if args.target_type == "sphere":
        tgt = Sphere(2)
        ball = RegularBall(tgt, np.array([0.0, 0.0, 1.0]), args.rho)
    else:
        tgt = Euclidean(2)
        ball = RegularBall(tgt, np.zeros(2), args.rho)
    h = 1.0 / (args.grid_n - 1)
    dom = build_grid_domain(2, args.grid_n, (0.0, 1.0), max(r_values) + h)
    rows, pos = [], []
    for k in range(args.pairs):
        u, _ = random_lipschitz_map(dom, ball, [args.seed, k, 0])
        if args.kind == "radial":
            eta, _ = random_unit_interval_map(dom, [args.seed, k, 1])
        else:
            v, _ = common_trace_partner(u, [args.seed, k, 1])
        vals = []
        for r in r_values:
            if args.kind == "midpoint":
                vals.append((midpoint_energy_defect(u, v, r).max_positive, None))
            elif args.kind == "radial":
                vals.append((radial_energy_defect(u, eta, r).max_positive, None))
            else:
                c = convexity_defect(u, v, r)
                vals.append((max(c.defect_total, 0.0), c.components["rhs"]))
        pos.append(vals)
        for r, (p, rhs) in zip(r_values, vals):
            rows.append([k, r, p] + ([rhs] if rhs is not None else []))
    checks = {}
    pp = np.array([[p for p, _ in vals] for vals in pos])
    if args.target_type == "euclidean" and args.kind in ("midpoint", "convexity"):
        checks["flat_positive_part_below_1e-12"] = bool(np.all(pp <= 1e-12))
    elif args.kind == "convexity":
        rhs_last = np.array([vals[-1][1] for vals in pos])
        checks["nonincreasing_per_pair"] = bool(np.all(np.diff(pp, axis=1) <= 0))
        checks["final_within_10_percent"] = bool(np.all(pp[:, -1] <= 0.1 * rhs_last))
    header = ["pair", "r", "positive_part"] + (["half_sum_energy"] if args.kind == "convexity" else [])
    report = {"kind": args.kind, "r_values": r_values, "pairs": args.pairs,
              "positive_part": pp, "checks": checks}
    return report, [header] + rows, checks


def cmd_verify(args):
    if args.kind in ("estimateI", "estimateII"):
        report, table, checks = _verify_estimate(args)
    else:
        report, table, checks = _verify_maps(args)
    _emit(args, _manifest(args), report, table)
    if not all(checks.values()):
        raise CheckFailed(", ".join(k for k, v in checks.items() if not v))


def cmd_sweep_r(args):
    dom, tgt, ball, _, u = _load_problem(args, need_map=True)
    r_values = _floats(args.r_values)
    rows = [["r", "total_energy", "dirichlet_energy"]]
    energies = []
    for r in r_values:
        e, ed = total_energy(u, r).total, dirichlet_energy(u, r)
        energies.append({"r": r, "total_energy": e, "dirichlet_energy": ed})
        rows.append([r, e, ed])
    report = {"r_values": r_values, "energies": energies}
    if isinstance(tgt, Euclidean) and tgt.dim == 1 and len(r_values) >= 2:
        dens = density_estimate(u, r_values)
        ok = np.isfinite(dens.estimate)
        report["density"] = {"usable_points": int(ok.sum()),
                             "median": float(np.median(dens.estimate[ok])) if ok.any() else None,
                             "rms_fit_residual": float(np.median(dens.residual[ok])) if ok.any() else None}
    _emit(args, _manifest(args, [args.domain, args.target, args.map]), report, rows)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksh", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="worker cap (default $KSH_THREADS or 1)")
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")

    def problem(p, trace=False, map_=False):
        p.add_argument("--domain", required=True)
        p.add_argument("--target", required=True)
        if trace:
            p.add_argument("--trace", required=True)
        if map_:
            p.add_argument("--map", required=True)

    def solver_flags(p):
        p.add_argument("--r", type=float, required=True)
        p.add_argument("--max-sweeps", type=int, default=5000)
        p.add_argument("--energy-tol", type=float, default=1e-13)
        p.add_argument("--move-tol", type=float, default=1e-10)
        p.add_argument("--method", choices=["gauss-seidel", "jacobi"], default="gauss-seidel")
        p.add_argument("--relaxation", type=float, default=1.0)
        p.add_argument("--objective", choices=["dirichlet", "interior"], default="dirichlet")

    p = sub.add_parser("gen", help="write benchmark domain/target/trace files")
    p.add_argument("generator", choices=["grid", "graph", "chain"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--collar", type=float, default=None)
    p.add_argument("--rho", type=float, default=1.2)
    p.add_argument("--amplitude", type=float, default=0.9)
    p.add_argument("--distance", type=float, default=1.6)
    p.add_argument("--r-factor", type=float, default=2.5)
    p.add_argument("--boundary", nargs=2, metavar=("P", "Q"), default=None)
    p.add_argument("--neighbors", type=int, default=6)
    p.add_argument("--out-dir", default=".")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("energy", help="approximate energy of a map")
    problem(p, map_=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--per-point", action="store_true")
    p.add_argument("--modified", nargs=2, metavar=("V", "W"), default=None)
    p.add_argument("--alpha", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("solve", help="solve the discrete Dirichlet problem")
    problem(p, trace=True)
    solver_flags(p)
    p.add_argument("--init", choices=["center", "nearest"], default="center")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("multistart", help="solve from random starts and compare")
    problem(p, trace=True)
    solver_flags(p)
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--perturb", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_multistart)

    p = sub.add_parser("verify", help="comparison-inequality checks")
    p.add_argument("kind", choices=["estimateI", "estimateII", "midpoint", "radial", "convexity"])
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--scales", default=None)
    p.add_argument("--family", choices=["degenerate", "generic"], default="degenerate")
    p.add_argument("--target-type", choices=["sphere", "euclidean"], default="sphere")
    p.add_argument("--r-sweep", default="0.2,0.1,0.05")
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--grid-n", type=int, default=64)
    p.add_argument("--rho", type=float, default=1.2)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep-r", help="energies of a map over several scales")
    problem(p, map_=True)
    p.add_argument("--r-values", required=True)
    common(p)
    p.set_defaults(func=cmd_sweep_r)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except kio.ValidationFailure as exc:
        for err in exc.errors:
            print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
