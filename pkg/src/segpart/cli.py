"""Command-line driver: ``segpart partition | ball | acf-check | catalog | verify``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, ball, partition
from .catalog import entry, list_entries
from .errors import SegpartError
from .io import (load_field, read_csv, save_field, save_mesh, write_csv, write_json, field_to_dict,
                 group_to_dict, mesh_recipe)
from .sphere import Field

CONFIG_ERRORS = ("UnknownId", "IncompatibleMesh", "ConfigError")


class ConfigError(SegpartError):
    pass


def parse_betas(text: str) -> list[float]:
    """``start:end:xF`` (geometric) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3 or not parts[2].startswith("x"):
            raise ConfigError(f"bad beta schedule {text!r}; expected start:end:xFactor")
        try:
            start, end, factor = float(parts[0]), float(parts[1]), float(parts[2][1:])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if start <= 0 or end < start or factor <= 1:
            raise ConfigError("need 0 < start <= end and factor > 1")
        out = []
        b = start
        while b <= end * (1 + 1e-12):
            out.append(b)
            b *= factor
        return out
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not vals:
        raise ConfigError("empty beta schedule")
    return vals


def _mesh_overrides(args) -> dict:
    out = {}
    for key in ("n", "level", "base", "n_lon", "n_lat"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def _stamp(out: Path, command: str, config: dict, mesh=None) -> None:
    doc = {"command": command, "version": __version__, "config": config}
    if mesh is not None:
        doc["mesh"] = mesh_recipe(mesh)
        doc["mesh_hash"] = mesh.content_hash()
    write_json(out / "config.json", doc)


def cmd_partition(args) -> int:
    e = entry(args.triplet)
    betas = parse_betas(args.betas)
    tr, mesh = e.make(**_mesh_overrides(args))
    opts = partition.PartitionOptions(tol=args.tol, seed=args.seed, n_seeds=args.seeds, max_iters=args.max_iters)
    if args.quick:
        betas = betas[:3]
        opts.n_seeds = 1
    out = Path(args.out)
    config = {"triplet": e.id, "betas": betas, "seed": args.seed, "seeds": opts.n_seeds, "tol": opts.tol,
              "max_iters": opts.max_iters, "mesh": mesh_recipe(mesh), "threads": args.threads}
    _stamp(out, "partition", config, mesh)
    save_mesh(out / "mesh.json", mesh)
    write_json(out / "group.json", group_to_dict(tr.group))
    save_field(out / "fields" / "witness.json", tr.witness)
    est = partition.beta_sweep(tr, mesh, betas, opts, workers=max(1, args.threads))
    for r in est.results:
        save_field(out / "fields" / f"beta_{r.beta:g}.json", r.field)
        write_json(out / "results" / f"beta_{r.beta:g}.json", {**r.summary(), "field": f"fields/beta_{r.beta:g}.json"})
    if est.best_field is not None:
        save_field(out / "fields" / "segregated_best.json", est.best_field)
    write_csv(out / "sweep.csv", est.rows(),
              ["beta", "ell_beta", "ell_upper", "lambda_beta", "interaction", "iterations", "residual"])
    inter = partition.interaction_bound_check(est.results)
    summary = {
        "triplet": e.id,
        "ell_upper": est.ell_upper,
        "ell_extrapolated": est.ell_extrapolated,
        "fit_slope": est.fit_slope,
        "ell_reference": e.ell_reference,
        "ell_betas": est.ell_betas,
        "betas": est.betas,
        "interaction_check": inter,
    }
    if e.ell_reference is not None:
        summary["lambda_identity_rel_error"] = partition.lambda_identity_check(est.results[-1], e.ell_reference, mesh.dim)
        summary["ell_rel_error"] = abs(est.ell_upper - e.ell_reference) / e.ell_reference
    write_json(out / "summary.json", summary)
    print(json.dumps({"triplet": e.id, "ell": est.ell_upper, "reference": e.ell_reference}))
    return 0


def cmd_ball(args) -> int:
    e = entry(args.triplet)
    tr, mesh = e.make(**_mesh_overrides(args))
    if args.boundary:
        phi = load_field(args.boundary, mesh)
    else:
        phi = tr.witness
    # boundary normalization: sum_i int phi_i^2 = 1
    phi = Field(mesh, phi.values / math.sqrt(float(mesh.masses(phi.values).sum())), "one_over_k")
    ell = args.ell if args.ell is not None else e.ell_reference
    if ell is None:
        ell = partition.evaluate_I_infty(mesh, phi)
    radii = ball.default_radii(args.shells)
    out = Path(args.out)
    config = {"triplet": e.id, "beta": args.beta, "shells": args.shells, "ell": ell, "boundary": args.boundary,
              "tol": args.tol, "seed": args.seed}
    _stamp(out, "ball", config, mesh)
    save_field(out / "boundary.json", phi)
    U = ball.solve_ball(tr, mesh, args.beta, phi, radii, ball.BallOptions(tol=args.tol))
    dU = ball.diagnostics(U)
    k = tr.k
    cols = ["r", "H", "E", "N"] + [f"J_{i + 1}" for i in range(k)]
    write_csv(out / "diagnostics_U.csv", dU.table(), cols)
    report = {"triplet": e.id, "beta": args.beta, "ell": ell, "iterations": U.meta["iterations"],
              "energy": U.meta["energy"], "energy_bound_ell": U.meta["energy"] <= ell + 1e-3,
              "almgren_monotonicity": ball.almgren_monotonicity_check(dU, 0.05),
              "dH_identity": ball.dH_identity_check(dU),
              "centre_values": U.values[:, 0, 0].tolist()}
    write_json(out / "report.json", report)
    rb = ball.find_r_beta(U)
    V = ball.blow_up_rescale(U, rb)
    dV = ball.diagnostics(V)
    write_csv(out / "diagnostics_V.csv", dV.table(), cols)
    report.update({
        "r_beta": rb,
        "H_V_1": float(dV.H[int(np.argmin(np.abs(V.radii - 1.0)))]),
        "almgren_bound": ball.almgren_bound_check(dV, ell),
        "doubling": ball.doubling_check(dV, ell),
        "acf": {k2: v for k2, v in ball.acf_check(dV, ell, 1.0, args.c_max).items() if k2 in ("C", "passed", "C_max")},
        "growth_rate": ball.growth_rate_estimate(dV),
    })
    write_json(out / "report.json", report)
    print(json.dumps({"r_beta": rb, "C": report["acf"]["C"], "N_max": report["almgren_bound"]["max_N"]}))
    return 0


def cmd_acf(args) -> int:
    cols = read_csv(args.diagnostics)
    if "r" not in cols:
        raise ConfigError("diagnostics CSV needs an 'r' column")
    J = np.array([cols[c] for c in sorted(c for c in cols if c.startswith("J_"))])
    diag = ball.RadialDiagnostics(cols["r"], cols["H"], cols["E"], cols["N"], J, np.zeros_like(cols["r"]), 1.0, 0)
    rep = ball.acf_check(diag, args.ell, args.r_min, args.c_max)
    rep = {k: v for k, v in rep.items() if k in ("C", "passed", "C_max", "reason")}
    if args.out:
        write_json(Path(args.out) / "acf.json", rep)
    print(json.dumps(rep))
    return 0 if rep["passed"] else 1


def cmd_catalog(args) -> int:
    if args.action == "list":
        for d in list_entries():
            ref = d["ell_reference"]
            print(f"{d['id']:<16} k={d['k']}  ell={ref}  [{d['provenance']}]  mesh={d['mesh']}")
        return 0
    if not args.id:
        raise ConfigError("catalog show needs an id")
    e = entry(args.id)
    doc = e.describe()
    doc["group_order"] = e.group().order
    print(json.dumps(doc, indent=2))
    if args.out:
        tr, mesh = e.make()
        out = Path(args.out)
        write_json(out / "entry.json", doc)
        write_json(out / "group.json", group_to_dict(tr.group))
        write_json(out / "witness.json", field_to_dict(tr.witness))
    return 0


def cmd_verify(args) -> int:
    from .verify import results_table, run_verify, as_records

    crit = args.criterion or None
    results = run_verify(quick=args.quick, criteria=crit, seed=args.seed, workers=max(1, args.threads))
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    if args.out:
        out = Path(args.out)
        write_csv(out / "verify.csv", results_table(results))
        write_json(out / "verify.json", as_records(results))
    return 0 if n_fail == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--quick", action="store_true")

    p = argparse.ArgumentParser(prog="segpart", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def mesh_flags(sp):
        sp.add_argument("--base", choices=["circle", "icosahedron", "octahedron", "latlong"])
        sp.add_argument("--n", type=int, help="circle vertices")
        sp.add_argument("--level", type=int, help="subdivision level")
        sp.add_argument("--n-lon", dest="n_lon", type=int)
        sp.add_argument("--n-lat", dest="n_lat", type=int)

    sp = sub.add_parser("partition", parents=[common], help="beta sweep for ell(k, G, h)")
    sp.add_argument("--triplet", required=True)
    sp.add_argument("--betas", default="10:2560:x4")
    sp.add_argument("--seeds", type=int, default=3)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=5000)
    mesh_flags(sp)
    sp.set_defaults(func=cmd_partition, default_out="runs/partition")

    sb = sub.add_parser("ball", parents=[common], help="ball solve, blow-up and diagnostics")
    sb.add_argument("--triplet", required=True)
    sb.add_argument("--beta", type=float, default=400.0)
    sb.add_argument("--shells", type=int, default=96)
    sb.add_argument("--boundary", default=None, help="field file; defaults to the catalog witness")
    sb.add_argument("--ell", type=float, default=None)
    sb.add_argument("--tol", type=float, default=1e-10)
    sb.add_argument("--c-max", dest="c_max", type=float, default=50.0)
    mesh_flags(sb)
    sb.set_defaults(func=cmd_ball, default_out="runs/ball")

    sa = sub.add_parser("acf-check", parents=[common], help="ACF drift constant from a diagnostics CSV")
    sa.add_argument("--diagnostics", required=True)
    sa.add_argument("--ell", type=float, required=True)
    sa.add_argument("--r-min", dest="r_min", type=float, default=1.0)
    sa.add_argument("--c-max", dest="c_max", type=float, default=50.0)
    sa.set_defaults(func=cmd_acf, default_out=None)

    sc = sub.add_parser("catalog", parents=[common], help="list or show built-in triplets")
    sc.add_argument("action", choices=["list", "show"])
    sc.add_argument("id", nargs="?")
    sc.set_defaults(func=cmd_catalog, default_out=None)

    sv = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    sv.add_argument("--criterion", action="append", help="criterion number or key; repeatable")
    sv.set_defaults(func=cmd_verify, default_out=None)
    return p


def _error_record(exc: BaseException, code: int) -> dict:
    name = exc.code if isinstance(exc, SegpartError) else type(exc).__name__
    return {"error": name, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None and args.default_out is not None:
        args.out = args.default_out
    t0 = time.perf_counter()
    try:
        return args.func(args)
    except (SegpartError, ValueError, KeyError, FileNotFoundError) as exc:
        config_error = (isinstance(exc, SegpartError) and exc.code in CONFIG_ERRORS) or \
            isinstance(exc, (ValueError, KeyError, FileNotFoundError)) and not isinstance(exc, SegpartError)
        code = 2 if config_error else 1
        rec = _error_record(exc, code)
        rec["seconds"] = time.perf_counter() - t0
        print(json.dumps(rec), file=sys.stderr)
        if args.out:
            write_json(Path(args.out) / "error.json", rec)
        return code


if __name__ == "__main__":
    sys.exit(main())
