"""Acceptance suite: each criterion is a function of a shared, lazily filled context."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ball, partition
from .catalog import entry
from .sphere import Field, build_icosphere_mesh, build_transports
from .symmetry import project_values

BETAS = [10.0, 40.0, 160.0, 640.0, 2560.0]
BALL_BETA = 400.0
BALL_SHELLS = 96
TOTAL_BUDGET = 45 * 60.0


@dataclass
class CriterionResult:
    number: int
    key: str
    title: str
    passed: bool
    measured: object
    reference: object
    tolerance: object
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.number:2d} {self.key:<14} measured={_fmt(self.measured)} "
                f"reference={_fmt(self.reference)} tol={_fmt(self.tolerance)} ({self.seconds:.1f} s)")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


class Context:
    """Caches sweeps and ball solves shared by several criteria."""

    def __init__(self, seed: int = 0, workers: int = 1):
        self.seed = seed
        self.workers = workers
        self._sweeps: dict = {}
        self._ball = None

    def sweep(self, cid: str):
        if cid not in self._sweeps:
            e = entry(cid)
            tr, mesh = e.make()
            t0 = time.perf_counter()
            est = partition.beta_sweep(tr, mesh, BETAS, partition.PartitionOptions(seed=self.seed),
                                       workers=self.workers)
            self._sweeps[cid] = (e, tr, mesh, est, time.perf_counter() - t0)
        return self._sweeps[cid]

    def xyz_ball(self):
        if self._ball is None:
            e = entry("xyz_r3")
            tr, mesh = e.make()
            # eigen-partition trace with sum_i int phi_i^2 = 1
            phi = Field(mesh, tr.witness.values / math.sqrt(tr.k), "one_over_k")
            t0 = time.perf_counter()
            U = ball.solve_ball(tr, mesh, BALL_BETA, phi, ball.default_radii(BALL_SHELLS))
            dU = ball.diagnostics(U)
            rb = ball.find_r_beta(U)
            V = ball.blow_up_rescale(U, rb)
            dV = ball.diagnostics(V)
            self._ball = (U, dU, rb, V, dV, time.perf_counter() - t0)
        return self._ball


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def c1_ell_dihedral(ctx: Context) -> CriterionResult:
    vals, times, ok = [], [], True
    for d in (1, 2, 3):
        _, _, _, est, sec = ctx.sweep(f"dihedral2d({d})")
        vals.append(est.ell_upper)
        times.append(sec)
        ok &= _rel(est.ell_upper, d) < 0.005 and sec < 60
    return CriterionResult(1, "ell_dihedral", "dihedral2d(d): ell within 0.5% of d, < 60 s each", ok,
                           vals, [1.0, 2.0, 3.0], "0.5%", sum(times), {"seconds": times})


def _ell_criterion(ctx, number, key, cid, ref, tol=0.03, budget=600.0) -> CriterionResult:
    _, _, mesh, est, sec = ctx.sweep(cid)
    ok = _rel(est.ell_upper, ref) < tol and sec < budget
    return CriterionResult(number, key, f"{cid}: ell within {tol:.0%} of {ref}", ok, est.ell_upper, ref,
                           f"{tol:.0%}", sec, {"ell_betas": est.ell_betas, "mesh_vertices": mesh.n,
                                               "fit_slope": est.fit_slope})


def c2_ell_xyz(ctx):
    return _ell_criterion(ctx, 2, "ell_xyz", "xyz_r3", 3.0)


def c3_ell_prism(ctx):
    return _ell_criterion(ctx, 3, "ell_prism", "prism3d(2)", 3.0)


def c4_ell_y3(ctx):
    return _ell_criterion(ctx, 4, "ell_y3", "y3_s2", 1.5)


def c5_lambda(ctx):
    t0 = time.perf_counter()
    _, _, _, est, _ = ctx.sweep("xyz_r3")
    res = est.results[-1]
    err = partition.lambda_identity_check(res, 3.0, 3)
    return CriterionResult(5, "lambda", "lambda_beta at beta=2560 within 5% of 12", err < 0.05,
                           res.lambda_beta, 12.0, "5%", time.perf_counter() - t0,
                           {"relative_error": err, "beta": res.beta})


def c6_gap(ctx):
    t0 = time.perf_counter()
    _, _, _, est, _ = ctx.sweep("xyz_r3")
    gaps = [est.ell_upper - v for v in est.ell_betas]
    inter = [r.interaction for r in est.results]
    positive = all(g > 0 for g in gaps)
    tail_gap = gaps[-3:]
    tail_int = inter[-3:]
    gap_ok = all(b <= a for a, b in zip(tail_gap, tail_gap[1:]))
    int_ok = all(b < a for a, b in zip(tail_int, tail_int[1:]))
    return CriterionResult(6, "gap", "gap > 0, gap and interaction decreasing over last three betas",
                           positive and gap_ok and int_ok, {"gaps": gaps[-3:], "interaction": tail_int},
                           "decreasing", "-", time.perf_counter() - t0,
                           {"positive": positive, "gap_nonincreasing": gap_ok, "interaction_decreasing": int_ok})


def c7_almgren(ctx):
    U, dU, _, _, _, sec = ctx.xyz_ball()
    rep = ball.almgren_monotonicity_check(dU, 0.05)
    return CriterionResult(7, "almgren", "N(U,r) nondecreasing on [0.05, 1]", rep["passed"],
                           rep["max_violation"], 0.0, rep["threshold"], sec,
                           {"iterations": U.meta["iterations"], "energy": U.meta["energy"]})


def c8_blowup(ctx):
    t0 = time.perf_counter()
    _, _, rb, V, dV, _ = ctx.xyz_ball()
    j = int(np.argmin(np.abs(V.radii - 1.0)))
    h1 = float(dV.H[j])
    bound = ball.almgren_bound_check(dV, 3.0, 0.02)
    ok = abs(h1 - 1.0) < 1e-6 and bound["passed"]
    return CriterionResult(8, "blowup", "H(V,1) = 1 and N(V,r) <= 1.02 ell", ok,
                           {"H(V,1)": h1, "max N": bound["max_N"]}, {"H(V,1)": 1.0, "max N": bound["bound"]},
                           "1e-6 / 2%", time.perf_counter() - t0, {"r_beta": rb})


def c9_doubling(ctx):
    t0 = time.perf_counter()
    _, _, _, _, dV, _ = ctx.xyz_ball()
    rep = ball.doubling_check(dV, 3.0, 0.02)
    return CriterionResult(9, "doubling", "H(V,R)/R^(2 ell) <= 1.02 e^ell", rep["passed"], rep["max_ratio"],
                           rep["bound"], "2%", time.perf_counter() - t0)


def homogeneous_oracle_C() -> float:
    """ACF constant of the exactly 1-homogeneous segregated extension of (cos theta)^+-."""
    tr, mesh = entry("dihedral2d(1)").make()
    phi = Field(mesh, tr.witness.values / math.sqrt(2), "one_over_k")
    h = ball.homogeneous_extension(phi, 1.0, ball.default_radii(BALL_SHELLS) * 20.0)
    h.beta = 1.0
    return ball.acf_check(ball.diagnostics(h), 1.0)["C"]


def c10_acf(ctx):
    t0 = time.perf_counter()
    _, _, _, _, dV, _ = ctx.xyz_ball()
    rep = ball.acf_check(dV, 3.0, 1.0, 50.0)
    c0 = homogeneous_oracle_C()
    ok = rep["passed"] and abs(c0) < 1e-6
    return CriterionResult(10, "acf", "C <= 50 for rescaled xyz, C = 0 for the homogeneous oracle", ok,
                           {"C_xyz": rep["C"], "C_oracle": c0}, {"C_xyz": "<= 50", "C_oracle": 0.0}, "1e-6",
                           time.perf_counter() - t0)


def c11_oracle(ctx):
    t0 = time.perf_counter()
    out, ok = [], True
    for d in (1, 2, 3):
        tr, mesh = entry(f"dihedral2d({d})").make()
        ref = partition.restricted_eigen_oracle(tr, mesh)
        init = partition.perturbed_start(tr, mesh, tr.witness.values, ctx.seed, 0.01)
        res = partition.minimize_I_beta(tr, mesh, 0.0, init, partition.PartitionOptions(seed=ctx.seed))
        err = abs(res.ell_beta - ref) / max(1.0, abs(ref))
        out.append({"d": d, "optimizer": res.ell_beta, "oracle": ref, "error": err})
        ok &= err < 1e-6
    return CriterionResult(11, "oracle", "beta = 0 optimizer vs restricted eigensolve", ok,
                           [o["optimizer"] for o in out], [o["oracle"] for o in out], "1e-6",
                           time.perf_counter() - t0, {"runs": out})


# --- invariant suite ----------------------------------------------------------------

def invariant_suite(seed: int = 0, quick: bool = False) -> dict:
    rng = np.random.default_rng(seed)
    checks = {}
    # group closure: orders, associativity, closure under the table
    orders = {"dihedral2d(1)": 2, "dihedral2d(3)": 6, "rot2d(3,2)": 12}
    if not quick:
        orders.update({"xyz_r3": 8, "y3_s2": 6, "tetra_k4": 24, "cube_k6": 48})
    closure_ok = True
    for cid, order in orders.items():
        g = entry(cid).group()
        closure_ok &= g.order == order and g.is_associative()
        closure_ok &= bool(np.all(np.sort(g.table, axis=1) == np.arange(g.order)[None]))
    checks["group_closure"] = closure_ok
    # gamma inverse identity
    t = np.r_[0.0, np.geomspace(1e-8, 1e4, 400)]
    gam_ok = True
    for N in (2, 3):
        g = partition.gamma(N, t)
        gam_ok &= bool(np.max(np.abs(g * (g + N - 2) - t) / np.maximum(1, t)) < 1e-12)
    checks["gamma_identity"] = gam_ok
    # projector idempotence and gradient check
    cases = ["dihedral2d(2)"] if quick else ["dihedral2d(2)", "xyz_r3"]
    proj_ok, grad_err = True, 0.0
    for cid in cases:
        e = entry(cid)
        if cid == "xyz_r3":
            mesh = build_transports(build_icosphere_mesh(2, "octahedron"), e.group())
            tr, mesh = e.make(mesh)
        else:
            tr, mesh = e.make(e.build_mesh(n=256))
        for _ in range(20):
            u = rng.random((tr.k, mesh.n)) + 0.1
            p1 = project_values(tr.group, mesh, u)
            p2 = project_values(tr.group, mesh, p1)
            proj_ok &= bool(np.max(np.abs(p1 - p2)) < 1e-12)
            u = p1 / np.sqrt(mesh.masses(p1))[:, None]
            v = rng.standard_normal(u.shape)
            _, g = partition.gradient_I_beta(mesh, u, 50.0)
            eps = 1e-5
            fd = (partition.evaluate_I_beta(mesh, u + eps * v, 50.0)
                  - partition.evaluate_I_beta(mesh, u - eps * v, 50.0)) / (2 * eps)
            grad_err = max(grad_err, abs(fd - float(np.sum(g * v))) / abs(fd))
    checks["projector_idempotent"] = proj_ok
    checks["gradient_fd_rel_error"] = grad_err
    checks["gradient_ok"] = grad_err < 1e-5
    # determinism
    tr, mesh = entry("dihedral2d(2)").make(entry("dihedral2d(2)").build_mesh(n=256))
    runs = []
    for _ in range(2):
        init = partition.perturbed_start(tr, mesh, tr.witness.values, seed, 0.01)
        runs.append(partition.minimize_I_beta(tr, mesh, 100.0, init, partition.PartitionOptions(seed=seed)))
    checks["deterministic"] = bool(np.array_equal(runs[0].field.values, runs[1].field.values)
                                   and runs[0].ell_beta == runs[1].ell_beta)
    checks["passed"] = all(checks[k] for k in
                           ("group_closure", "gamma_identity", "projector_idempotent", "gradient_ok", "deterministic"))
    return checks


CRITERIA = {
    1: ("ell_dihedral", c1_ell_dihedral),
    2: ("ell_xyz", c2_ell_xyz),
    3: ("ell_prism", c3_ell_prism),
    4: ("ell_y3", c4_ell_y3),
    5: ("lambda", c5_lambda),
    6: ("gap", c6_gap),
    7: ("almgren", c7_almgren),
    8: ("blowup", c8_blowup),
    9: ("doubling", c9_doubling),
    10: ("acf", c10_acf),
    11: ("oracle", c11_oracle),
}
QUICK = [1, 11, 12]


def resolve(names) -> list[int]:
    keys = {v[0]: k for k, v in CRITERIA.items()}
    keys["invariants"] = 12
    out = []
    for nm in names:
        nm = str(nm).strip()
        if nm.isdigit() and 1 <= int(nm) <= 12:
            out.append(int(nm))
        elif nm in keys:
            out.append(keys[nm])
        else:
            raise KeyError(f"unknown criterion {nm!r}")
    return sorted(set(out))


def run_verify(quick: bool = False, criteria=None, seed: int = 0, workers: int = 1, stream=print,
               elapsed_offset: float = 0.0) -> list[CriterionResult]:
    """Evaluate the selected criteria; criterion 12 also checks the whole run against the time budget."""
    numbers = resolve(criteria) if criteria else (QUICK if quick else list(range(1, 13)))
    ctx = Context(seed, workers)
    results = []
    start = time.perf_counter()
    for num in numbers:
        if num == 12:
            continue
        key, fn = CRITERIA[num]
        t0 = time.perf_counter()
        try:
            res = fn(ctx)
        except Exception as exc:  # a crashing criterion is a failing criterion
            res = CriterionResult(num, key, key, False, f"{type(exc).__name__}: {exc}", "-", "-",
                                  time.perf_counter() - t0)
        results.append(res)
        if stream:
            stream(res.line())
    if 12 in numbers:
        t0 = time.perf_counter()
        checks = invariant_suite(seed, quick)
        total = time.perf_counter() - start + elapsed_offset
        full = not quick and not criteria
        ok = checks["passed"] and (total < TOTAL_BUDGET if full else True)
        res = CriterionResult(12, "invariants", "invariant suites pass; full verify < 45 min", ok,
                              {"suite": checks["passed"], "total_seconds": round(total, 1)},
                              {"suite": True, "budget_seconds": TOTAL_BUDGET}, "-",
                              time.perf_counter() - t0, checks)
        results.append(res)
        if stream:
            stream(res.line())
    return results


def results_table(results) -> list[dict]:
    return [{"criterion": r.number, "key": r.key, "passed": r.passed, "measured": _fmt(r.measured),
             "reference": _fmt(r.reference), "tolerance": _fmt(r.tolerance), "seconds": round(r.seconds, 3)}
            for r in results]


def as_records(results) -> list[dict]:
    return [asdict(r) for r in results]
