"""Penalized minimization of I_beta over equivariant fields and estimates of ell(k, G, h)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ComponentCollapse, NegativeInput, NonConvergence, ZeroComponent
from .sphere import Field, SphereMesh
from .symmetry import AdmissibleTriplet, project_values


def gamma(N: int, t):
    """sqrt(((N-2)/2)^2 + t) - (N-2)/2, vectorized over t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise NegativeInput("gamma is defined for t >= 0")
    a = (N - 2) / 2
    # rationalized form avoids cancellation for small t
    out = t / (np.sqrt(a * a + t) + a) if a > 0 else np.sqrt(t)
    return float(out) if out.ndim == 0 else out


def gamma_prime(N: int, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise NegativeInput("gamma is defined for t >= 0")
    a = (N - 2) / 2
    with np.errstate(divide="ignore"):
        out = 0.5 / np.sqrt(a * a + t)
    return float(out) if out.ndim == 0 else out


# --- functionals --------------------------------------------------------------

def _terms(mesh: SphereMesh, u: np.ndarray):
    w = mesh.weights
    sq = u * u
    S = sq.sum(axis=0)[None, :] - sq  # S_i = sum_{j != i} u_j^2
    a = np.einsum("iv,iv->i", u, (mesh.stiffness @ u.T).T)
    q = (sq * S) @ w
    m = sq @ w
    return a, q, m, S


def rayleigh_quotients(mesh: SphereMesh, u: np.ndarray, beta: float) -> np.ndarray:
    a, q, m, _ = _terms(mesh, u)
    if np.any(m < 1e-30):
        raise ZeroComponent("a component has zero mass")
    return np.maximum((a + 0.5 * beta * q) / m, 0.0)


def evaluate_I_beta(mesh: SphereMesh, fld, beta: float) -> float:
    u = fld.values if isinstance(fld, Field) else np.asarray(fld, dtype=float)
    return float(np.mean(gamma(mesh.dim, rayleigh_quotients(mesh, u, beta))))


def max_overlap(u: np.ndarray) -> float:
    k = len(u)
    return max((float(np.max(u[i] * u[j])) for i in range(k) for j in range(i + 1, k)), default=0.0)


def evaluate_I_infty(mesh: SphereMesh, fld, overlap_tol: float | None = None) -> float:
    """Returns ``math.inf`` unless the components are disjoint at every vertex."""
    u = fld.values if isinstance(fld, Field) else np.asarray(fld, dtype=float)
    if overlap_tol is None:
        overlap_tol = 1e-12 * float(np.max(np.abs(u))) ** 2
    if max_overlap(u) > overlap_tol:
        return math.inf
    return evaluate_I_beta(mesh, u, 0.0)


def gradient_I_beta(mesh: SphereMesh, u: np.ndarray, beta: float):
    """Value and Euclidean gradient of I_beta with respect to the nodal values."""
    k = len(u)
    w = mesh.weights
    a, q, m, S = _terms(mesh, u)
    if np.any(m < 1e-30):
        raise ZeroComponent("a component has zero mass")
    R = np.maximum((a + 0.5 * beta * q) / m, 0.0)
    # gamma' is unbounded at 0 when N = 2
    mu = gamma_prime(mesh.dim, np.maximum(R, 1e-300))
    Ku = (mesh.stiffness @ u.T).T
    sq = u * u
    g = mu[:, None] * (2 * Ku + beta * w * S * u - 2 * R[:, None] * w * u) / m[:, None]
    # cross terms: d R_j / d u_i = beta w u_j^2 u_i / m_j
    c = (mu / m)[None, :] * sq.T  # (n, k): mu_j u_j^2 / m_j
    cross = c.sum(axis=1)[None, :] - c.T
    g += beta * w * cross * u
    return float(np.mean(gamma(mesh.dim, R))), g / k


def interaction(mesh: SphereMesh, u: np.ndarray, beta: float) -> float:
    """beta * sum_{i != j} int u_i^2 u_j^2."""
    _, q, _, _ = _terms(mesh, u)
    return float(beta * q.sum())


def lambda_beta(mesh: SphereMesh, u: np.ndarray, beta: float, i: int = 0) -> float:
    a, q, m, _ = _terms(mesh, u)
    return float((a[i] + beta * q[i]) / m[i])


# --- solver -------------------------------------------------------------------

@dataclass
class PartitionOptions:
    tol: float = 1e-9
    max_iters: int = 5000
    seed: int = 0
    noise: float = 0.01
    n_seeds: int = 3
    sigma: float = 1.0
    armijo: float = 1e-4
    raise_on_nonconvergence: bool = True


@dataclass
class PartitionResult:
    field: Field
    beta: float
    ell_beta: float
    lambda_beta: float
    interaction: float
    iterations: int
    residual: float
    seed: int | None = None
    start: str = "init"
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "beta": self.beta,
            "ell_beta": self.ell_beta,
            "lambda_beta": self.lambda_beta,
            "interaction": self.interaction,
            "iterations": self.iterations,
            "residual": self.residual,
            "seed": self.seed,
            "start": self.start,
        }


def _project_normalize(triplet, mesh, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = project_values(triplet.group, mesh, np.maximum(v, 0.0))
    m = mesh.masses(v)
    return v, m


def perturbed_start(triplet: AdmissibleTriplet, mesh: SphereMesh, values: np.ndarray,
                    seed: int, noise: float) -> Field:
    """Adds ``noise * max|u|`` times uniform [0, 1) samples, then projects and normalizes."""
    rng = np.random.default_rng(seed)
    u = np.asarray(values, dtype=float)
    u = u + noise * float(np.max(np.abs(u))) * rng.random(u.shape)
    u, m = _project_normalize(triplet, mesh, u)
    if np.any(m < 1e-12):
        raise ComponentCollapse("perturbed start has a vanishing component")
    return Field(mesh, u / np.sqrt(m)[:, None], "unit")


def _direction(mesh: SphereMesh, u: np.ndarray, g: np.ndarray, beta: float, sigma: float) -> np.ndarray:
    """Sobolev gradient: P_i^{-1} g_i projected onto the tangent space of the unit M-sphere."""
    w = mesh.weights
    sq = u * u
    S = sq.sum(axis=0)[None, :] - sq
    d = np.empty_like(u)
    K = mesh.stiffness
    for i in range(len(u)):
        P = (K + sp.diags(w * (beta * S[i] + sigma))).tocsc()
        lu = spla.splu(P)
        pg = lu.solve(g[i])
        pm = lu.solve(w * u[i])
        d[i] = pg - (w * u[i] @ pg) / (w * u[i] @ pm) * pm
    return d


def minimize_I_beta(triplet: AdmissibleTriplet, mesh: SphereMesh, beta: float, init: Field,
                    opts: PartitionOptions | None = None) -> PartitionResult:
    """Preconditioned projected descent: step, clamp, symmetrize, renormalize."""
    opts = opts or PartitionOptions()
    if beta < 0:
        raise NegativeInput("beta must be nonnegative")
    u, m = _project_normalize(triplet, mesh, np.asarray(init.values, dtype=float))
    if np.any(m < 1e-12):
        raise ComponentCollapse("initial field has a vanishing component")
    u = u / np.sqrt(m)[:, None]
    val, g = gradient_I_beta(mesh, u, beta)
    history = [val]
    t = 1.0
    rel = math.inf
    it = 0
    converged = False
    for it in range(1, opts.max_iters + 1):
        d = _direction(mesh, u, g, beta, opts.sigma)
        # scale so that a unit step is Newton-like for each component
        R = rayleigh_quotients(mesh, u, beta)
        mu = gamma_prime(mesh.dim, np.maximum(R, 1e-300))
        d *= (len(u) / (2 * mu))[:, None]
        slope = float(np.sum(g * d))
        if not np.isfinite(slope) or slope <= 0:
            converged = True
            break
        while True:
            v, mv = _project_normalize(triplet, mesh, u - t * d)
            if np.all(mv >= 1e-12):
                v = v / np.sqrt(mv)[:, None]
                nv = evaluate_I_beta(mesh, v, beta)
                if nv <= val - opts.armijo * t * slope:
                    break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            # no admissible decrease left at machine precision
            converged = True
            break
        rel = (val - nv) / max(abs(nv), 1e-300)
        u, val = v, nv
        history.append(val)
        t = min(2 * t, 1.0)
        if rel < opts.tol:
            converged = True
            break
        val, g = gradient_I_beta(mesh, u, beta)
    residual = 0.0 if not np.isfinite(rel) else float(rel)
    if not converged and residual > 100 * opts.tol and opts.raise_on_nonconvergence:
        raise NonConvergence(f"beta={beta}: residual {residual:.3e} after {it} iterations")
    fld = Field(mesh, u, "unit")
    return PartitionResult(fld, float(beta), float(val), lambda_beta(mesh, u, beta), interaction(mesh, u, beta),
                           it, residual, opts.seed, "init", history)


# --- segregated competitors -----------------------------------------------------

def segregate(fld: Field) -> Field:
    u = np.asarray(fld.values, dtype=float)
    out = np.maximum(2 * u - u.sum(axis=0)[None, :], 0.0)
    return Field(fld.mesh, out, fld.mode)


def refine_segregated(triplet: AdmissibleTriplet, mesh: SphereMesh, fld: Field) -> Field | None:
    """Dirichlet ground state on the cell of component 0, spread equivariantly.

    The cell is {u_0 > max_{j != 0} u_j}; its images under the group are pairwise
    disjoint, so the result is an equivariant segregated competitor whose I_infty
    is a valid upper bound for ell.  Returns None for an empty cell.
    """
    u = np.asarray(fld.values, dtype=float)
    others = np.delete(u, 0, axis=0).max(axis=0) if len(u) > 1 else np.zeros(u.shape[1])
    idx = np.nonzero(u[0] > others)[0]
    if len(idx) < 2:
        return None
    K = mesh.stiffness[idx][:, idx]
    M = mesh.mass[idx][:, idx]
    if len(idx) <= 1500:
        vals, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, 0])
        phi = vecs[:, 0]
    else:
        vals, vecs = spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=-1e-3, which="LM")
        phi = vecs[:, 0]
    phi = np.abs(phi)
    seed = np.zeros_like(u)
    seed[0, idx] = phi
    v = project_values(triplet.group, mesh, seed)
    m = mesh.masses(v)
    if np.any(m < 1e-30):
        return None
    return Field(mesh, v / np.sqrt(m)[:, None], "unit")


def segregated_upper_bound(triplet: AdmissibleTriplet, mesh: SphereMesh, fld: Field) -> tuple[float, Field]:
    """Best of I_infty(segregate(u)) and I_infty(refine_segregated(u))."""
    cands = [segregate(fld), refine_segregated(triplet, mesh, fld)]
    best, best_f = math.inf, None
    for c in cands:
        if c is None or np.any(c.masses() < 1e-30):
            continue
        val = evaluate_I_infty(mesh, c)
        if val < best:
            best, best_f = val, c
    return best, best_f


# --- sweep ----------------------------------------------------------------------

@dataclass
class EllEstimate:
    betas: list
    ell_betas: list
    ell_upper: float
    ell_extrapolated: float
    fit_slope: float
    upper_per_beta: list = field(default_factory=list)
    results: list = field(default_factory=list)
    best_field: Field | None = None

    def rows(self) -> list[dict]:
        return [{"beta": r.beta, "ell_beta": r.ell_beta, "ell_upper": up, "lambda_beta": r.lambda_beta,
                 "interaction": r.interaction, "iterations": r.iterations, "residual": r.residual}
                for r, up in zip(self.results, self.upper_per_beta)]


def fit_gap_slope(betas, ell_betas, ell_upper: float) -> float:
    b = np.asarray(betas, dtype=float)
    gap = ell_upper - np.asarray(ell_betas, dtype=float)
    half = slice(len(b) // 2, None)
    b, gap = b[half], gap[half]
    ok = gap > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(b[ok]), np.log(gap[ok]), 1)[0])


def beta_sweep(triplet: AdmissibleTriplet, mesh: SphereMesh, betas, opts: PartitionOptions | None = None,
               init: Field | None = None, workers: int = 1) -> EllEstimate:
    """Warm-started continuation in beta, with extra seeded starts from the witness at every beta.

    The starts at one beta are independent and may run on ``workers`` threads;
    results are reduced in start order, so the outcome does not depend on ``workers``.
    """
    opts = opts or PartitionOptions()
    betas = [float(b) for b in betas]
    if any(b <= 0 for b in betas) or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be positive and increasing")
    witness = triplet.witness.values
    base = init.values if init is not None else witness
    prev = None
    results, uppers = [], []
    best_upper, best_field = math.inf, None
    for beta in betas:
        starts = []
        if prev is not None:
            starts.append(("warm", opts.seed, prev.field))
        for s in range(max(1, opts.n_seeds)):
            seed = opts.seed + s
            starts.append(("cold", seed, perturbed_start(triplet, mesh, base if s == 0 else witness, seed, opts.noise)))

        def run(start, beta=beta):
            tag, seed, f0 = start
            o = PartitionOptions(**{**opts.__dict__, "seed": seed})
            try:
                r = minimize_I_beta(triplet, mesh, beta, f0, o)
            except ComponentCollapse:
                return None
            r.start = tag
            return r

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                runs = list(pool.map(run, starts))
        else:
            runs = [run(s) for s in starts]
        best = None
        for r in runs:
            if r is None:
                continue
            up, upf = segregated_upper_bound(triplet, mesh, r.field)
            if up < best_upper:
                best_upper, best_field = up, upf
            if best is None or r.ell_beta < best.ell_beta:
                best = r
        if best is None:
            raise ComponentCollapse(f"every start collapsed at beta={beta}")
        results.append(best)
        uppers.append(best_upper)
        prev = best
    ell_betas = [r.ell_beta for r in results]
    slope = fit_gap_slope(betas, ell_betas, best_upper)
    return EllEstimate(betas, ell_betas, best_upper, best_upper, slope, uppers, results, best_field)


# --- checks -----------------------------------------------------------------------

def interaction_bound_check(results) -> dict:
    rows = []
    for r in results:
        u = r.field.values
        rows.append({"beta": r.beta, "scaled_overlap": math.sqrt(r.beta) * max_overlap(u),
                     "interaction": r.interaction})
    inter = [row["interaction"] for row in rows]
    tail = inter[-3:]
    ratio = None
    if len(rows) >= 2 and rows[-2]["scaled_overlap"] > 0:
        ratio = rows[-1]["scaled_overlap"] / rows[-2]["scaled_overlap"]
    return {
        "rows": rows,
        "interaction_decreasing_tail": bool(all(b < a for a, b in zip(tail, tail[1:]))),
        "scaled_overlap_ratio": ratio,
        "scaled_overlap_bounded": ratio is None or 0.3 <= ratio <= 3.0,
    }


def lambda_identity_check(result: PartitionResult, ell_ref: float, N: int) -> float:
    target = ell_ref * (ell_ref + N - 2)
    return abs(result.lambda_beta - target) / target


def _stabilizer_basis(triplet: AdmissibleTriplet, mesh: SphereMesh) -> np.ndarray:
    """Columns span the functions invariant under the stabilizer of component 0."""
    grp = triplet.group
    stab = grp.stabilizer(0)
    n = mesh.n
    if mesh.group_exact:
        parent = np.arange(n)

        def root(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in stab:
            perm = mesh.transports[g].perm
            for v in range(n):
                a, b = root(v), root(perm[v])
                if a != b:
                    parent[a] = b
        roots = np.array([root(v) for v in range(n)])
        _, labels = np.unique(roots, return_inverse=True)
        B = np.zeros((n, labels.max() + 1))
        B[np.arange(n), labels] = 1.0
        return B
    P = sum(mesh.transports[g].matrix.toarray() for g in stab) / len(stab)
    U, s, _ = np.linalg.svd(P)
    return U[:, s > 1e-8]


def restricted_eigen_oracle(triplet: AdmissibleTriplet, mesh: SphereMesh) -> float:
    """ell_0 from a dense eigensolve of (K, M) on the stabilizer-invariant subspace."""
    B = _stabilizer_basis(triplet, mesh)
    Kr = B.T @ (mesh.stiffness @ B)
    Mr = B.T @ (mesh.mass @ B)
    _, vec = sla.eigh(Kr, Mr, subset_by_index=[0, 0])
    # the Rayleigh quotient of the eigenvector is accurate to O(eps^2) near a zero eigenvalue,
    # which matters once gamma takes a square root
    v = B @ vec[:, 0]
    lam = float(v @ (mesh.stiffness @ v)) / float(v @ (mesh.mass @ v))
    return gamma(mesh.dim, max(lam, 0.0))
