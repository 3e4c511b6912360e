"""The beta-system on the unit ball, Almgren-type diagnostics, blow-up and the ACF check.

Fields live on a tensor grid: radii ``0 = r_0 < ... < r_m = 1`` times a sphere mesh.
Shell 0 carries one value per component.  Within a radial cell the field is linear
in ``r``; all radial integrals of powers of ``r`` against the hat functions are
evaluated in closed form, so every weight scales exactly under ``r -> s r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect

from .errors import ComponentCollapse, InsufficientRange, NonConvergence, NotBracketed
from .sphere import Field, SphereMesh
from .symmetry import AdmissibleTriplet, project_values

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1)
_GL_W = 0.5 * _GL_W


def cell_moments(rl: float, rr: float, p: int) -> dict:
    """Integrals of r^p (1-t)^a t^b over [rl, rr], t = (r - rl)/(rr - rl).

    Keys ``00``, ``01``, ``11`` are the quadratic moments (1-t)^2, t(1-t), t^2;
    ``L``, ``R`` the linear ones (1-t), t.  For p = -1 on a cell touching the
    origin the (1-t) moments diverge; they are returned as 0 because they only
    ever multiply K applied to the constant centre value.
    """
    h = rr - rl
    if p >= 0:
        r = rl + h * _GL_X
        base = h * _GL_W * r ** p
        t = _GL_X
        return {"00": base @ (1 - t) ** 2, "01": base @ (t * (1 - t)), "11": base @ t ** 2,
                "L": base @ (1 - t), "R": base @ t}
    if p != -1:
        raise ValueError("only p >= -1 is supported")
    if rl == 0.0:
        return {"00": 0.0, "01": 0.5, "11": 0.5, "L": 0.0, "R": 1.0}
    lg = math.log(rr / rl)
    i1 = 1 - rl * lg / h
    i2 = ((rr * rr - rl * rl) / 2 - 2 * rl * h + rl * rl * lg) / (h * h)
    return {"00": lg - 2 * i1 + i2, "01": i1 - i2, "11": i2, "L": lg - i1, "R": i1}


@dataclass
class RadialWeights:
    """Per-cell weights of the discrete energy with radial density r^q (q = N-1 for E, 1 for J)."""

    radial: np.ndarray  # int r^q dr / h^2
    ang: np.ndarray  # (m, 3): (1-t)^2, t(1-t), t^2 moments of r^(q-2)
    inter: np.ndarray  # (m, 2): (1-t), t moments of r^q

    @classmethod
    def build(cls, radii: np.ndarray, q: int) -> "RadialWeights":
        m = len(radii) - 1
        radial = np.empty(m)
        ang = np.empty((m, 3))
        inter = np.empty((m, 2))
        for c in range(m):
            rl, rr = float(radii[c]), float(radii[c + 1])
            h = rr - rl
            radial[c] = (rr ** (q + 1) - rl ** (q + 1)) / ((q + 1) * h * h)
            a = cell_moments(rl, rr, q - 2)
            ang[c] = a["00"], a["01"], a["11"]
            b = cell_moments(rl, rr, q)
            inter[c] = b["L"], b["R"]
        return cls(radial, ang, inter)


@dataclass
class BallField:
    radii: np.ndarray
    mesh: SphereMesh
    values: np.ndarray  # (k, m+1, n)
    beta: float
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.mesh.dim

    def copy(self) -> "BallField":
        return replace(self, values=self.values.copy(), radii=self.radii.copy(), meta=dict(self.meta))


@dataclass
class RadialDiagnostics:
    radii: np.ndarray
    H: np.ndarray
    E: np.ndarray
    Nq: np.ndarray
    J: np.ndarray  # (k, m+1)
    interaction: np.ndarray  # int_{B_r} sum_{i<j} U_i^2 U_j^2 (without beta)
    beta: float
    N: int

    def table(self) -> list[dict]:
        rows = []
        for j, r in enumerate(self.radii):
            row = {"r": r, "H": self.H[j], "E": self.E[j], "N": self.Nq[j]}
            row.update({f"J_{i + 1}": self.J[i, j] for i in range(len(self.J))})
            rows.append(row)
        return rows


def default_radii(m: int = 96) -> np.ndarray:
    """r_j = sin(pi j / 2m): clustered towards r = 1."""
    r = np.sin(0.5 * np.pi * np.arange(m + 1) / m)
    r[0], r[-1] = 0.0, 1.0
    return r


def _check_radii(radii: np.ndarray) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must start at 0 and increase strictly")
    return radii


def homogeneous_extension(phi: Field, ell: float, radii) -> BallField:
    if ell <= 0:
        raise ValueError("ell must be positive")
    radii = _check_radii(radii)
    vals = radii[None, :, None] ** ell * np.asarray(phi.values, dtype=float)[:, None, :]
    return BallField(radii, phi.mesh, vals, 0.0, {"ell": ell})


# --- discrete energy ---------------------------------------------------------------

def _shell_terms(mesh: SphereMesh, U: np.ndarray):
    """Per-shell M-norm, K-form and pair interaction (k, m+1) / (m+1) arrays."""
    w = mesh.weights
    Mq = np.einsum("ijv,ijv,v->ij", U, U, w)
    KU = (mesh.stiffness @ U.reshape(-1, U.shape[-1]).T).T.reshape(U.shape)
    sq = U * U
    tot = sq.sum(axis=0)
    # sum_{i<j} u_i^2 u_j^2 = ((sum u^2)^2 - sum u^4) / 2
    Q = 0.5 * ((tot * tot - (sq * sq).sum(axis=0)) @ w)
    return Mq, KU, Q


def _cell_energies(mesh: SphereMesh, U: np.ndarray, wts: RadialWeights, beta: float):
    """Per-cell (Dirichlet per component, interaction) contributions."""
    w = mesh.weights
    dU = np.diff(U, axis=1)
    rad = np.einsum("ijv,ijv,v->ij", dU, dU, w) * wts.radial[None]
    KU = (mesh.stiffness @ U.reshape(-1, U.shape[-1]).T).T.reshape(U.shape)
    uKu = np.einsum("ijv,ijv->ij", U, KU)
    cross = np.einsum("ijv,ijv->ij", U[:, :-1], KU[:, 1:])
    ang = wts.ang[None, :, 0] * uKu[:, :-1] + 2 * wts.ang[None, :, 1] * cross + wts.ang[None, :, 2] * uKu[:, 1:]
    _, _, Q = _shell_terms(mesh, U)
    inter = wts.inter[:, 0] * Q[:-1] + wts.inter[:, 1] * Q[1:]
    return rad + ang, beta * inter, inter


def ball_energy(bf: BallField, wts: RadialWeights | None = None) -> float:
    wts = wts or RadialWeights.build(bf.radii, bf.N - 1)
    dir_, inter, _ = _cell_energies(bf.mesh, bf.values, wts, bf.beta)
    return float(dir_.sum() + inter.sum())


def _energy_gradient(mesh: SphereMesh, U: np.ndarray, wts: RadialWeights, beta: float,
                     shell_w: np.ndarray):
    w = mesh.weights
    k, m1, n = U.shape
    KU = (mesh.stiffness @ U.reshape(-1, n).T).T.reshape(U.shape)
    g = np.zeros_like(U)
    dU = np.diff(U, axis=1) * (2 * wts.radial)[None, :, None] * w
    g[:, 1:] += dU
    g[:, :-1] -= dU
    a0, a1, a2 = (wts.ang[:, i][None, :, None] for i in range(3))
    g[:, :-1] += 2 * (a0 * KU[:, :-1] + a1 * KU[:, 1:])
    g[:, 1:] += 2 * (a1 * KU[:, :-1] + a2 * KU[:, 1:])
    sq = U * U
    S = sq.sum(axis=0)[None] - sq
    g += 2 * beta * shell_w[None, :, None] * w * S * U
    return g


def _shell_weights(wts: RadialWeights) -> np.ndarray:
    m = len(wts.radial)
    out = np.zeros(m + 1)
    out[:-1] += wts.inter[:, 0]
    out[1:] += wts.inter[:, 1]
    return out


# --- solver --------------------------------------------------------------------

@dataclass
class BallOptions:
    tol: float = 1e-10
    max_iters: int = 3000
    ell_init: float | None = None
    nonnegative: bool = True
    armijo: float = 1e-4
    raise_on_nonconvergence: bool = True


class _ModalPreconditioner:
    """Exact inverse of the beta-free quadratic form plus a shellwise interaction shift.

    In the (K, M) eigenbasis the Dirichlet form decouples into one tridiagonal
    system per angular mode, solved here by a batched Thomas sweep.
    """

    def __init__(self, mesh: SphereMesh, wts: RadialWeights, shell_w: np.ndarray, beta: float):
        K = mesh.stiffness.toarray()
        w = mesh.weights
        mu, phi = sla.eigh(K, np.diag(w))
        self.mu = np.maximum(mu, 0.0)
        self.phi = phi
        self.phiT_M = phi.T * w[None, :]
        self.wts = wts
        self.shell_w = shell_w
        self.beta = beta
        self.const = int(np.argmin(np.abs(mu)))

    def apply(self, g: np.ndarray, sbar: np.ndarray) -> np.ndarray:
        k, m1, n = g.shape
        m = m1 - 1
        ghat = g @ self.phi  # (k, m+1, n): derivative with respect to modal coefficients
        mu = self.mu[None, :]
        a, ang = self.wts.radial[:, None], self.wts.ang
        # unknown shells 0..m-1 (shell m fixed)
        diag = np.zeros((m, n))
        diag += np.r_[np.zeros(1), self.wts.radial[:-1]][:, None] + a  # alpha_{j-1} + alpha_j
        diag += mu * (np.r_[0.0, ang[:-1, 2]][:, None] + ang[:, 0][:, None])
        diag += (self.beta * sbar[:m] * self.shell_w[:m])[:, None]
        off = -a[:-1] + mu * ang[:-1, 1][:, None]  # coupling (j, j+1) for j = 0..m-2
        diag, off = 2 * diag, 2 * off
        # shell 0 carries only the constant mode
        mask = np.ones(n, dtype=bool)
        mask[self.const] = False
        diag[0, mask] = 1.0
        off[0, mask] = 0.0
        rhs = ghat[:, :m, :].copy()
        rhs[:, 0, mask] = 0.0
        diag = np.maximum(diag, 1e-300)
        # Thomas sweep, batched over components and modes
        cp = np.empty_like(off)
        dp = np.empty_like(rhs)
        cp[0] = off[0] / diag[0]
        dp[:, 0] = rhs[:, 0] / diag[0]
        for j in range(1, m):
            den = diag[j] - off[j - 1] * cp[j - 1]
            if j < m - 1:
                cp[j] = off[j] / den
            dp[:, j] = (rhs[:, j] - off[j - 1] * dp[:, j - 1]) / den
        x = np.empty_like(rhs)
        x[:, m - 1] = dp[:, m - 1]
        for j in range(m - 2, -1, -1):
            x[:, j] = dp[:, j] - cp[j] * x[:, j + 1]
        out = np.zeros_like(g)
        out[:, :m] = x @ self.phi.T
        return out


def _boundary_mass(mesh: SphereMesh, boundary: np.ndarray) -> np.ndarray:
    return mesh.masses(boundary)


def solve_ball(triplet: AdmissibleTriplet, mesh: SphereMesh, beta: float, boundary: Field,
               radii=None, opts: BallOptions | None = None) -> BallField:
    """Minimize the discrete E_beta with the boundary shell fixed to ``boundary``."""
    opts = opts or BallOptions()
    radii = _check_radii(default_radii() if radii is None else radii)
    phi = np.asarray(boundary.values, dtype=float)
    if len(radii) - 1 < 32:
        raise ValueError("the radial grid needs at least 32 shells")
    bm = _boundary_mass(mesh, phi)
    if np.any(bm < 1e-30):
        raise ComponentCollapse("boundary trace has a vanishing component")
    if abs(bm.sum() - 1.0) > 1e-8:
        raise ValueError(f"boundary must satisfy sum_i int phi_i^2 = 1, got {bm.sum():.6g}")
    N = mesh.dim
    wts = RadialWeights.build(radii, N - 1)
    shell_w = _shell_weights(wts)
    if opts.ell_init is None:
        R = np.array([phi[i] @ (mesh.stiffness @ phi[i]) / (phi[i] ** 2 @ mesh.weights) for i in range(len(phi))])
        a = (N - 2) / 2
        ell0 = float(np.mean(np.sqrt(a * a + np.maximum(R, 0)) - a))
    else:
        ell0 = opts.ell_init
    U = radii[None, :, None] ** max(ell0, 1e-3) * phi[:, None, :]

    def feasible(V):
        if opts.nonnegative:
            V = np.maximum(V, 0.0)
        V = project_values(triplet.group, mesh, V)
        V[:, -1, :] = phi
        return V

    def energy(V):
        d, it, _ = _cell_energies(mesh, V, wts, beta)
        return float(d.sum() + it.sum())

    U = feasible(U)
    pre = _ModalPreconditioner(mesh, wts, shell_w, beta)
    val = energy(U)
    history = [val]
    t = 1.0
    rel = math.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = _energy_gradient(mesh, U, wts, beta, shell_w)
        # shell 0 is one value per component: collapse its gradient onto the constant
        g[:, 0, :] = g[:, 0, :].sum(axis=1, keepdims=True) * mesh.weights / mesh.area
        g[:, -1, :] = 0.0
        sq = U * U
        sbar = ((sq.sum(axis=0)[None] - sq) @ mesh.weights).mean(axis=0) / mesh.area
        d = pre.apply(g, sbar)
        d[:, 0, :] = d[:, 0, :].mean(axis=1, keepdims=True)
        slope = float(np.sum(g * d))
        if not np.isfinite(slope) or slope <= 0:
            converged = True
            break
        while True:
            V = feasible(U - t * d)
            nv = energy(V)
            if nv <= val - opts.armijo * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            converged = True
            break
        rel = (val - nv) / max(abs(nv), 1e-300)
        U, val = V, nv
        history.append(val)
        t = min(2 * t, 1.0)
        if rel < opts.tol:
            converged = True
            break
    if not converged and rel > 100 * opts.tol and opts.raise_on_nonconvergence:
        raise NonConvergence(f"ball solve: residual {rel:.3e} after {it} iterations")
    return BallField(radii, mesh, U, float(beta),
                     {"iterations": it, "residual": 0.0 if not np.isfinite(rel) else float(rel),
                      "energy": val, "history": history})


# --- diagnostics -------------------------------------------------------------------

def diagnostics(bf: BallField) -> RadialDiagnostics:
    N, U, mesh = bf.N, bf.values, bf.mesh
    r = bf.radii
    wE = RadialWeights.build(r, N - 1)
    dE, iE, raw_inter = _cell_energies(mesh, U, wE, bf.beta)
    cum = np.r_[0.0, np.cumsum(dE.sum(axis=0) + iE)]
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, r ** (2.0 - N), 0.0)
    E = cum * scale
    Mq, _, _ = _shell_terms(mesh, U)
    H = Mq.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        Nq = np.where(H > 0, E / np.where(H > 0, H, 1), 0.0)
    # J_i: integrand weighted by |x|^(2-N); the interaction sums over j != i
    wJ = RadialWeights.build(r, 1)
    dJ, _, _ = _cell_energies(mesh, U, wJ, 0.0)
    w = mesh.weights
    sq = U * U
    S = sq.sum(axis=0)[None] - sq
    qi = np.einsum("ijv,ijv,v->ij", sq, S, w)  # int u_i^2 sum_{j != i} u_j^2 per shell
    inter_i = wJ.inter[None, :, 0] * qi[:, :-1] + wJ.inter[None, :, 1] * qi[:, 1:]
    J = np.concatenate([np.zeros((bf.k, 1)), np.cumsum(dJ + bf.beta * inter_i, axis=1)], axis=1)
    return RadialDiagnostics(r.copy(), H, E, Nq, J, np.r_[0.0, np.cumsum(raw_inter)], bf.beta, N)


def almgren_monotonicity_check(diag: RadialDiagnostics, r_min: float = 0.05, r_max: float = 1.0,
                               tol_mono: float = 1e-3) -> dict:
    sel = (diag.radii >= r_min - 1e-14) & (diag.radii <= r_max + 1e-14)
    nq = diag.Nq[sel]
    if len(nq) < 2:
        raise InsufficientRange("need at least two radii in the window")
    drop = float(np.max(np.maximum.accumulate(nq) - nq))
    rng = float(nq[-1] - nq[0])
    threshold = max(tol_mono * abs(rng), 1e-9 * float(np.max(np.abs(nq))))
    return {"max_violation": drop, "range": rng, "threshold": threshold, "passed": drop < threshold or drop == 0.0,
            "r_min": r_min, "r_max": r_max}


def _radial_interpolant(bf: BallField) -> PchipInterpolator:
    return PchipInterpolator(bf.radii, bf.values, axis=1, extrapolate=False)


def H_at(bf: BallField, r: float, interp: PchipInterpolator | None = None) -> float:
    interp = interp or _radial_interpolant(bf)
    u = interp(r)
    return float(np.einsum("iv,iv,v->", u, u, bf.mesh.weights))


def find_r_beta(bf: BallField, tol: float = 1e-8) -> float:
    """Radius with beta r^2 H(U, r) = 1; U is interpolated shellwise by monotone cubics in r."""
    beta = bf.beta
    interp = _radial_interpolant(bf)
    Mq, _, _ = _shell_terms(bf.mesh, bf.values)
    f = beta * bf.radii ** 2 * Mq.sum(axis=0) - 1.0
    above = np.nonzero(f >= 0)[0]
    if len(above) == 0 or f[0] >= 0:
        raise NotBracketed(f"beta r^2 H(U,r) never reaches 1 on the grid (beta={beta})")
    j = int(above[0])
    if f[j] == 0:
        return float(bf.radii[j])
    g = lambda r: beta * r * r * H_at(bf, r, interp) - 1.0
    r = bisect(g, bf.radii[j - 1], bf.radii[j], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(g(r)) >= tol:
        raise NotBracketed(f"residual {g(r):.2e} above {tol}")
    return float(r)


def blow_up_rescale(bf: BallField, r_beta: float) -> BallField:
    """V(x) = beta^(1/2) r_beta U(r_beta x) on B_{1/r_beta}, with a shell inserted at |x| = 1."""
    s = bf.radii / r_beta
    scale = math.sqrt(bf.beta) * r_beta
    vals = bf.values * scale
    if not np.any(np.isclose(s, 1.0, rtol=0, atol=1e-14)):
        j = int(np.searchsorted(s, 1.0))
        v1 = _radial_interpolant(bf)(r_beta) * scale
        s = np.insert(s, j, 1.0)
        vals = np.insert(vals, j, v1, axis=1)
    meta = {"r_beta": r_beta, "beta_source": bf.beta}
    return BallField(s, bf.mesh, vals, 1.0, meta)


def acf_check(diag: RadialDiagnostics, ell: float, r_min: float = 1.0, C_max: float = 50.0) -> dict:
    """Smallest C >= 0 making log(J_1...J_k) - 2 k ell log r - C r^(-1/2) nondecreasing."""
    if r_min < 1.0:
        raise ValueError("the ACF check runs on r >= 1")
    r = np.asarray(diag.radii, dtype=float)
    sel = r >= r_min - 1e-14
    if sel.sum() < 8:
        raise InsufficientRange(f"only {int(sel.sum())} radii >= {r_min}")
    rs, J = r[sel], diag.J[:, sel]
    k = len(J)
    if np.any(np.diff(rs) <= 0):
        return {"C": math.inf, "passed": False, "reason": "radii not increasing", "F": []}
    if np.any(J <= 0):
        return {"C": math.inf, "passed": False, "reason": "nonpositive J", "F": []}
    F = np.log(J).sum(axis=0) - 2 * k * ell * np.log(rs)
    delta = rs[:-1] ** -0.5 - rs[1:] ** -0.5
    need = (F[:-1] - F[1:]) / delta
    C = float(max(0.0, need.max()))
    return {"C": C, "passed": bool(np.isfinite(C) and C <= C_max), "C_max": C_max, "F": F.tolist(),
            "radii": rs.tolist()}


def growth_rate_estimate(diag: RadialDiagnostics) -> dict:
    if len(diag.radii) < 8:
        raise InsufficientRange("need at least 8 radii")
    q = max(2, len(diag.radii) // 4)
    tail = diag.Nq[-q:]
    return {"estimate": float(diag.Nq[-1]), "tail_range": float(tail.max() - tail.min())}


def doubling_check(diag: RadialDiagnostics, ell: float, slack: float = 0.02) -> dict:
    sel = diag.radii >= 1.0 - 1e-14
    R, H = diag.radii[sel], diag.H[sel]
    H1 = float(np.interp(1.0, diag.radii, diag.H))
    ratio = H / R ** (2 * ell)
    bound = math.exp(ell) * H1 * (1 + slack)
    return {"max_ratio": float(ratio.max()), "bound": bound, "passed": bool(ratio.max() <= bound), "H1": H1}


def almgren_bound_check(diag: RadialDiagnostics, ell: float, slack: float = 0.02) -> dict:
    mx = float(np.max(diag.Nq))
    return {"max_N": mx, "bound": ell * (1 + slack), "passed": mx <= ell * (1 + slack)}


def dH_identity_check(diag: RadialDiagnostics, rel_tol: float = 0.05, r_lo: float = 0.2,
                      r_hi: float = 0.95) -> dict:
    """Centred differences of H against (2/r) E + (2 beta / r^(N-1)) int_{B_r} sum_{i<j} U_i^2 U_j^2."""
    r, H = diag.radii, diag.H
    errs = []
    for j in range(1, len(r) - 1):
        if not (r_lo <= r[j] <= r_hi):
            continue
        fd = (H[j + 1] - H[j - 1]) / (r[j + 1] - r[j - 1])
        rhs = 2 / r[j] * diag.E[j] + 2 * diag.beta / r[j] ** (diag.N - 1) * diag.interaction[j]
        errs.append(abs(fd - rhs) / abs(rhs))
    mx = float(max(errs)) if errs else math.nan
    return {"max_rel_error": mx, "passed": bool(errs) and mx < rel_tol}
