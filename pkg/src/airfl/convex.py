"""Small convex solvers used by the subproblem modules.

``solve_conic`` handles

    minimize    c^T x + 1/2 sum_i q_i x_i^2
    subject to  G x <= h
                ||(x[i], x[j])|| <= r       for each listed disc (i, j)

with a log-barrier interior-point method.  Complex unknowns are passed as
(Re, Im) pairs so a modulus bound is a two-dimensional disc.  The Newton
system is block diagonal plus a low-rank affine part, which is solved with
the Woodbury identity when the problem is large.

``solve_sdp`` handles ``min tr(C A)`` s.t. ``tr(H_k A) >= b_k``, ``A >= 0`` over
Hermitian matrices with an over-relaxed ADMM splitting, and returns a dual
lower bound alongside the (feasibility-rescaled) primal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import nnls

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERS = "max_iters"

_DENSE_LIMIT = 80
_CENTER_TOL = 1e-7


@dataclass
class ConicProblem:
    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    discs: np.ndarray | None = None
    radii: np.ndarray | None = None
    quad: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if n == 0:
            raise ValueError("empty variable vector")
        self.G = np.zeros((0, n)) if self.G is None else np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        if self.G.shape != (self.h.size, n):
            raise ValueError(f"G must have shape ({self.h.size}, {n}), got {self.G.shape}")
        if self.discs is None:
            self.discs = np.zeros((0, 2), dtype=int)
        self.discs = np.asarray(self.discs, dtype=int).reshape(-1, 2)
        nd = len(self.discs)
        self.radii = np.ones(nd) if self.radii is None else np.broadcast_to(
            np.asarray(self.radii, dtype=float), (nd,)).copy()
        if np.any(self.radii <= 0):
            raise ValueError("disc radii must be positive")
        flat = self.discs.ravel()
        if flat.size and (flat.min() < 0 or flat.max() >= n or np.unique(flat).size != flat.size):
            raise ValueError("disc indices must be distinct variable indices")
        self.quad = np.zeros(n) if self.quad is None else np.asarray(self.quad, dtype=float).ravel()
        if self.quad.shape != (n,) or np.any(self.quad < 0):
            raise ValueError("quad must be a non-negative vector of length n")

    @property
    def variable_dim(self):
        return self.c.size

    def objective(self, x):
        return float(self.c @ x + 0.5 * np.sum(self.quad * x * x))

    def max_violation(self, x):
        viol = 0.0
        if self.h.size:
            viol = max(viol, float(np.max(self.G @ x - self.h)))
        if len(self.discs):
            rad = np.hypot(x[self.discs[:, 0]], x[self.discs[:, 1]])
            viol = max(viol, float(np.max(rad - self.radii)))
        return max(viol, 0.0)


@dataclass
class ConicSolution:
    x: np.ndarray
    status: str
    objective: float
    gap: float
    iterations: int


class _Barrier:
    """Log-barrier objective, derivatives and structured Newton solves."""

    def __init__(self, prob: ConicProblem):
        self.p = prob
        n = prob.variable_dim
        self.i0 = prob.discs[:, 0]
        self.i1 = prob.discs[:, 1]
        self.r2 = prob.radii ** 2
        in_disc = np.zeros(n, bool)
        in_disc[prob.discs.ravel()] = True
        self.single = np.flatnonzero(~in_disc & (prob.quad > 0))
        self.free = np.flatnonzero(~in_disc & (prob.quad == 0))
        self.S = np.concatenate([prob.discs.ravel(), self.single])
        self.nu = prob.h.size + len(prob.discs)

    def slacks(self, x):
        s = self.p.h - self.p.G @ x
        u = self.r2 - x[self.i0] ** 2 - x[self.i1] ** 2
        return s, u

    def strictly_feasible(self, x):
        s, u = self.slacks(x)
        return np.all(s > 0) and np.all(u > 0)

    def value(self, x, t):
        s, u = self.slacks(x)
        if np.any(s <= 0) or np.any(u <= 0):
            return np.inf
        return t * self.p.objective(x) - np.sum(np.log(s)) - np.sum(np.log(u))

    def gradient(self, x, t, s, u):
        g = t * (self.p.c + self.p.quad * x)
        if s.size:
            g += self.p.G.T @ (1.0 / s)
        if u.size:
            g[self.i0] += 2.0 * x[self.i0] / u
            g[self.i1] += 2.0 * x[self.i1] / u
        return g

    def _disc_blocks(self, x, t, u):
        x0, x1 = x[self.i0], x[self.i1]
        q = t * self.p.quad
        a = 2.0 / u + 4.0 * x0 * x0 / u ** 2 + q[self.i0]
        d = 2.0 / u + 4.0 * x1 * x1 / u ** 2 + q[self.i1]
        b = 4.0 * x0 * x1 / u ** 2
        return a, b, d

    def newton_step(self, x, t, s, u, rhs):
        if self.p.variable_dim <= _DENSE_LIMIT:
            return self._dense_solve(x, t, s, u, rhs)
        return self._structured_solve(x, t, s, u, rhs)

    def hessian(self, x, t, s, u):
        n = self.p.variable_dim
        H = np.diag(t * self.p.quad)
        if s.size:
            Gs = self.p.G / s[:, None]
            H += Gs.T @ Gs
        if u.size:
            a, b, d = self._disc_blocks(x, t, u)
            q = t * self.p.quad
            H[self.i0, self.i0] += a - q[self.i0]
            H[self.i1, self.i1] += d - q[self.i1]
            H[self.i0, self.i1] += b
            H[self.i1, self.i0] += b
        return H

    def _dense_solve(self, x, t, s, u, rhs):
        H = self.hessian(x, t, s, u)
        # symmetric diagonal scaling keeps Cholesky accurate when slacks differ by decades
        d = 1.0 / np.sqrt(np.maximum(np.diag(H), 1e-300))
        Hs = H * d[:, None] * d[None, :]
        try:
            return d * sla.cho_solve(sla.cho_factor(Hs), d * rhs)
        except (np.linalg.LinAlgError, ValueError):
            return d * np.linalg.lstsq(Hs, d * rhs, rcond=None)[0]

    def _structured_solve(self, x, t, s, u, rhs):
        # H = B + G^T W G with B block diagonal on S and zero on the free set F
        p = self.p
        nd = len(self.i0)
        S, F = self.S, self.free
        a, b, d = self._disc_blocks(x, t, u)
        det = a * d - b * b
        qs = t * p.quad[self.single]

        def binv(R):
            out = np.empty_like(R)
            r0, r1 = R[0:2 * nd:2], R[1:2 * nd:2]
            out[0:2 * nd:2] = (d[:, None] * r0 - b[:, None] * r1) / det[:, None]
            out[1:2 * nd:2] = (a[:, None] * r1 - b[:, None] * r0) / det[:, None]
            out[2 * nd:] = R[2 * nd:] / qs[:, None]
            return out

        rS, rF = rhs[S][:, None], rhs[F][:, None]
        m = s.size
        if m:
            U = p.G[:, S].T                     # (nS, m)
            BU = binv(U)
            cap = np.diag(s * s) + U.T @ BU     # W^-1 + U^T B^-1 U
            try:
                cap_f = sla.cho_factor(cap)
                cap_solve = lambda R: sla.cho_solve(cap_f, R)
            except (np.linalg.LinAlgError, ValueError):
                cap_solve = lambda R: np.linalg.lstsq(cap, R, rcond=None)[0]

            def hss_inv(R):
                BR = binv(R)
                return BR - BU @ cap_solve(U.T @ BR)
        else:
            hss_inv = binv

        if F.size == 0:
            dS = hss_inv(rS)[:, 0]
            out = np.empty_like(rhs)
            out[S] = dS
            return out
        W = 1.0 / (s * s)
        GF = p.G[:, F]
        HSF = p.G[:, S].T @ (W[:, None] * GF) if m else np.zeros((S.size, F.size))
        HFF = GF.T @ (W[:, None] * GF) + np.diag(t * p.quad[F])
        Z = hss_inv(np.hstack([rS, HSF]))
        schur = HFF - HSF.T @ Z[:, 1:]
        rhs_f = rF - HSF.T @ Z[:, :1]
        try:
            dF = np.linalg.solve(schur, rhs_f)
        except np.linalg.LinAlgError:
            dF = np.linalg.lstsq(schur, rhs_f, rcond=None)[0]
        dS = Z[:, :1] - Z[:, 1:] @ dF
        out = np.empty_like(rhs)
        out[S] = dS[:, 0]
        out[F] = dF[:, 0]
        return out

    def max_step(self, x, dx, s, u):
        step = np.inf
        if s.size:
            Gd = self.p.G @ dx
            pos = Gd > 0
            if np.any(pos):
                step = min(step, np.min(s[pos] / Gd[pos]))
        if u.size:
            d0, d1 = dx[self.i0], dx[self.i1]
            x0, x1 = x[self.i0], x[self.i1]
            A = d0 * d0 + d1 * d1
            B = x0 * d0 + x1 * d1
            mv = A > 0
            if np.any(mv):
                # largest alpha with |x + alpha d|^2 <= r^2
                roots = (-B[mv] + np.sqrt(B[mv] ** 2 + A[mv] * u[mv])) / A[mv]
                step = min(step, np.min(roots))
        return step

    def center(self, x, t, budget, stop=None):
        """Newton centering; returns (x, iterations used, unbounded flag)."""
        used = 0
        scale0 = 1.0 + np.max(np.abs(x))
        while used < budget:
            s, u = self.slacks(x)
            g = self.gradient(x, t, s, u)
            dx = self.newton_step(x, t, s, u, -g)
            used += 1
            dec = -g @ dx
            if not np.isfinite(dec):
                break
            if dec / 2.0 <= _CENTER_TOL:
                break
            step = min(1.0, 0.99 * self.max_step(x, dx, s, u))
            f0 = self.value(x, t)
            while step > 1e-14:
                xn = x + step * dx
                fn = self.value(xn, t)
                if fn <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x = xn
            if f0 - fn <= 1e-15 * max(1.0, abs(f0)):
                break   # no measurable progress left at this precision
            if np.max(np.abs(x)) > 1e12 * scale0:
                return x, used, True
            if stop is not None and stop(x):
                break
        return x, used, False


def _interior_start(prob: ConicProblem, x0):
    x = np.zeros(prob.variable_dim) if x0 is None else np.array(x0, dtype=float)
    if len(prob.discs):
        i0, i1 = prob.discs[:, 0], prob.discs[:, 1]
        rad = np.hypot(x[i0], x[i1])
        shrink = np.where(rad >= prob.radii, 0.5 * prob.radii / np.maximum(rad, 1e-300), 1.0)
        x[i0] *= shrink
        x[i1] *= shrink
    return x


def _barrier_loop(bar: _Barrier, x, tol, budget, mu=50.0, stop=None, t0=None):
    p = bar.p
    nu = max(bar.nu, 1)
    if t0 is None:
        s, u = bar.slacks(x)
        gf = p.c + p.quad * x
        gphi = bar.gradient(x, 0.0, s, u)
        nf = gf @ gf
        t0 = -(gf @ gphi) / nf if nf > 0 else 1.0
        t0 = float(np.clip(t0, 1e-3, 1e3))
    t = t0
    used = 0
    while True:
        x, it, unbounded = bar.center(x, t, budget - used, stop)
        used += it
        if unbounded:
            return x, UNBOUNDED, nu / t, used
        if stop is not None and stop(x):
            return x, "stopped", nu / t, used
        gap = nu / t
        if bar.nu == 0 or gap <= tol * max(1.0, abs(p.objective(x))):
            return x, OPTIMAL, (gap if bar.nu else 0.0), used
        if used >= budget:
            return x, MAX_ITERS, gap, used
        t *= mu


def solve_conic(problem: ConicProblem, tol=1e-8, max_iters=500, x0=None):
    """Solve a ConicProblem; ``x0`` is an optional (ideally strictly feasible) start."""
    bar = _Barrier(problem)
    x = None if x0 is None else np.asarray(x0, dtype=float)
    used = 0
    if x is None or not bar.strictly_feasible(x):
        x, status, used = _phase_one(problem, x, tol, max_iters)
        if status != OPTIMAL:
            xs = np.zeros(problem.variable_dim) if x is None else x
            return ConicSolution(xs, status, problem.objective(xs), np.inf, used)
    x, status, gap, it = _barrier_loop(bar, x, tol, max_iters - used)
    return ConicSolution(x, status, problem.objective(x), gap, used + it)


def _phase_one(prob: ConicProblem, x0, tol, max_iters):
    """Find a strictly feasible point by minimizing the max affine violation."""
    x = _interior_start(prob, x0)
    n = prob.variable_dim
    if prob.h.size == 0:
        return x, OPTIMAL, 0
    viol = prob.G @ x - prob.h
    if np.all(viol < 0):
        return x, OPTIMAL, 0
    scale = 1.0 + np.max(np.abs(prob.h))
    floor = -scale
    G1 = np.vstack([np.hstack([prob.G, -np.ones((prob.h.size, 1))]),
                    np.append(np.zeros(n), -1.0)])
    h1 = np.append(prob.h, -floor)
    c1 = np.append(np.zeros(n), 1.0)
    aux = ConicProblem(c1, G1, h1, prob.discs, prob.radii)
    bar = _Barrier(aux)
    z = np.append(x, np.max(viol) + 1.0)
    margin = 1e-9 * scale
    stop = lambda z: z[-1] < -margin
    z, status, _, used = _barrier_loop(bar, z, tol, max_iters, stop=stop, t0=1.0)
    if z[-1] < 0 and _Barrier(prob).strictly_feasible(z[:n]):
        return z[:n], OPTIMAL, used
    if status == MAX_ITERS:
        return z[:n], MAX_ITERS, used
    return z[:n], INFEASIBLE, used


# --------------------------------------------------------------------------- SDP


@dataclass
class SdpProblem:
    cost: np.ndarray
    constraints: list
    bounds: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=complex)
        n = self.cost.shape[0]
        if self.cost.shape != (n, n) or not np.allclose(self.cost, self.cost.conj().T, atol=1e-12):
            raise ValueError("cost must be a Hermitian square matrix")
        self.constraints = [np.asarray(H, dtype=complex) for H in self.constraints]
        for H in self.constraints:
            if H.shape != (n, n) or not np.allclose(H, H.conj().T, atol=1e-12):
                raise ValueError("constraint matrices must be Hermitian with the cost's shape")
        self.bounds = np.broadcast_to(np.asarray(self.bounds, dtype=float),
                                      (len(self.constraints),)).copy()

    @property
    def dim(self):
        return self.cost.shape[0]


@dataclass
class SdpSolution:
    A: np.ndarray
    status: str
    objective: float
    lower_bound: float
    iterations: int
    dual: np.ndarray = field(default=None, repr=False)


def _psd_project(X):
    w, V = np.linalg.eigh(X)
    w = np.maximum(w, 0.0)
    return (V * w) @ V.conj().T


def _halfspace_projector(vecs, bounds):
    """Euclidean projection onto {y : vecs @ y >= bounds} via a small NNLS."""
    P = vecs @ vecs.T
    P += 1e-13 * np.trace(P) * np.eye(len(P))
    L = np.linalg.cholesky(P)

    def project(y):
        r = bounds - vecs @ y
        if np.all(r <= 0):
            return y, np.zeros(len(bounds))
        lam, _ = nnls(L.T, np.linalg.solve(L, r))
        return y + vecs.T @ lam, lam

    return project


def solve_sdp(problem: SdpProblem, tol=1e-6, max_iters=5000, rho=1.0, relax=1.6):
    """ADMM with over-relaxation for a small Hermitian SDP with ``>=`` constraints."""
    n = problem.dim
    K = len(problem.constraints)
    if K == 0:
        raise ValueError("solve_sdp: at least one constraint required")
    norms = np.array([np.linalg.norm(H) for H in problem.constraints])
    if np.any(norms == 0):
        raise ValueError("solve_sdp: zero constraint matrix")
    # real vectorization preserving the trace inner product <X, Y> = Re tr(X^H Y)
    vec = lambda X: X.view(float).ravel() if X.flags.c_contiguous else np.ascontiguousarray(X).view(float).ravel()
    unvec = lambda y: y.view(complex).reshape(n, n)
    Hs = np.array([vec(H / s) for H, s in zip(problem.constraints, norms)])
    bs = problem.bounds / norms
    C = vec(problem.cost.copy())
    project = _halfspace_projector(Hs, bs)

    Z = np.zeros(2 * n * n)
    U = np.zeros(2 * n * n)
    lam = np.zeros(K)
    status = MAX_ITERS
    it = 0
    for it in range(1, max_iters + 1):
        X, lam = project(Z - U - C / rho)
        Xh = relax * X + (1.0 - relax) * Z
        Zm = unvec(Xh + U)
        Zn = vec(_psd_project(0.5 * (Zm + Zm.conj().T)))
        U = U + Xh - Zn
        r_pri = np.linalg.norm(X - Zn)
        r_dual = rho * np.linalg.norm(Zn - Z)
        Z = Zn
        scale = max(1.0, np.linalg.norm(Z))
        if r_pri <= tol * scale and r_dual <= tol * max(1.0, rho * np.linalg.norm(U)):
            status = OPTIMAL
            break
    A = unvec(Z.copy())
    A = 0.5 * (A + A.conj().T)
    # rescale into the feasible set (constraints are homogeneous in A)
    vals = np.array([np.real(np.vdot(H, A)) for H in problem.constraints])
    pos = problem.bounds > 0
    if np.any(pos):
        worst = np.min(vals[pos] / problem.bounds[pos])
        if worst > 0 and worst < 1.0:
            A = A / worst
        elif worst <= 0:
            status = INFEASIBLE
    obj = float(np.real(np.vdot(problem.cost, A)))
    y = rho * lam / norms
    lower = _dual_bound(problem, y)
    return SdpSolution(A, status, obj, lower, it, y)


def _dual_bound(problem: SdpProblem, y):
    """Scale y >= 0 so that C - sum y_k H_k >= 0 and return b^T y (weak duality)."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    if not np.any(y > 0):
        return 0.0 if np.all(problem.bounds <= 0) else -np.inf
    S = sum(yk * H for yk, H in zip(y, problem.constraints))
    try:
        top = sla.eigh(S, problem.cost, eigvals_only=True)[-1]
    except (np.linalg.LinAlgError, ValueError):
        return -np.inf
    if top <= 0:
        return float(problem.bounds @ y)
    return float(problem.bounds @ (y / top))
