"""Receive scalar / receive vector control.

Single antenna: closed form ``|a| = 1 / min_k |hbar_k|``.  Multiple antennas:
semidefinite relaxation of ``min ||a||^2 s.t. |a^H hbar_k|^2 >= 1``, rank-one
recovery, then successive convex approximation on the linearized constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex import ConicProblem, SdpProblem, solve_conic, solve_sdp, INFEASIBLE, OPTIMAL

RANK_ONE_RATIO = 1e-6
RANDOMIZATION_SAMPLES = 200


def optimal_receive_scalar(hbar):
    """Receive scalar (real, positive) for scalar effective channels."""
    h = np.abs(np.asarray(hbar).ravel())
    if h.size == 0:
        raise ValueError("empty device set")
    if np.any(h == 0):
        raise ValueError(f"zero effective channel for device(s) {np.flatnonzero(h == 0).tolist()}")
    return 1.0 / h.min()


def feasible_rescale(a, hbar):
    """Scale ``a`` so that ``min_k |a^H hbar_k| = 1`` (the cheapest feasible multiple)."""
    g = np.abs(hbar @ np.conj(a))
    if g.min() == 0:
        raise ValueError("direction is orthogonal to a device channel")
    return a / g.min()


@dataclass
class ReceiveResult:
    a: np.ndarray
    sdr_matrix: np.ndarray
    sdr_lower_bound: float
    rank_one: bool
    norms: list = field(default_factory=list)   # ||a||^2 per SCA iterate
    iterations: int = 0
    status: str = OPTIMAL

    @property
    def gap(self):
        return float(np.vdot(self.a, self.a).real - self.sdr_lower_bound)


def _channels(hbar):
    h = np.asarray(hbar, dtype=complex)
    if h.ndim != 2:
        raise ValueError("expected effective channels of shape (K, Nr)")
    return h


def sdr_receive_vector(hbar, rng=None, samples=RANDOMIZATION_SAMPLES, tol=1e-6, max_iters=5000):
    """Solve the SDR and recover a feasible receive vector.

    Returns ``(A, a_candidate, info)``; ``A`` is the relaxed PSD solution,
    ``a_candidate`` is feasible and ``info`` carries the SDR lower bound.
    """
    h = _channels(hbar)
    K, nr = h.shape
    if nr == 1:
        a = np.array([optimal_receive_scalar(h[:, 0])], dtype=complex)
        A = np.outer(a, a.conj())
        return A, a, {"lower_bound": float(a.real[0] ** 2), "rank_one": True}
    scale = np.max(np.linalg.norm(h, axis=1))
    hn = h / scale
    prob = SdpProblem(np.eye(nr), [np.outer(x, x.conj()) for x in hn], np.ones(K))
    sol = solve_sdp(prob, tol=tol, max_iters=max_iters)
    if sol.status == INFEASIBLE:
        raise ValueError("SDR infeasible")
    w, V = np.linalg.eigh(sol.A)
    rank_one = w[-2] < RANK_ONE_RATIO * w[-1]
    best = feasible_rescale(np.sqrt(max(w[-1], 0.0)) * V[:, -1], hn)
    if not rank_one:
        rng = np.random.default_rng(0) if rng is None else rng
        root = V * np.sqrt(np.maximum(w, 0.0))
        xi = root @ ((rng.standard_normal((nr, samples)) + 1j * rng.standard_normal((nr, samples))) / np.sqrt(2))
        g = np.abs(hn.conj() @ xi).min(axis=0)
        ok = g > 0
        if np.any(ok):
            cand_norm = np.sum(np.abs(xi[:, ok]) ** 2, axis=0) / g[ok] ** 2
            j = np.argmin(cand_norm)
            if cand_norm[j] < np.vdot(best, best).real:
                best = xi[:, ok][:, j] / g[ok][j]
    A = sol.A / scale ** 2
    info = {"lower_bound": sol.lower_bound / scale ** 2, "rank_one": bool(rank_one),
            "sdp_status": sol.status, "sdp_objective": sol.objective / scale ** 2}
    return A, best / scale, info


def sca_refine_receive(a0, hbar, tol=1e-8, max_iters=50):
    """SCA on the linearized gain constraints starting from a feasible ``a0``.

    Returns ``(a, norms)`` with the squared norm of every iterate.
    """
    h = _channels(hbar)
    a = np.asarray(a0, dtype=complex).ravel()
    gains = np.abs(h @ a.conj()) ** 2
    if np.any(gains < 1.0 - 1e-9):
        raise ValueError("infeasible start: need |a^H hbar_k| >= 1 for all k")
    scale = np.max(np.linalg.norm(h, axis=1))
    hn = h / scale
    a = a * scale
    nr = a.size
    # Re(a^H h) = [hr, hi] . [ar, ai],  Im(a^H h) = [hi, -hr] . [ar, ai]
    re_rows = np.hstack([hn.real, hn.imag])
    im_rows = np.hstack([hn.imag, -hn.real])
    norms = [float(np.vdot(a, a).real) / scale ** 2]
    n = 0
    while n < max_iters:
        x = np.concatenate([a.real, a.imag])
        b = np.column_stack([re_rows @ x, im_rows @ x])
        # 2 b_z . b(x) - |b_z|^2 >= 1
        G = -2.0 * (b[:, :1] * re_rows + b[:, 1:] * im_rows)
        hh = -(1.0 + np.sum(b * b, axis=1))
        prob = ConicProblem(np.zeros(2 * nr), G, hh, quad=np.full(2 * nr, 2.0))
        sol = solve_conic(prob, tol=1e-10, x0=1.001 * x)
        n += 1
        if sol.status != OPTIMAL:
            break
        xn = sol.x
        a_new = xn[:nr] + 1j * xn[nr:]
        new_norm = float(np.vdot(a_new, a_new).real)
        if new_norm > np.vdot(a, a).real:
            break
        step = float(np.sum(np.abs(a_new - a) ** 2))
        a = a_new
        norms.append(new_norm / scale ** 2)
        if step < tol:
            break
    return a / scale, norms


def receive_vector(hbar, rng=None, tol=1e-8, max_iters=50):
    """SDR initialization followed by SCA refinement (skipped if the SDR is tight)."""
    h = _channels(hbar)
    A, a0, info = sdr_receive_vector(h, rng=rng)
    if info["rank_one"] or h.shape[1] == 1:
        return ReceiveResult(a0, A, info["lower_bound"], True,
                             [float(np.vdot(a0, a0).real)], 0)
    a, norms = sca_refine_receive(a0, h, tol=tol, max_iters=max_iters)
    # the SCA solution satisfies the true constraints only up to solver tolerance
    a = feasible_rescale(a, h) if np.abs(h @ a.conj()).min() < 1 else a
    return ReceiveResult(a, A, info["lower_bound"], False, norms, len(norms) - 1)
