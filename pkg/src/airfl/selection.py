"""Device selection by DC programming.

With the transceiver and phases fixed, pick the participant set that trades
aggregation error against the number of devices.  The l0 count of the slack
vector ``e`` is written as ``||e||_1 - |||e|||_k`` (Ky Fan k-norm) and the
resulting difference-of-convex problem is solved by majorization-minimization,
once for every candidate k.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .aircomp import receive_gains
from .config import SystemConfig
from .convex import ConicProblem, solve_conic, OPTIMAL, MAX_ITERS

SELECT_THRESHOLD = 1e-6
DC_ALPHA = 1e-3


class SelectionInfeasible(ValueError):
    """No device can meet the MSE requirement on its own."""


def ky_fan_norm(e, k):
    """Sum of the ``k`` largest absolute entries."""
    e = np.abs(np.asarray(e, dtype=float).ravel())
    if not 0 <= k <= e.size:
        raise ValueError(f"k={k} outside [0, {e.size}]")
    if k == 0:
        return 0.0
    # exactly rounded sum so that identities with the subgradient hold bit for bit
    return math.fsum(np.sort(e)[::-1][:k])


def _top_k(e, k):
    # largest magnitudes first; ties go to the lower index
    idx = np.arange(e.size)
    return np.lexsort((idx, -np.abs(e)))[:k]


def ky_fan_subgradient(e, k):
    e = np.asarray(e, dtype=float).ravel()
    if not 0 <= k <= e.size:
        raise ValueError(f"k={k} outside [0, {e.size}]")
    out = np.zeros_like(e)
    top = _top_k(e, k)
    out[top] = np.sign(e[top])
    return out


@dataclass
class SelectionState:
    e: np.ndarray
    tau: float
    selected: tuple
    rho: float
    rho_bar: float
    objective: float = np.nan     # sigma^2 |a|^2 / (P0 min gain) - gamma |K|
    k: int = 0                    # Ky Fan index of the winning run
    iterations: int = 0           # DC iterations summed over all runs
    history: list = field(default_factory=list)   # majorizer values of the winning run
    fallback: bool = False        # nothing survived; strongest device forced in
    status: str = OPTIMAL
    refined: int = 0              # add/drop moves applied after the DC runs

    @property
    def mask(self):
        m = np.zeros(self.e.size, bool)
        m[list(self.selected)] = True
        return m


def _gains(a, hbar):
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    return np.abs(receive_gains(a, hbar)) ** 2, float(np.vdot(a, a).real)


def selection_constants(a, config: SystemConfig):
    """``(rho, rho_bar)`` for a fixed receive vector."""
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    rho = config.epsilon0 * config.max_power / config.noise_power
    rho_bar = config.noise_power * float(np.vdot(a, a).real) / (config.gamma * config.max_power)
    return rho, rho_bar


def selection_objective(selected, a, hbar, config: SystemConfig):
    sel = np.asarray(sorted(selected), dtype=int)
    if sel.size == 0:
        raise ValueError("selection_objective: empty set")
    g, a2 = _gains(a, hbar)
    gmin = g[sel].min()
    if gmin == 0:
        return np.inf
    return float(config.noise_power * a2 / (config.max_power * gmin) - config.gamma * sel.size)


def mse_feasible(a, hbar, config: SystemConfig):
    """Devices that meet the MSE requirement on their own: ``||a||^2 <= rho |a^H hbar_k|^2``."""
    g, a2 = _gains(a, hbar)
    rho, _ = selection_constants(a, config)
    return rho * g >= a2 * (1.0 - 1e-12)


def best_subset(a, hbar, config: SystemConfig):
    """Exhaustive search over all MSE-feasible nonempty subsets: ``(set, objective)``."""
    g, _ = _gains(a, hbar)
    ok = np.flatnonzero(mse_feasible(a, hbar, config))
    best, best_val = None, np.inf
    for r in range(1, ok.size + 1):
        for sub in itertools.combinations(ok.tolist(), r):
            val = selection_objective(sub, a, hbar, config)
            if val < best_val - 1e-15:
                best, best_val = sub, val
    return best, best_val


def _dc_run(g, lb, rho_bar, k, alpha, tol, max_iters):
    """MM iterations of the convexified DC problem for one Ky Fan index ``k``."""
    n = g.size
    # warm start: the k weakest devices dropped, the rest pinned at their bounds
    keep = np.argsort(-g, kind="stable")[:max(n - k, 1)]
    tau0 = rho_bar / max(g[keep].min(), 1e-300)
    e = np.maximum(lb, np.maximum(rho_bar - tau0 * g, 0.0))
    G = np.zeros((n + 1, n + 1))
    G[:n, :n] = -np.eye(n)
    G[:n, n] = -g
    G[n, n] = -1.0
    rows_lb = -np.eye(n, n + 1)
    G = np.vstack([G, rows_lb])
    h = np.concatenate([np.full(n, -rho_bar), [0.0], -lb])
    quad = np.append(np.full(n, alpha), 0.0)
    hist = []
    status = OPTIMAL
    x = np.append(e, tau0)
    prev = np.inf
    it = 0
    while it < max_iters:
        s = ky_fan_subgradient(e, k) + alpha * e
        c = np.append(1.0 - s, 1.0)
        margin = 1e-3 * (1.0 + rho_bar)
        x0 = np.append(e + margin, x[n] + margin + rho_bar / max(g.max(), 1e-300))
        sol = solve_conic(ConicProblem(c, G, h, quad=quad), tol=1e-11, x0=x0)
        it += 1
        if sol.status not in (OPTIMAL, MAX_ITERS):
            status = sol.status
            break
        x = sol.x
        e_new = np.maximum(x[:n], 0.0)
        h_old = ky_fan_norm(e, k) + 0.5 * alpha * e @ e
        maj = (np.sum(e_new) + x[n] + 0.5 * alpha * e_new @ e_new
               - h_old - s @ (e_new - e))
        hist.append(float(maj))
        e = e_new
        if prev - maj < tol:
            break
        prev = maj
    return e, float(x[n]), hist, it, status


def _refine(sel, feasible, objective, fixed_size):
    """Single add/drop moves on the true objective until none helps.

    Ties in the DC subproblem (a device whose removal lowers tau by exactly
    what its slack costs) leave MM on a flat face with a small non-zero
    slack; this resolves them.  Only strict improvements are accepted.
    """
    sel = set(sel)
    cur = objective(sel)
    moves = 0
    while True:
        cands = []
        if not fixed_size:
            cands += [sel | {j} for j in np.flatnonzero(feasible) if j not in sel]
            cands += [sel - {j} for j in sel if len(sel) > 1]
        else:
            cands += [(sel - {i}) | {j} for i in sel for j in np.flatnonzero(feasible)
                      if j not in sel]
        if not cands:
            break
        vals = [objective(c) for c in cands]
        j = int(np.argmin(vals))
        if vals[j] >= cur - 1e-12:
            break
        sel, cur = cands[j], vals[j]
        moves += 1
    return tuple(sorted(int(i) for i in sel)), cur, moves


def dc_select(a, hbar, config: SystemConfig, alpha=DC_ALPHA, tol=1e-9, max_iters=50,
              num_selected=None, threshold=SELECT_THRESHOLD, on_infeasible="raise",
              refine=True):
    """Select devices by DC programming.

    One DC run per Ky Fan index ``k = 0..N-1`` (``k`` devices may be dropped
    without penalty); the run whose selected set has the lowest objective
    wins.  ``num_selected`` restricts to the single run with ``k = N -
    num_selected`` and waives the MSE requirement.  If no device meets the MSE requirement, raise
    :class:`SelectionInfeasible` or, with ``on_infeasible="fallback"``,
    return the strongest device with ``fallback=True``.  ``refine`` applies
    :func:`_refine` to the winner.
    """
    g, a2 = _gains(a, hbar)
    n = g.size
    if n == 0:
        raise ValueError("dc_select: no devices")
    rho, rho_bar = selection_constants(a, config)
    lb = np.maximum(0.0, 1.0 - rho * g / a2)
    if num_selected is not None:
        # a prescribed participant count waives the MSE requirement
        lb = np.zeros(n)
    feasible = lb <= 0.0
    if not np.any(feasible):
        if on_infeasible != "fallback":
            raise SelectionInfeasible("no device meets the MSE requirement")
        j = int(np.argmax(g))
        e = lb.copy()
        e[j] = 0.0
        return SelectionState(e, rho_bar / g[j], (j,), rho, rho_bar,
                              selection_objective((j,), a, hbar, config), n - 1, 0, [], True)
    if num_selected is not None:
        if not 1 <= num_selected <= n:
            raise ValueError(f"num_selected must be in [1, {n}]")
        ks = [n - num_selected]
    else:
        ks = range(n)
    best = None
    total = 0
    for k in ks:
        e, tau, hist, it, status = _dc_run(g, lb, rho_bar, k, alpha, tol, max_iters)
        total += it
        if num_selected is not None:
            # exactly |K| devices: smallest slack first, stronger device on ties
            order = np.lexsort((-g, e))
            sel = tuple(sorted(order[:num_selected].tolist()))
        else:
            sel = tuple(np.flatnonzero(e <= threshold).tolist())
        if not sel:
            continue
        val = selection_objective(sel, a, hbar, config)
        if best is None or val < best[0] - 1e-12:
            best = (val, k, e, sel, hist, status)
    if best is None:
        # every run ended on a tie face; start the refinement from the strongest device
        j = int(np.argmax(np.where(feasible, g, -np.inf)))
        best = (selection_objective((j,), a, hbar, config), n - 1, lb.copy(), (j,), [], "empty")
    val, k, e, sel, hist, status = best
    moves = 0
    if refine:
        obj = lambda S: selection_objective(S, a, hbar, config)
        sel2, val2, moves = _refine(sel, feasible, obj, num_selected is not None)
        sel, val = sel2, val2
    tau = rho_bar / g[list(sel)].min()
    # slacks consistent with the final set and tau
    e = np.maximum(e, np.maximum(lb, rho_bar - tau * g))
    out = np.setdiff1d(np.arange(n), sel)
    e[out] = np.maximum(e[out], 2.0 * threshold)
    e[list(sel)] = 0.0
    return SelectionState(e, float(tau), sel, rho, rho_bar, val, k, total, hist, False, status,
                          moves)
