"""Alternating optimization of power, receiver, phases and participants.

Each outer iteration runs

    1. closed-form transmit power and normalizing factor,
    2. receive scalar (closed form) or receive vector (SDR + SCA),
    3. phase shifts by penalty SCA,
    4. device selection by DC programming,

and re-derives steps 1-2 on the new participant set.  ``U = MSE - gamma |K|``
is recorded after every sub-step so the descent chain can be checked.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .aircomp import TransceiverState, closed_form_transceiver, mse, reduced_mse
from .channel import ChannelSet, PhaseConfig, combined_channel, rng_stream
from .config import SystemConfig
from .phase import design_phases
from .receive import optimal_receive_scalar, receive_vector
from .selection import SelectionState, dc_select, selection_constants, selection_objective

CHAIN = ("start", "power", "receive", "phase", "select", "end")
DESCENT_SLACK = 1e-8


def objective_U(transceiver: TransceiverState, phases, selected, channels: ChannelSet,
                config: SystemConfig):
    """Aggregation MSE over the selected devices minus ``gamma * |K|``."""
    sel = np.asarray(sorted(selected), dtype=int)
    if sel.size == 0:
        raise ValueError("objective_U: empty selection")
    hbar = combined_channel(channels, phases)[sel]
    rep = mse(transceiver.a, hbar, transceiver.p, transceiver.eta, config.noise_power)
    return rep.mse - config.gamma * sel.size


@dataclass
class IterationRecord:
    iteration: int
    U: dict                 # value after each sub-step, keys from CHAIN
    mse: float
    num_selected: int
    min_channel_gain: float   # min_k |a^H hbar_k| / ||a|| over the selected set
    beta: float               # phase-design max-min value
    statuses: dict
    wall_ms: float


@dataclass
class AltOptTrace:
    records: list = field(default_factory=list)
    initial_U: float = np.nan
    converged: bool = False
    counts: dict = field(default_factory=lambda: {"N1": 0, "N2": 0, "N3": 0, "N4": 0})
    fallback: bool = False

    @property
    def U(self):
        """U at the initial point followed by U at the end of every iteration."""
        return [self.initial_U] + [r.U["end"] for r in self.records]

    def is_monotone(self, slack=DESCENT_SLACK):
        u = np.asarray(self.U)
        return bool(np.all(np.diff(u) <= slack))

    def chain_holds(self, slack=DESCENT_SLACK):
        """Every sub-step is non-increasing (the phase step is an equality)."""
        for r in self.records:
            vals = [r.U[k] for k in CHAIN]
            if np.any(np.diff(vals) > slack):
                return False
            if abs(r.U["phase"] - r.U["receive"]) > slack:
                return False
        return True

    def to_rows(self):
        return [asdict(r) for r in self.records]


def _receive(hb, rng, counts):
    """Receive control on the selected effective channels (K, Nr)."""
    if hb.shape[1] == 1:
        return np.array([optimal_receive_scalar(hb[:, 0])], dtype=complex), "closed_form"
    res = receive_vector(hb, rng=rng)
    counts["N1"] += res.iterations
    return res.a, ("sdr" if res.rank_one else "sdr+sca")


def _effective_gain(a, hb):
    g = np.abs(hb @ np.conj(a))
    return float(g.min() / np.linalg.norm(a))


def alternating_optimize(channels: ChannelSet, config: SystemConfig, max_iters=20, v0=None,
                         rng=None, optimize_phases=True, select=True, num_selected=None,
                         tol=1e-6, phase_kwargs=None, selection_kwargs=None):
    """Four-step alternating optimization.

    Returns ``(transceiver, phases, selection, trace)``.  ``v0`` defaults to
    seeded random phases.  The starting set holds the devices that meet the
    MSE requirement on their own at ``v0`` (the strongest device if none
    does).  ``optimize_phases=False`` keeps ``v0`` (random-RIS baseline);
    ``select=False`` keeps every device; ``num_selected`` fixes ``|K|``.
    Iteration stops once ``|U change| < tol``; ``tol=None`` runs all
    ``max_iters`` iterations.
    """
    n = channels.num_devices
    rng = rng_stream(config.seed, "altopt") if rng is None else rng
    if v0 is None:
        v0 = PhaseConfig.random(channels.num_elements, rng_stream(config.seed, "v0"))
    v = v0.v if isinstance(v0, PhaseConfig) else np.asarray(v0, dtype=complex)
    if v.shape != (channels.num_elements,):
        raise ValueError(f"v0 must have {channels.num_elements} entries")
    phase_kwargs = dict(phase_kwargs or {})
    selection_kwargs = dict(selection_kwargs or {})
    trace = AltOptTrace()
    sigma2, P0 = config.noise_power, config.max_power

    hbar = combined_channel(channels, v)
    if not select:
        sel = tuple(range(n))
    elif num_selected is not None:
        order = np.argsort(-np.linalg.norm(hbar, axis=1), kind="stable")
        sel = tuple(sorted(order[:num_selected].tolist()))
    else:
        # best case per device is a receiver matched to it alone
        power = np.linalg.norm(hbar, axis=1) ** 2
        ok = np.flatnonzero(config.rho * power >= 1.0)
        if ok.size:
            sel = tuple(ok.tolist())
        else:
            sel = (int(np.argmax(power)),)
            trace.fallback = True
    a, _ = _receive(hbar[list(sel)], rng, trace.counts)
    state = closed_form_transceiver(a, hbar[list(sel)], P0)
    U = objective_U(state, v, sel, channels, config)
    trace.initial_U = U
    selection = None
    beta = _effective_gain(a, hbar[list(sel)])

    for it in range(max_iters):
        t0 = time.perf_counter()
        rec = {"start": U}
        statuses = {}
        # Step 1: power / normalizing factor for the current receiver
        state = closed_form_transceiver(state.a, hbar[list(sel)], P0)
        rec["power"] = objective_U(state, v, sel, channels, config)
        # Step 2: receiver
        a_new, statuses["receive"] = _receive(hbar[list(sel)], rng, trace.counts)
        if reduced_mse(a_new, hbar[list(sel)], P0, sigma2) <= reduced_mse(state.a, hbar[list(sel)], P0, sigma2):
            state = closed_form_transceiver(a_new, hbar[list(sel)], P0)
        else:
            statuses["receive"] += ":kept"
        rec["receive"] = objective_U(state, v, sel, channels, config)
        # Step 3: phases; U is unchanged at fixed (p, a)
        if optimize_phases and channels.num_elements:
            res = design_phases(channels, v, devices=sel, a=state.a, **phase_kwargs)
            trace.counts["N2"] += res.iterations
            statuses["phase"] = res.status
            v = res.v
            beta = res.beta
        else:
            statuses["phase"] = "skipped"
        rec["phase"] = rec["receive"]
        hbar = combined_channel(channels, v)
        # Step 4: participants, compared against keeping the current set
        if select:
            cand = dc_select(state.a, hbar, config, num_selected=num_selected,
                             on_infeasible="fallback", **selection_kwargs)
            trace.counts["N3"] += cand.iterations
            keep = selection_objective(sel, state.a, hbar, config)
            if cand.objective <= keep:
                selection = cand
                statuses["select"] = "dc" + (":fallback" if cand.fallback else "")
            else:
                selection = _state_for(sel, state.a, hbar, config, keep)
                statuses["select"] = "kept"
            sel = selection.selected
        else:
            statuses["select"] = "skipped"
        state = closed_form_transceiver(state.a, hbar[list(sel)], P0)
        rec["select"] = objective_U(state, v, sel, channels, config)
        # re-derive steps 1-2 on the new set
        a_new, _ = _receive(hbar[list(sel)], rng, trace.counts)
        if reduced_mse(a_new, hbar[list(sel)], P0, sigma2) <= reduced_mse(state.a, hbar[list(sel)], P0, sigma2):
            state = closed_form_transceiver(a_new, hbar[list(sel)], P0)
        U_new = objective_U(state, v, sel, channels, config)
        rec["end"] = U_new
        trace.counts["N4"] += 1
        hb = hbar[list(sel)]
        m = mse(state.a, hb, state.p, state.eta, sigma2).mse
        trace.records.append(IterationRecord(
            it + 1, rec, m, len(sel), _effective_gain(state.a, hb),
            float(beta), statuses, 1e3 * (time.perf_counter() - t0)))
        done = tol is not None and abs(U_new - U) < tol
        U = U_new
        if done:
            trace.converged = True
            break
    if selection is None or selection.selected != tuple(sel):
        selection = _state_for(sel, state.a, hbar, config,
                               selection_objective(sel, state.a, hbar, config))
    selection.fallback = selection.fallback or trace.fallback
    return state, PhaseConfig(v), selection, trace


def _state_for(sel, a, hbar, config, objective):
    """SelectionState describing a given set (slacks from the constraints)."""
    rho, rho_bar = selection_constants(a, config)
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    g = np.abs(hbar @ a.conj()) ** 2
    a2 = float(np.vdot(a, a).real)
    tau = rho_bar / g[list(sel)].min()
    e = np.maximum(0.0, np.maximum(1.0 - rho * g / a2, rho_bar - tau * g))
    e[list(sel)] = 0.0
    return SelectionState(e, float(tau), tuple(sel), rho, rho_bar, objective)


def complexity_report(config: SystemConfig, trace: AltOptTrace = None, counts=None, max_iters=None):
    """Iteration counters and the interior-point complexity bounds.

    ``counts`` (N1..N4) default to the trace's totals.  The scalar bound is
    ``N2 N4 (LM+1)^3 + N3 N4 (N+1)^2``; multi-antenna adds
    ``N4 (Nr^2+K)^3.5 + N1 N4 (Nr+2K)^3``.
    """
    c = dict(trace.counts if counts is None else counts)
    for key in ("N1", "N2", "N3", "N4"):
        c.setdefault(key, 0)
    LM, N, nr = config.num_ris * config.elements_per_ris, config.num_devices, config.bs_antennas
    bound = c["N2"] * c["N4"] * (LM + 1) ** 3 + c["N3"] * c["N4"] * (N + 1) ** 2
    out = {"counts": c, "bound_scalar": bound}
    if nr > 1:
        K = N
        out["bound_multi"] = bound + c["N4"] * (nr ** 2 + K) ** 3.5 + c["N1"] * c["N4"] * (nr + 2 * K) ** 3
    if max_iters is not None:
        out["within_budget"] = c["N4"] <= max_iters
    return out


class MultiRISAirCompOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`alternating_optimize`.

    ``fit(channels)`` takes a :class:`ChannelSet` and stores
    ``transceiver_``, ``phases_``, ``selection_`` and ``trace_``;
    ``predict(channels)`` returns the boolean participation mask.
    """

    def __init__(self, config=None, max_iters=20, optimize_phases=True, select=True,
                 num_selected=None, tol=1e-6):
        self.config = config
        self.max_iters = max_iters
        self.optimize_phases = optimize_phases
        self.select = select
        self.num_selected = num_selected
        self.tol = tol

    def _check(self, channels):
        if not isinstance(channels, ChannelSet):
            raise TypeError("expected a ChannelSet")
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise ValueError("max_iters must be a positive integer")
        if self.num_selected is not None and not 1 <= self.num_selected <= channels.num_devices:
            raise ValueError("num_selected must lie in [1, num_devices]")
        return self.config if self.config is not None else SystemConfig()

    def fit(self, channels, y=None, v0=None):
        config = self._check(channels)
        out = alternating_optimize(channels, config, self.max_iters, v0=v0,
                                   optimize_phases=self.optimize_phases, select=self.select,
                                   num_selected=self.num_selected, tol=self.tol)
        self.transceiver_, self.phases_, self.selection_, self.trace_ = out
        self.n_devices_ = channels.num_devices
        return self

    def predict(self, channels=None):
        check_is_fitted(self)
        return self.selection_.mask

    def score(self, channels=None, y=None):
        """Negative final objective (higher is better)."""
        check_is_fitted(self)
        return -self.trace_.U[-1]
