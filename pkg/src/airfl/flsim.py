"""Federated linear regression over the air, baselines and lifetime model.

Every round each selected device draws 30 fresh samples of
``y = -3 x + 2 + 0.5 n`` and uploads its least-squares sufficient statistics
``(sum x^2, sum x, sum x y, sum y)``.  The statistics go through the AirComp
chain (normalize, transmit, noisy superposition, de-normalize); the server
accumulates the recovered sums over rounds and solves the normal equations.
Without receiver noise this is exactly centralized least squares on all data
seen so far.

Channels are quasi-static: one realization per seed, optimized once per
scheme.  Data, holdout and receiver-noise draws come from named streams, so
schemes compared on a seed see the same samples and the same unit noise.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .aircomp import AirCompNormalizer, aggregate, closed_form_transceiver, reduced_mse
from .altopt import alternating_optimize
from .channel import PhaseConfig, combined_channel, generate_topology, rng_stream, sample_channels
from .config import SystemConfig

SCHEMES = ("no-RIS", "single-RIS", "random-RIS", "multi-RIS", "optimal")
SLOPE, INTERCEPT, NOISE_STD = -3.0, 2.0, 0.5
SAMPLES_PER_DEVICE = 30
HOLDOUT_SIZE = 1000
SINGLE_RIS_XY = (50.0, 0.0)


def generate_data(rng, n):
    x = rng.uniform(0.0, 1.0, n)
    y = SLOPE * x + INTERCEPT + NOISE_STD * rng.standard_normal(n)
    return x, y


def holdout_set(seed):
    return generate_data(rng_stream(seed, "holdout"), HOLDOUT_SIZE)


def device_data(seed, device, rnd, n=SAMPLES_PER_DEVICE):
    return generate_data(rng_stream(seed, f"data/{device}", rnd), n)


def sufficient_stats(x, y):
    return np.array([np.sum(x * x), np.sum(x), np.sum(x * y), np.sum(y)])


def solve_stats(stats, count):
    """Least-squares ``(slope, intercept)`` from summed statistics of ``count`` samples."""
    sxx, sx, sxy, sy = stats
    A = np.array([[sxx, sx], [sx, count]])
    return np.linalg.solve(A, np.array([sxy, sy]))


def predict(model, x):
    return model[0] * np.asarray(x) + model[1]


def test_error(model, holdout):
    """Mean squared prediction error on ``(x, y)``."""
    x, y = holdout
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("test_error: empty holdout set")
    return float(np.mean((np.asarray(y) - predict(model, x)) ** 2))


def network_lifetime(N, K, lambda_c, delta):
    """Rounds until the first device runs out of energy."""
    if not (isinstance(N, (int, np.integer)) and isinstance(K, (int, np.integer))):
        raise TypeError("N and K must be integers")
    if not 1 <= K <= N:
        raise ValueError("need 1 <= K <= N")
    if not 0.0 <= lambda_c <= 1.0:
        raise ValueError("lambda_c must lie in [0, 1]")
    if not delta > 0:
        raise ValueError("delta must be positive")
    # exact rational arithmetic avoids floor() flipping on representation error
    from fractions import Fraction
    lc = Fraction(lambda_c)
    return int(math.floor(Fraction(N) * Fraction(delta) / (N - lc * N + lc * K)))


@dataclass
class LifetimeModel:
    delta: float = 100.0
    lambda_c: float = 0.5

    def lifetime(self, N, K):
        return network_lifetime(N, K, self.lambda_c, self.delta)


@dataclass
class LearningTrace:
    scheme: str
    seed: int
    rounds: list = field(default_factory=list)   # dicts: round, training_loss, test_error, mse, num_selected
    model: np.ndarray = None
    selected: tuple = ()
    objective_U: float = np.nan
    mse: float = 0.0
    min_channel_gain: float = np.nan
    beta: float = np.nan
    opt_iterations: int = 0
    wall_ms: float = 0.0
    fallback: bool = False

    @property
    def final_test_error(self):
        return self.rounds[-1]["test_error"]

    @property
    def mean_test_error(self):
        """Test error averaged over rounds."""
        return float(np.mean([r["test_error"] for r in self.rounds]))


def scheme_channels(config: SystemConfig, scheme, realization=0):
    """Channel set for a scheme; direct links are shared by all schemes."""
    topo = generate_topology(config, realization)
    if scheme in ("no-RIS", "optimal"):
        cfg = config.replace(num_ris=0)
        t = generate_topology(cfg, realization, ris_positions=np.zeros((0, 3)))
        return sample_channels(t, cfg, realization)
    if scheme in ("single-RIS", "random-RIS"):
        cfg = config.replace(num_ris=1, elements_per_ris=config.num_elements)
        pos = np.array([[SINGLE_RIS_XY[0], SINGLE_RIS_XY[1], config.ris_height_m]])
        t = generate_topology(cfg, realization, ris_positions=pos)
        return sample_channels(t, cfg, realization, tag="single")
    if scheme == "multi-RIS":
        return sample_channels(topo, config, realization)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def optimize_scheme(config: SystemConfig, scheme, max_iters=20, num_selected=None, realization=0):
    """Run the alternating optimizer for a scheme; ``None`` for the noise-free bound."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "optimal":
        return None, None
    ch = scheme_channels(config, scheme, realization)
    # single-RIS and random-RIS share the surface and the starting phases
    tag = "single" if scheme in ("single-RIS", "random-RIS") else scheme
    v0 = PhaseConfig.random(ch.num_elements, rng_stream(config.seed, f"v0/{tag}", realization))
    out = alternating_optimize(ch, config, max_iters=max_iters, v0=v0,
                               optimize_phases=(scheme != "random-RIS"),
                               num_selected=num_selected)
    return ch, out


def run_regression_fl(config: SystemConfig, scheme, rounds=50, max_iters=20, num_selected=None,
                      noise=True, accumulate=True, center=False, realization=0):
    """Federated least squares under one scheme; returns a :class:`LearningTrace`.

    Each round's global model is the least-squares fit to the aggregated
    statistics of that round.  ``accumulate=True`` keeps a running sum over
    rounds instead (the fit then uses every sample seen so far).
    ``noise=False`` removes the receiver noise while keeping the scheme's
    participants.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    t0 = time.perf_counter()
    seed = config.seed
    ch, out = optimize_scheme(config, scheme, max_iters, num_selected, realization)
    trace = LearningTrace(scheme, seed)
    if out is None:
        sel = tuple(range(config.num_devices))
        hb = None
        noise = False
    else:
        state, phases, selection, opt = out
        sel = tuple(selection.selected)
        hb = combined_channel(ch, phases)[list(sel)]
        state = closed_form_transceiver(state.a, hb, config.max_power)
        trace.objective_U = opt.U[-1]
        trace.mse = reduced_mse(state.a, hb, config.max_power, config.noise_power)
        g = np.abs(hb @ np.conj(state.a))
        trace.min_channel_gain = float(g.min() / np.linalg.norm(state.a))
        trace.beta = opt.records[-1].beta if opt.records else np.nan
        trace.opt_iterations = len(opt.records)
        trace.fallback = bool(selection.fallback)
    if len(sel) == 0:
        raise ValueError("no devices selected")
    trace.selected = sel
    holdout = holdout_set(seed)
    total = np.zeros(4)
    count = 0
    norm = AirCompNormalizer(center=center)
    for r in range(1, rounds + 1):
        data = [device_data(seed, k, r) for k in sel]
        stats = np.array([sufficient_stats(x, y) for x, y in data])
        if hb is None:
            recovered = stats.sum(axis=0)
        else:
            sym = norm.fit(stats).transform(stats)
            nz = None
            if noise:
                unit = rng_stream(seed, "rx_noise", r)
                nz = np.sqrt(config.noise_power / 2.0) * (
                    unit.standard_normal((ch.bs_antennas, 4)) + 1j * unit.standard_normal((ch.bs_antennas, 4)))
            s_hat, _ = aggregate(sym, hb, state, nz)
            recovered = len(sel) * norm.inverse_transform(s_hat)
        if accumulate:
            total += recovered
            count += len(sel) * SAMPLES_PER_DEVICE
        else:
            total, count = recovered, len(sel) * SAMPLES_PER_DEVICE
        model = solve_stats(total, count)
        xs = np.concatenate([d[0] for d in data])
        ys = np.concatenate([d[1] for d in data])
        trace.rounds.append({
            "round": r,
            "training_loss": test_error(model, (xs, ys)),
            "test_error": test_error(model, holdout),
            "mse": trace.mse,
            "num_selected": len(sel),
        })
    trace.model = model
    trace.wall_ms = 1e3 * (time.perf_counter() - t0)
    return trace


def _blobs(rng, n, dim, sep):
    labels = rng.integers(0, 2, n)
    centers = np.full(dim, sep / np.sqrt(dim))
    X = rng.standard_normal((n, dim)) + np.where(labels[:, None] == 1, centers, -centers)
    return X, labels


def _logistic_grad(w, X, y):
    z = X @ w[:-1] + w[-1]
    p = 0.5 * (1.0 + np.tanh(0.5 * z))   # stable sigmoid
    r = p - y
    return np.append(X.T @ r, r.sum()) / len(y)


def run_logistic_fl(config: SystemConfig, scheme, rounds=30, dim=64, local_steps=5, lr=0.5,
                    sep=2.0, max_iters=20, noise=True, realization=0):
    """Federated logistic regression on two Gaussian blobs (``dim`` features).

    Devices run ``local_steps`` gradient steps from the global model on 30
    fresh samples; the models (``dim + 1`` coordinates) are averaged over the
    air.  ``test_error`` is the misclassification rate on a fixed holdout.
    """
    if rounds < 1 or dim < 1:
        raise ValueError("rounds and dim must be >= 1")
    seed = config.seed
    ch, out = optimize_scheme(config, scheme, max_iters, None, realization)
    trace = LearningTrace(scheme, seed)
    if out is None:
        sel, hb, noise = tuple(range(config.num_devices)), None, False
    else:
        state, phases, selection, _ = out
        sel = tuple(selection.selected)
        hb = combined_channel(ch, phases)[list(sel)]
        state = closed_form_transceiver(state.a, hb, config.max_power)
        trace.mse = reduced_mse(state.a, hb, config.max_power, config.noise_power)
    trace.selected = sel
    Xt, yt = _blobs(rng_stream(seed, "holdout/blobs"), HOLDOUT_SIZE, dim, sep)
    w = np.zeros(dim + 1)
    norm = AirCompNormalizer(center=False)
    for r in range(1, rounds + 1):
        local, losses = [], []
        for k in sel:
            X, y = _blobs(rng_stream(seed, f"blobs/{k}", r), SAMPLES_PER_DEVICE, dim, sep)
            wk = w.copy()
            for _ in range(local_steps):
                wk -= lr * _logistic_grad(wk, X, y)
            local.append(wk)
            z = X @ wk[:-1] + wk[-1]
            losses.append(np.mean(np.logaddexp(0.0, z) - y * z))
        W = np.array(local)
        if hb is None:
            w = W.mean(axis=0)
        else:
            sym = norm.fit(W).transform(W)
            nz = None
            if noise:
                unit = rng_stream(seed, "rx_noise/blobs", r)
                shape = (ch.bs_antennas, dim + 1)
                nz = np.sqrt(config.noise_power / 2.0) * (unit.standard_normal(shape)
                                                          + 1j * unit.standard_normal(shape))
            w = norm.inverse_transform(aggregate(sym, hb, state, nz)[0])
        pred = (Xt @ w[:-1] + w[-1]) > 0
        trace.rounds.append({"round": r, "training_loss": float(np.mean(losses)),
                             "test_error": float(np.mean(pred != yt)),
                             "mse": trace.mse, "num_selected": len(sel)})
    trace.model = w
    return trace


def centralized_fit(seed, devices, rounds):
    """Ordinary least squares on every sample the devices drew in ``rounds``.

    ``rounds`` is a count (rounds 1..rounds) or an explicit list of rounds.
    """
    xs, ys = [], []
    rounds = range(1, rounds + 1) if isinstance(rounds, (int, np.integer)) else rounds
    for r in rounds:
        for k in devices:
            x, y = device_data(seed, k, r)
            xs.append(x)
            ys.append(y)
    x = np.concatenate(xs)
    X = np.column_stack([x, np.ones_like(x)])
    return np.linalg.lstsq(X, np.concatenate(ys), rcond=None)[0]


def rounds_to_target(trace: LearningTrace, target):
    """First round whose test error is at most ``target`` (``len+1`` if never)."""
    for row in trace.rounds:
        if row["test_error"] <= target:
            return row["round"]
    return len(trace.rounds) + 1


SWEEP_AXES = ("K", "M", "N", "lambda_c")


def sweep_experiment(config: SystemConfig, axis, values, seeds, rounds=50, schemes=("multi-RIS",),
                     max_iters=20, target_error=0.26, lifetime_delta=100.0):
    """Run the pipeline on a grid of one parameter and summarize per value.

    Returns ``(rows, table)``: per-(value, scheme, seed) rows and a table of
    seed means.  ``K`` fixes the participant count, ``M`` the elements per
    RIS, ``N`` the number of devices (reporting rounds to reach
    ``target_error``), ``lambda_c`` evaluates the lifetime model at the
    selected participant count.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    seeds = list(range(seeds)) if isinstance(seeds, (int, np.integer)) else list(seeds)
    values = list(values)
    if not values or not seeds:
        raise ValueError("need at least one value and one seed")
    rows = []
    for val in values:
        for scheme in schemes:
            for seed in seeds:
                cfg = config.replace(seed=int(seed))
                num_sel = None
                if axis == "K":
                    num_sel = int(val)
                    if not 1 <= num_sel <= cfg.num_devices:
                        raise ValueError(f"K={val} outside [1, {cfg.num_devices}]")
                elif axis == "M":
                    cfg = cfg.replace(elements_per_ris=int(val))
                elif axis == "N":
                    cfg = cfg.replace(num_devices=int(val))
                elif not 0.0 <= float(val) <= 1.0:
                    raise ValueError("lambda_c values must lie in [0, 1]")
                tr = run_regression_fl(cfg, scheme, rounds, max_iters, num_selected=num_sel)
                row = {"value": val, "scheme": scheme, "seed": int(seed), "trace": tr,
                       "test_error": tr.final_test_error,
                       "num_selected": len(tr.selected),
                       "rounds_to_target": rounds_to_target(tr, target_error)}
                if axis == "lambda_c":
                    row["lifetime"] = network_lifetime(cfg.num_devices, len(tr.selected),
                                                       float(val), lifetime_delta)
                rows.append(row)
    table = []
    for val in values:
        for scheme in schemes:
            sub = [r for r in rows if r["value"] == val and r["scheme"] == scheme]
            entry = {"value": val, "scheme": scheme, "seeds": len(sub),
                     "test_error": float(np.mean([r["test_error"] for r in sub])),
                     "num_selected": float(np.mean([r["num_selected"] for r in sub])),
                     "rounds_to_target": float(np.mean([r["rounds_to_target"] for r in sub]))}
            if axis == "lambda_c":
                entry["lifetime"] = float(np.mean([r["lifetime"] for r in sub]))
            table.append(entry)
    return rows, table
