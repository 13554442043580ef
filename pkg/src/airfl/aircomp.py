"""AirComp signal model: closed-form transceivers, MSE and aggregation.

The receiver combines with ``a^H y`` where ``a`` has one entry per BS
antenna.  For a single antenna with a real receive scalar (the convention
used throughout, only ``|a|`` matters) this is the plain product ``a * y``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted


@dataclass(frozen=True)
class TransceiverState:
    p: np.ndarray    # (K,) complex transmit scalars
    a: np.ndarray    # (Nr,) receive vector
    eta: float


@dataclass(frozen=True)
class MseReport:
    mse: float
    signal_misalignment: float
    noise_term: float


def _as_receive(a):
    return np.atleast_1d(np.asarray(a, dtype=complex))


def _as_channels(hbar, nr):
    h = np.asarray(hbar, dtype=complex)
    if h.ndim == 1:
        h = h[:, None] if nr == 1 else h[None, :]
    if h.ndim != 2 or h.shape[1] != nr:
        raise ValueError(f"effective channels must have shape (K, {nr}), got {np.shape(hbar)}")
    return h


def receive_gains(a, hbar):
    """Post-combining gains ``a^H hbar_k`` for every device."""
    a = _as_receive(a)
    h = _as_channels(hbar, a.size)
    return h @ a.conj()


def optimal_power(a, hbar, eta):
    """Transmit scalars that make every ``a^H hbar_k p_k / sqrt(eta)`` equal one."""
    g = receive_gains(a, hbar)
    zero = np.flatnonzero(np.abs(g) == 0)
    if zero.size:
        raise ValueError(f"zero effective channel for device(s) {zero.tolist()}")
    return np.sqrt(eta) * g.conj() / np.abs(g) ** 2


def normalizing_factor(a, hbar, max_power):
    g = receive_gains(a, hbar)
    if g.size == 0:
        raise ValueError("normalizing_factor: empty device set")
    return float(max_power * np.min(np.abs(g) ** 2))


def closed_form_transceiver(a, hbar, max_power):
    eta = normalizing_factor(a, hbar, max_power)
    return TransceiverState(optimal_power(a, hbar, eta), _as_receive(a), eta)


def mse(a, hbar, p, eta, sigma2):
    """MSE of the aggregate estimate, split into misalignment and noise parts."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    a = _as_receive(a)
    g = receive_gains(a, hbar)
    mis = float(np.sum(np.abs(g * np.asarray(p) / np.sqrt(eta) - 1.0) ** 2))
    noise = float(sigma2 * np.vdot(a, a).real / eta)
    return MseReport(mis + noise, mis, noise)


def reduced_mse(a, hbar, max_power, sigma2):
    """MSE under the closed-form power and normalizing factor."""
    a = _as_receive(a)
    return float(sigma2 * np.vdot(a, a).real / normalizing_factor(a, hbar, max_power))


def draw_noise(rng, nr, sigma2, size=None):
    """AWGN samples CN(0, sigma2 I); shape (Nr,) or (Nr, size)."""
    shape = (nr,) if size is None else (nr, size)
    return np.sqrt(sigma2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def aggregate(symbols, hbar, state: TransceiverState, noise=None):
    """Over-the-air estimate of ``sum_k s_k``.

    ``symbols`` is (K,) or (K, D) for D coordinates sent in D channel uses;
    ``noise`` matches with shape (Nr,) or (Nr, D).  Returns ``(s_hat, error)``.
    """
    s = np.asarray(symbols)
    a = state.a
    h = _as_channels(hbar, a.size)
    if s.shape[0] != h.shape[0]:
        raise ValueError("one symbol row per device expected")
    tx = state.p[:, None] * (s if s.ndim == 2 else s[:, None])
    y = h.T @ tx
    if noise is not None:
        n = np.asarray(noise)
        y = y + (n if n.ndim == 2 else n[:, None])
    s_hat = (a.conj() @ y) / np.sqrt(state.eta)
    target = s.sum(axis=0) if s.ndim == 2 else np.array([s.sum()])
    if s.ndim == 1:
        s_hat = s_hat[0]
        target = target[0]
    return s_hat, s_hat - target


def preprocess(w, mean, scale):
    scale = np.asarray(scale, dtype=float)
    if np.any(scale == 0):
        raise ValueError("preprocess: zero scale")
    return (np.asarray(w) - mean) / scale


def postprocess(s_hat, mean, scale, num_devices):
    """Invert the per-coordinate normalization of a sum and average it."""
    if num_devices < 1:
        raise ValueError("postprocess: no devices")
    return np.asarray(mean) + np.asarray(scale) * np.real(s_hat) / num_devices


class AirCompNormalizer(TransformerMixin, BaseEstimator):
    """Per-coordinate standardization of local models before AirComp.

    ``fit`` computes the round's mean and spread across devices (broadcast as
    side information); ``transform`` gives unit-power symbols and
    ``inverse_transform`` maps a received sum back to the average model.
    Coordinates with zero spread keep a unit scale.  ``center=False`` skips
    the mean and scales by the root mean square instead, so only a power
    normalization is shared as side information.
    """

    def __init__(self, center=True):
        self.center = center

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("expected a (num_devices, dim) array")
        if self.center:
            self.mean_ = X.mean(axis=0)
            std = X.std(axis=0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            std = np.sqrt(np.mean(X * X, axis=0))
        self.scale_ = np.where(std > 0, std, 1.0)
        self.n_devices_ = X.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return preprocess(X, self.mean_, self.scale_)

    def inverse_transform(self, s_hat):
        check_is_fitted(self)
        return postprocess(s_hat, self.mean_, self.scale_, self.n_devices_)
