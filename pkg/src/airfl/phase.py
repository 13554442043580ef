"""Phase-shift design: max-min effective channel by penalty-based SCA.

Each SCA step solves, for the current point ``v_z``,

    max  beta + 2 zeta sum Re(conj(v_z) (v - v_z))
    s.t. |v_i| <= 1
         |c_k|^2 + 2 Re(conj(c_k) Phi_k (v - v_z)) >= beta,   c_k = h_k + Phi_k v_z

as a disc-constrained conic problem.  ``beta`` here bounds the *squared*
gains; reported results use the unsquared ``min_k |h_k + Phi_k v|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import ChannelSet, PhaseConfig
from .convex import ConicProblem, solve_conic, OPTIMAL

PENALTY_RESIDUAL = 1e-3
MAX_DOUBLINGS = 6
GAIN_EXP = 1.0
ROTATION_GRID = 720


def build_phi(channels: ChannelSet, a=None):
    """Per-device reflection rows ``Phi`` (K, L*M) and direct terms (K,).

    Single antenna: ``Phi_k[l*M + m] = gbar_l[m] * g_k^l[m]``.  With a receive
    vector ``a`` both terms are taken after combining with ``a^H``.
    """
    C = channels.cascade()
    h = channels.direct
    if a is None:
        if channels.bs_antennas != 1:
            raise ValueError("multi-antenna channels need a receive vector")
        return C[:, 0, :], h[:, 0]
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    if a.size != channels.bs_antennas:
        raise ValueError("receive vector length does not match the BS antennas")
    return np.einsum("r,krn->kn", a.conj(), C), h @ a.conj()


def min_gain(v, phi, direct):
    return float(np.min(np.abs(direct + phi @ v)))


def project_unit_modulus(v):
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    if np.any(mag == 0):
        raise ValueError("project_unit_modulus: zero entry has no phase")
    return PhaseConfig(v / mag)


@dataclass
class PhaseResult:
    v: np.ndarray            # unit modulus after projection
    beta: float              # min_k |h_k + Phi_k v| after projection
    penalty_residual: float  # max(1 - |v|) before projection
    zeta: float
    iterations: int
    history: list = field(default_factory=list)   # (zeta, penalized objective, beta_sq)
    status: str = OPTIMAL


def _subproblem(vz, phi, direct, zeta):
    n = vz.size
    ck = direct + phi @ vz
    w = np.conj(ck)[:, None] * phi                  # conj(c_k) Phi_k
    K = len(direct)
    G = np.zeros((K, 2 * n + 1))
    G[:, 0:2 * n:2] = -2.0 * w.real
    G[:, 1:2 * n:2] = 2.0 * w.imag
    G[:, -1] = 1.0
    h = np.abs(ck) ** 2 - 2.0 * np.real(w @ vz)
    c = np.zeros(2 * n + 1)
    c[0:2 * n:2] = -2.0 * zeta * vz.real
    c[1:2 * n:2] = -2.0 * zeta * vz.imag
    c[-1] = -1.0
    discs = np.arange(2 * n).reshape(n, 2)
    return ConicProblem(c, G, h, discs=discs)


def penalized_objective(v, phi, direct, zeta):
    """True penalized value: min_k |h_k + Phi_k v|^2 + zeta sum(|v|^2 - 1)."""
    return float(np.min(np.abs(direct + phi @ v) ** 2) + zeta * np.sum(np.abs(v) ** 2 - 1.0))


def rotation_polish(v, phi, direct, num_blocks=1, sweeps=20):
    """Coordinate ascent over common phase rotations of the RIS blocks.

    SCA aligns the reflected paths with the *current* effective channel, so
    the joint rotation of a surface relative to the direct path is a slow mode
    of the iteration.  The coordinates are one rotation of all surfaces
    together followed by one per surface; each is a 1-D problem solved by a
    grid plus bounded refinement and kept only if it helps.
    """
    v = np.asarray(v, dtype=complex).copy()
    n = v.size
    if num_blocks < 1 or n % num_blocks:
        raise ValueError("v does not split into equal RIS blocks")
    m = n // num_blocks
    groups = [slice(0, n)]
    if num_blocks > 1:
        groups += [slice(b * m, (b + 1) * m) for b in range(num_blocks)]
    grid = np.exp(1j * np.linspace(0.0, 2.0 * np.pi, ROTATION_GRID, endpoint=False))
    step = 2.0 * np.pi / ROTATION_GRID
    best = min_gain(v, phi, direct)
    for _ in range(sweeps):
        start = best
        for sl in groups:
            part = phi[:, sl] @ v[sl]
            rest = direct + phi @ v - part
            vals = np.abs(rest[:, None] + part[:, None] * grid[None, :]).min(axis=0)
            j = int(np.argmax(vals))
            x0 = j * step
            r = minimize_scalar(lambda x: -np.min(np.abs(rest + part * np.exp(1j * x))),
                                bounds=(x0 - step, x0 + step), method="bounded",
                                options={"xatol": 1e-12})
            ang, val = (r.x, -r.fun) if -r.fun >= vals[j] else (x0, vals[j])
            if val > best:
                v[sl] *= np.exp(1j * ang)
                best = val
        if best <= start * (1.0 + 1e-12):
            break
    return v, best


def sca_phase_design(v0, phi, direct, zeta=1.0, eps1=1e-10, eps2=1e-10, max_iters=100,
                     max_doublings=MAX_DOUBLINGS, tol=1e-8, num_blocks=1, polish=True):
    """Penalty SCA for ``max_v min_k |direct_k + phi_k v|`` with unit-modulus ``v``.

    ``phi``/``direct`` come from :func:`build_phi`.  ``max_iters`` caps the
    SCA steps of each penalty stage.  Channels are rescaled internally so that
    the squared gains are at most ``(L*M)**2``; ``eps1``/``eps2`` apply in
    those units.  ``num_blocks`` (the number of RIS) is used by the final
    rotation polish.
    """
    v0 = np.asarray(v0.v if isinstance(v0, PhaseConfig) else v0, dtype=complex).ravel()
    phi = np.atleast_2d(np.asarray(phi, dtype=complex))
    direct = np.asarray(direct, dtype=complex).ravel()
    n = v0.size
    if phi.shape != (direct.size, n):
        raise ValueError(f"phi must have shape ({direct.size}, {n})")
    if np.any(np.abs(v0) > 1 + 1e-9):
        raise ValueError("initial reflection coefficients must satisfy |v| <= 1")
    start = v0 / np.where(np.abs(v0) > 0, np.abs(v0), 1.0)
    start = np.where(np.abs(v0) > 0, start, 1.0)
    beta_start = min_gain(start, phi, direct)
    if n == 0:
        return PhaseResult(v0, beta_start, 0.0, zeta, 0)

    # normalize so that beta (squared) lies in [0, n]
    scale = np.max(np.abs(direct) + np.sum(np.abs(phi), axis=1)) / n ** GAIN_EXP
    if scale == 0:
        return PhaseResult(start, 0.0, 0.0, zeta, 0)
    phin, dn = phi / scale, direct / scale

    v = v0.copy()
    history = []
    total = 0
    status = OPTIMAL
    beta_sq = float(np.min(np.abs(dn + phin @ v) ** 2))
    for stage in range(max_doublings + 1):
        history.append((zeta, penalized_objective(v, phin, dn, zeta), beta_sq))
        for _ in range(max_iters):
            prob = _subproblem(v, phin, dn, zeta)
            x0 = np.empty(2 * n + 1)
            vs = 0.9 * v / np.maximum(1.0, np.abs(v))
            x0[0:2 * n:2], x0[1:2 * n:2] = vs.real, vs.imag
            x0[-1] = np.min(prob.h - prob.G[:, :-1] @ x0[:-1]) - 1e-2 * (1.0 + abs(beta_sq))
            sol = solve_conic(prob, tol=tol, x0=x0)
            total += 1
            if sol.status != OPTIMAL and sol.status != "max_iters":
                status = sol.status
                break
            vn = sol.x[0:2 * n:2] + 1j * sol.x[1:2 * n:2]
            beta_n = sol.x[-1]
            delta1 = 2.0 * zeta * np.sum(np.real(np.conj(v) * (vn - v)))
            delta2 = beta_n - beta_sq
            v, beta_sq = vn, beta_n
            history.append((zeta, penalized_objective(v, phin, dn, zeta), beta_sq))
            if delta1 ** 2 <= eps1 and delta2 ** 2 <= eps2:
                break
        residual = float(np.max(1.0 - np.abs(v)))
        if residual <= PENALTY_RESIDUAL or status != OPTIMAL:
            break
        if stage < max_doublings:
            zeta *= 2.0
    residual = float(np.max(1.0 - np.abs(v)))
    vp = project_unit_modulus(v).v
    if polish:
        vp, _ = rotation_polish(vp, phi, direct, num_blocks)
    beta = min_gain(vp, phi, direct)
    if beta < beta_start:
        # never hand back something worse than the warm start
        vp, beta = start, beta_start
    return PhaseResult(vp, beta, residual, zeta, total, history, status)


def design_phases(channels: ChannelSet, v0, devices=None, a=None, **kwargs):
    """Phase design for a device subset (and a fixed receive vector if Nr > 1)."""
    phi, direct = build_phi(channels, None if channels.bs_antennas == 1 else a)
    if devices is not None:
        idx = np.asarray(devices, dtype=int)
        phi, direct = phi[idx], direct[idx]
    kwargs.setdefault("num_blocks", channels.num_ris)
    return sca_phase_design(v0, phi, direct, **kwargs)
