"""Perceptual quality, responsiveness and digital-twin fidelity of one Head."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .config import GlobalParams, VRoomProfile


class DomainError(ValueError):
    """Raised when an input falls outside the domain of a model function."""


@dataclass(frozen=True)
class AllocationDecision:
    bitrate: int
    framerate: int
    beta: float


@dataclass(frozen=True)
class ImmersionBreakdown:
    ssim: float
    vmaf: float
    qope: float
    qope_norm: float
    framerate_norm: float
    dt_accuracy: float
    dt_accuracy_norm: float
    immersion: float


def ssim(bitrate: float, omega: float, params: GlobalParams) -> float:
    if bitrate <= 0:
        raise DomainError(f"bitrate must be positive, got {bitrate}")
    e0, e1, e2, e3, e4 = params.ssim_coeffs
    return max(e0, 1.0 - (e1 + e2 * omega) * bitrate ** -(e3 + e4 * omega))


def vmaf(bitrate: float, omega: float, params: GlobalParams) -> float:
    if bitrate <= 0:
        raise DomainError(f"bitrate must be positive, got {bitrate}")
    j1, j2, j3, j4 = params.vmaf_coeffs
    return min(100.0, j1 + j2 * omega + j3 * bitrate + j4 * omega * bitrate)


def _raw_qope(bitrate: float, profile: VRoomProfile, params: GlobalParams) -> float:
    sigma = ssim(bitrate, profile.omega, params)
    eta = vmaf(bitrate, profile.omega, params)
    # VMAF lives on [0, 100]; rescale so both terms share [0, 1]
    return profile.w_sigma * sigma + profile.w_eta * (eta / 100.0)


def min_max(x: float, lo: float, hi: float) -> float:
    """Min-max scale ``x`` onto [0, 1]; a degenerate range maps to 1."""
    if hi == lo:
        return 1.0
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


def qope(bitrate: float, profile: VRoomProfile, params: GlobalParams) -> tuple[float, float]:
    """Return the raw and room-normalised quality of perceptual experience."""
    if not profile.bitrate_min <= bitrate <= profile.bitrate_max:
        raise DomainError(
            f"bitrate {bitrate} outside [{profile.bitrate_min}, {profile.bitrate_max}]")
    q = _raw_qope(bitrate, profile, params)
    lo = _raw_qope(profile.bitrate_min, profile, params)
    hi = _raw_qope(profile.bitrate_max, profile, params)
    return q, min_max(q, lo, hi)


def framerate_norm(framerate: float, profile: VRoomProfile) -> float:
    f_lo, f_hi = profile.framerate_min, profile.framerate_max
    if not f_lo <= framerate <= f_hi:
        raise DomainError(f"frame rate {framerate} outside [{f_lo}, {f_hi}]")
    if f_hi == f_lo:
        return 1.0
    return (framerate - f_lo) / (f_hi - f_lo)


def dt_accuracy(eps: float, beta: float, tau: float) -> float:
    """Harmonic mean of structural, behavioural and temporal accuracy.

    Any zero component collapses the twin to zero fidelity.
    """
    for name, x in (("eps", eps), ("beta", beta), ("tau", tau)):
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"{name}={x} outside [0, 1]")
    if eps == 0.0 or beta == 0.0 or tau == 0.0:
        return 0.0
    return 3.0 / (1.0 / eps + 1.0 / beta + 1.0 / tau)


def temporal_accuracy(update_freqs: Sequence[float], lam: float) -> float:
    """Mean saturating freshness ``1 - exp(-lam * f)`` over the twins of a room."""
    if len(update_freqs) == 0:
        raise DomainError("need at least one update frequency")
    if lam <= 0:
        raise DomainError("lambda must be positive")
    total = 0.0
    for f in update_freqs:
        if f < 0:
            raise DomainError(f"negative update frequency {f}")
        total += 1.0 - math.exp(-lam * f)
    return total / len(update_freqs)


def resolve_tau(profile: VRoomProfile, params: GlobalParams, n_twins: int = 1) -> float:
    if params.tau_fixed is not None:
        return params.tau_fixed
    return temporal_accuracy([profile.update_freq] * max(1, n_twins), params.lambda_temporal)


def beta_grid(profile: VRoomProfile, params: GlobalParams) -> list[float]:
    """Admissible behavioural-accuracy levels from beta_min to beta_max."""
    step = params.beta_grid_step
    n = int(math.floor((profile.beta_max - profile.beta_min) / step + 1e-9))
    # round away accumulated binary error so grid points compare cleanly
    return [round(profile.beta_min + k * step, 10) for k in range(n + 1)]


def snap_beta(beta: float, profile: VRoomProfile, params: GlobalParams) -> float:
    grid = beta_grid(profile, params)
    return min(grid, key=lambda g: (abs(g - beta), g))


def dt_accuracy_norm(eps: float, beta: float, tau: float, profile: VRoomProfile) -> float:
    """DT fidelity scaled over the controllable beta range with eps and tau held."""
    a = dt_accuracy(eps, beta, tau)
    lo = dt_accuracy(eps, profile.beta_min, tau)
    hi = dt_accuracy(eps, profile.beta_max, tau)
    return min_max(a, lo, hi)


def immersion(decision: AllocationDecision, eps_head: float, profile: VRoomProfile,
              params: GlobalParams, tau: float | None = None) -> ImmersionBreakdown:
    if tau is None:
        tau = resolve_tau(profile, params)
    if not profile.beta_min - 1e-12 <= decision.beta <= profile.beta_max + 1e-12:
        raise DomainError(
            f"beta {decision.beta} outside [{profile.beta_min}, {profile.beta_max}]")
    sigma = ssim(decision.bitrate, profile.omega, params)
    eta = vmaf(decision.bitrate, profile.omega, params)
    q, q_hat = qope(decision.bitrate, profile, params)
    f_hat = framerate_norm(decision.framerate, profile)
    a = dt_accuracy(eps_head, decision.beta, tau)
    a_hat = dt_accuracy_norm(eps_head, decision.beta, tau, profile)
    value = profile.w_q * q_hat + profile.w_f * f_hat + profile.w_a * a_hat
    return ImmersionBreakdown(
        ssim=sigma, vmaf=eta, qope=q, qope_norm=q_hat, framerate_norm=f_hat,
        dt_accuracy=a, dt_accuracy_norm=a_hat, immersion=min(1.0, max(0.0, value)),
    )
