"""Nonlinear compute/network scaling for the VE and DT parts of a room, and its price."""

from __future__ import annotations

from dataclasses import dataclass

from .config import GlobalParams, VRoomProfile
from .immersion import AllocationDecision, DomainError


@dataclass(frozen=True)
class ResourceDemand:
    comp_ve: float
    comp_dt: float
    net_ve: float
    net_dt: float
    total_cost: float


def base_comp_ve(profile: VRoomProfile, params: GlobalParams) -> float:
    # primitives may exceed the ceilings; this is a soft scale, not a clamp
    return (profile.polygons / params.p_max + profile.objects / params.o_max
            + profile.interaction_points / params.a_max)


def base_comp_dt(profile: VRoomProfile, params: GlobalParams) -> float:
    return (profile.sensors / params.n_max + profile.state_vars / params.sv_max
            + profile.update_freq / params.u_max)


def base_net_ve(decision: AllocationDecision, profile: VRoomProfile,
                allocated: bool = True) -> float:
    if not allocated:
        return float(profile.bitrate_min)
    return float(max(decision.bitrate, profile.bitrate_min))


def base_net_dt(decision: AllocationDecision, profile: VRoomProfile,
                params: GlobalParams) -> float:
    return params.phi_dt * profile.bitrate_min * decision.beta


def frame_factor(framerate: float, profile: VRoomProfile, kappa: float) -> float:
    return (framerate / profile.framerate_min) ** kappa


def client_factor(clients: int, profile: VRoomProfile, theta: float) -> float:
    """User-count term: sub/super-linear growth damped by sharing at low density."""
    if clients < 0 or clients > profile.capacity:
        raise DomainError(f"clients {clients} outside [0, {profile.capacity}]")
    if clients == 0:
        return 0.0
    density = (clients / profile.capacity) ** profile.lambda_density
    return clients ** theta * (1.0 - profile.iota * (1.0 - density))


def scale(base: float, framerate: float, clients: int, profile: VRoomProfile,
          kappa: float, theta: float) -> float:
    if framerate < profile.framerate_min:
        raise DomainError(f"frame rate {framerate} below {profile.framerate_min}")
    cf = client_factor(clients, profile, theta)
    if cf == 0.0:
        return 0.0
    return base * frame_factor(framerate, profile, kappa) * cf


def price(comp_ve: float, comp_dt: float, net_ve: float, net_dt: float,
          params: GlobalParams) -> float:
    return params.k_comp * (comp_ve + comp_dt) + params.k_net * (net_ve + net_dt)


def demand(decision: AllocationDecision, clients: int, profile: VRoomProfile,
           params: GlobalParams, net_ve_uses_allocated_bitrate: bool = True) -> ResourceDemand:
    f = decision.framerate
    comp_ve = scale(base_comp_ve(profile, params), f, clients, profile,
                    profile.kappa_comp, profile.theta_comp)
    comp_dt = scale(base_comp_dt(profile, params), f, clients, profile,
                    profile.kappa_comp, profile.theta_comp)
    net_ve = scale(base_net_ve(decision, profile, net_ve_uses_allocated_bitrate), f, clients,
                   profile, profile.kappa_net, profile.theta_net)
    net_dt = scale(base_net_dt(decision, profile, params), f, clients, profile,
                   profile.kappa_net, profile.theta_net)
    return ResourceDemand(comp_ve, comp_dt, net_ve, net_dt,
                          price(comp_ve, comp_dt, net_ve, net_dt, params))
