"""Non-learning allocation policies and their credit-pool variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import GlobalParams, VRoomProfile
from .env import MetaverseEnv, round_half_up
from .immersion import (AllocationDecision, beta_grid, dt_accuracy_norm, framerate_norm,
                        qope)
from .scaling import base_comp_dt, base_comp_ve, client_factor, frame_factor


@dataclass
class Action:
    decisions: list[AllocationDecision | None]
    donations: list[float] | None = None


def policy_saving(env: MetaverseEnv) -> list[AllocationDecision]:
    return [env.minimal_decision(h) for h in range(env.n_heads)]


def policy_max(env: MetaverseEnv) -> list[AllocationDecision]:
    out = []
    for h, room in enumerate(env.rooms):
        out.append(AllocationDecision(room.bitrate_max, room.framerate_max,
                                      beta_grid(room, env.params)[-1]))
    return out


def policy_average(env: MetaverseEnv) -> list[AllocationDecision]:
    out = []
    for h, room in enumerate(env.rooms):
        grid = beta_grid(room, env.params)
        mid = (room.beta_min + room.beta_max) / 2
        out.append(AllocationDecision(
            round_half_up((room.bitrate_min + room.bitrate_max) / 2),
            round_half_up((room.framerate_min + room.framerate_max) / 2),
            min(grid, key=lambda g: (abs(g - mid), g)),
        ))
    return out


def policy_random(env: MetaverseEnv, rng: np.random.Generator) -> list[AllocationDecision]:
    out = []
    for h, room in enumerate(env.rooms):
        grid = beta_grid(room, env.params)
        b = int(rng.integers(room.bitrate_min, room.bitrate_max + 1))
        f = int(rng.integers(room.framerate_min, room.framerate_max + 1))
        beta = grid[int(rng.integers(len(grid)))]
        out.append(AllocationDecision(b, f, beta))
    return out


class RoomGrid:
    """Per-axis immersion and cost ingredients of one room's control grid.

    Immersion separates into bitrate, frame-rate and beta terms, and cost into
    frame-rate-by-client factors, so the full grid is rebuilt from a handful
    of vectors and evaluated by the compiled kernel.
    """

    def __init__(self, room: VRoomProfile, params: GlobalParams, eps_head: float, tau: float,
                 net_ve_uses_allocated_bitrate: bool = True):
        self.room = room
        self.params = params
        self.bitrates = list(range(room.bitrate_min, room.bitrate_max + 1))
        self.framerates = list(range(room.framerate_min, room.framerate_max + 1))
        self.betas = beta_grid(room, params)
        self.qhat = np.array([qope(b, room, params)[1] for b in self.bitrates])
        self.fhat = np.array([framerate_norm(f, room) for f in self.framerates])
        self.ahat = np.array([dt_accuracy_norm(eps_head, beta, tau, room) for beta in self.betas])
        if net_ve_uses_allocated_bitrate:
            self.net_ve_base = np.array([float(max(b, room.bitrate_min)) for b in self.bitrates])
        else:
            self.net_ve_base = np.full(len(self.bitrates), float(room.bitrate_min))
        self.net_dt_base = np.array([params.phi_dt * room.bitrate_min * beta for beta in self.betas])
        self.ff_comp = [frame_factor(f, room, room.kappa_comp) for f in self.framerates]
        self.ff_net = np.array([frame_factor(f, room, room.kappa_net) for f in self.framerates])
        self._bcve = base_comp_ve(room, params)
        self._bcdt = base_comp_dt(room, params)

    def _cost_inputs(self, clients: int):
        room = self.room
        cf_comp = client_factor(clients, room, room.theta_comp)
        cf_net = client_factor(clients, room, room.theta_net)
        comp_ve = np.array([self._bcve * ff * cf_comp for ff in self.ff_comp])
        comp_dt = np.array([self._bcdt * ff * cf_comp for ff in self.ff_comp])
        return comp_ve, comp_dt, cf_net

    def _args(self, clients: int):
        comp_ve, comp_dt, cf_net = self._cost_inputs(clients)
        r = self.room
        return (self.qhat, self.fhat, self.ahat, r.w_q, r.w_f, r.w_a, self.net_ve_base,
                comp_ve, comp_dt, self.ff_net, cf_net, self.net_dt_base,
                self.params.k_comp, self.params.k_net)

    def tables(self, clients: int, backend=None):
        fn = kernels.grid_tables if backend is None else backend.grid_tables
        return fn(*self._args(clients))

    def select(self, clients: int, threshold: float, backend=None) -> tuple[AllocationDecision, bool]:
        fn = kernels.grid_select if backend is None else backend.grid_select
        i, j, k, meets = fn(*self._args(clients), threshold)
        return AllocationDecision(self.bitrates[i], self.framerates[j], self.betas[k]), meets


class MyopicOptimal:
    """Per-step exhaustive search: cheapest allocation meeting the threshold.

    Heads are admitted per MSP in ascending cost order while the MSP's
    available funds last; the rest are declined (``None``) for this step.
    """

    def __init__(self, backend=None):
        self.backend = backend
        self._grids: dict[tuple, RoomGrid] = {}

    def _grid(self, env: MetaverseEnv, h: int) -> RoomGrid:
        flag = env.config.env.net_ve_uses_allocated_bitrate
        key = (env.rooms[h], env.params, env.heads[h].eps_head, env._taus[h], flag)
        grid = self._grids.get(key)
        if grid is None:
            grid = RoomGrid(env.rooms[h], env.params, env.heads[h].eps_head, env._taus[h], flag)
            self._grids[key] = grid
        return grid

    def choose(self, env: MetaverseEnv, h: int) -> AllocationDecision:
        return self._grid(env, h).select(env.heads[h].clients, env.threshold, self.backend)[0]

    def __call__(self, env: MetaverseEnv) -> list[AllocationDecision | None]:
        picks: list[AllocationDecision | None] = [self.choose(env, h) for h in range(env.n_heads)]
        for m, msp in enumerate(env.msps):
            heads = [h for h in msp.head_ids if env.heads[h].request_active]
            costed = sorted((env.head_cost(h, picks[h]), h) for h in heads)
            funds = env.available_funds(m)
            spent = 0.0
            for c, h in costed:
                if spent + c <= funds:
                    spent += c
                else:
                    picks[h] = None
        return picks


def donate_surplus(env: MetaverseEnv, decisions) -> list[float]:
    """Full donation for MSPs whose planned cost fits their budget, none otherwise."""
    out = []
    for msp in env.msps:
        planned = sum(env.head_cost(h, decisions[h]) for h in msp.head_ids
                      if env.heads[h].request_active and decisions[h] is not None)
        out.append(1.0 if planned <= msp.budget else 0.0)
    return out


class Policy:
    name = "policy"

    def reset(self, seed: int) -> None:
        pass

    def act(self, env: MetaverseEnv) -> Action:
        raise NotImplementedError


class FunctionPolicy(Policy):
    def __init__(self, name: str, fn):
        self.name = name
        self._fn = fn

    def act(self, env: MetaverseEnv) -> Action:
        decisions = self._fn(env)
        return Action(decisions, [0.0] * env.n_msps if env.cooperative else None)


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def act(self, env: MetaverseEnv) -> Action:
        return Action(policy_random(env, self.rng), [0.0] * env.n_msps if env.cooperative else None)


class GcpVariant(Policy):
    """Allocate as the base policy, then donate every surplus to the pool.

    Withdrawals for MSPs in deficit happen automatically during settlement.
    """

    def __init__(self, base: Policy):
        self.base = base
        self.name = f"{base.name}-gcp"

    def reset(self, seed: int) -> None:
        self.base.reset(seed)

    def act(self, env: MetaverseEnv) -> Action:
        decisions = self.base.act(env).decisions
        if not env.cooperative:
            return Action(decisions)
        return Action(decisions, donate_surplus(env, decisions))


def gcp_variant(base: Policy) -> GcpVariant:
    return GcpVariant(base)


BASELINES = ("saving", "average", "max", "random", "myopic")
ALIASES = {"avg": "average", "avg-gcp": "average-gcp"}


def make_policy(name: str, seed: int = 0) -> Policy:
    """Build a non-learning policy by CLI name (``drl`` lives in :mod:`ppo`)."""
    name = ALIASES.get(name, name)
    if name.endswith("-gcp"):
        return gcp_variant(make_policy(name[:-4], seed))
    if name == "saving":
        return FunctionPolicy("saving", policy_saving)
    if name == "average":
        return FunctionPolicy("average", policy_average)
    if name == "max":
        return FunctionPolicy("max", policy_max)
    if name == "random":
        return RandomPolicy(seed)
    if name == "myopic":
        return FunctionPolicy("myopic", MyopicOptimal())
    raise KeyError(f"unknown policy {name!r}")


def run_episode(env: MetaverseEnv, policy: Policy, seed: int):
    """Play one episode; returns the list of step outcomes."""
    env.reset(seed)
    policy.reset(seed + 1_000_003)
    outcomes = []
    while not env.done:
        action = policy.act(env)
        _, _, _, out = env.step(action.decisions, action.donations)
        outcomes.append(out)
    return outcomes

