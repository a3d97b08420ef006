"""Discrete-time episode engine for MSPs, Heads and the shared credit pool."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import Config, ConfigError, VRoomProfile
from .immersion import AllocationDecision, DomainError, beta_grid, immersion, resolve_tau
from .scaling import demand


@dataclass
class HeadState:
    head_id: int
    room: VRoomProfile
    msp_id: int
    clients: int
    eps_head: float
    request_active: bool = True
    dt_count: int = 1


@dataclass
class MspState:
    msp_id: int
    budget: float
    initial_budget: float
    quota: int
    head_ids: list[int]
    fulfilled_count: int = 0
    # executed (non-dropped) Head requests
    completed_count: int = 0


@dataclass
class GcpLedger:
    n_msps: int
    withdraw_cap_ratio: float = math.inf
    pool: float = 0.0
    cumulative_deposits: list[float] = field(default_factory=list)
    cumulative_withdrawals: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.cumulative_deposits:
            self.cumulative_deposits = [0.0] * self.n_msps
        if not self.cumulative_withdrawals:
            self.cumulative_withdrawals = [0.0] * self.n_msps

    def headroom(self, m: int) -> float:
        """How much MSP ``m`` may still withdraw under the free-rider cap."""
        if math.isinf(self.withdraw_cap_ratio):
            return math.inf
        cap = self.withdraw_cap_ratio * self.cumulative_deposits[m]
        return max(0.0, cap - self.cumulative_withdrawals[m])


@dataclass
class StepOutcome:
    t: int
    head_msp: list[int]
    clients: list[int]
    active: list[bool]
    executed: list[bool]
    decisions: list[AllocationDecision | None]
    immersion: list[float]
    satisfied: list[int]
    msp_fulfilled: list[int]
    msp_cost: list[float]
    donation: list[float]
    withdrawal: list[float]
    dropped: list[bool]
    budgets: list[float]
    pool: float
    reward_immediate: float
    reward_terminal: float
    done: bool
    stuck: int

    @property
    def reward(self) -> float:
        return self.reward_immediate + self.reward_terminal

    def record(self, threshold: float) -> dict:
        """Flat JSON-ready trace record for this step."""
        return {
            "t": self.t,
            "threshold": threshold,
            "head_msp": self.head_msp,
            "clients": self.clients,
            "active": [int(a) for a in self.active],
            "executed": [int(e) for e in self.executed],
            "decisions": [None if d is None else [d.bitrate, d.framerate, d.beta]
                          for d in self.decisions],
            "immersion": self.immersion,
            "z": self.satisfied,
            "L": self.msp_fulfilled,
            "cost": self.msp_cost,
            "donation": self.donation,
            "withdrawal": self.withdrawal,
            "dropped": [int(d) for d in self.dropped],
            "budgets": self.budgets,
            "pool": self.pool,
            "reward": self.reward,
            "done": int(self.done),
        }


def update_clients(clients: int, profile: VRoomProfile, rng: np.random.Generator) -> int:
    arrivals = int(rng.poisson(profile.arrival_rate))
    departures = int(rng.poisson(profile.departure_rate))
    return min(profile.capacity, max(0, clients + arrivals - departures))


def satisfaction(value: float, request_active: bool, threshold: float) -> int:
    return int(bool(request_active) and value >= threshold)


def msp_fulfillment(z_active: Sequence[int]) -> int:
    """All-or-nothing: 1 iff there is an active Head and every one is satisfied."""
    return int(len(z_active) > 0 and all(z_active))


def efficiency(value: float, threshold: float) -> float:
    """Piecewise score rewarding immersion just above the threshold."""
    if value < threshold:
        return -1.0
    if value <= 1.1 * threshold:
        return 1.5
    return 0.5 - min(0.3, (value - threshold) / threshold)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class MetaverseEnv:
    """Gym-style environment over MSPs, their Heads and (optionally) the pool.

    One instance owns one RNG and is single-threaded.
    """

    def __init__(self, config: Config):
        self.config = config.validate()
        self.params = config.globals
        ec = config.env
        self.cooperative = ec.cooperative
        self.threshold = ec.threshold
        self.horizon = ec.horizon
        self.n_msps = ec.msps
        self.n_heads = ec.n_heads
        self.rooms = [config.rooms[ec.room_for_head(h)] for h in range(self.n_heads)]
        self._grids = [beta_grid(r, self.params) for r in self.rooms]
        self._taus = [resolve_tau(r, self.params) for r in self.rooms]
        self.rng = np.random.default_rng(0)
        self.heads: list[HeadState] = []
        self.msps: list[MspState] = []
        self.ledger = GcpLedger(self.n_msps, ec.withdraw_cap_ratio)
        self.t = 0
        self.stuck = 0
        self.done = True
        self.total_spent = 0.0
        self._terminal_count = 0
        self.reset(0)

    # -- setup -----------------------------------------------------------

    @property
    def obs_dim(self) -> int:
        return 2 * self.n_msps + 2 * self.n_heads + 1 + (2 if self.cooperative else 0)

    @property
    def action_dim(self) -> int:
        return 3 * self.n_heads + (self.n_msps if self.cooperative else 0)

    def reset(self, seed: int | None = None) -> np.ndarray:
        ec = self.config.env
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        budgets = ec.initial_budgets()
        per = ec.heads_per_msp
        self.msps = [
            MspState(m, budgets[m], budgets[m], ec.quota, list(range(m * per, (m + 1) * per)))
            for m in range(self.n_msps)
        ]
        self.heads = []
        for h, room in enumerate(self.rooms):
            if ec.initial_clients is not None:
                clients = int(ec.initial_clients[h])
                if not 0 <= clients <= room.capacity:
                    raise ConfigError(f"initial clients of Head {h} outside [0, {room.capacity}]")
            else:
                clients = int(self.rng.integers(1, math.ceil(room.capacity / 2) + 1))
            eps = room.eps_mid if ec.eps_head is None else ec.eps_head
            self.heads.append(HeadState(h, room, h // per, clients, eps))
        self.ledger = GcpLedger(self.n_msps, ec.withdraw_cap_ratio)
        self.t = 0
        self.stuck = 0
        self.done = False
        self.total_spent = 0.0
        self._terminal_count = 0
        self._refresh_requests()
        return self.encode_observation()

    def _refresh_requests(self) -> None:
        quota_mode = self.config.env.request_mode == "quota"
        for head in self.heads:
            msp = self.msps[head.msp_id]
            head.request_active = (not quota_mode) or msp.fulfilled_count < msp.quota

    # -- admissibility ---------------------------------------------------

    def project(self, h: int, bitrate: float, framerate: float, beta: float) -> AllocationDecision:
        """Clamp, round and snap a raw control triple onto Head ``h``'s grid."""
        room = self.rooms[h]
        b = round_half_up(min(max(bitrate, room.bitrate_min), room.bitrate_max))
        f = round_half_up(min(max(framerate, room.framerate_min), room.framerate_max))
        grid = self._grids[h]
        beta = min(max(beta, grid[0]), grid[-1])
        snapped = min(grid, key=lambda g: (abs(g - beta), g))
        return AllocationDecision(b, f, snapped)

    def is_admissible(self, h: int, d: AllocationDecision) -> bool:
        room = self.rooms[h]
        return (isinstance(d.bitrate, int) and isinstance(d.framerate, int)
                and room.bitrate_min <= d.bitrate <= room.bitrate_max
                and room.framerate_min <= d.framerate <= room.framerate_max
                and d.beta in self._grids[h])

    def decode_action(self, vec: Sequence[float]) -> tuple[list[AllocationDecision], list[float] | None]:
        """Map a [0, 1]^n action vector onto admissible decisions (and donations)."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.action_dim,):
            raise ValueError(f"action has shape {vec.shape}, expected ({self.action_dim},)")
        v = np.clip(vec, 0.0, 1.0)
        H = self.n_heads
        decisions = []
        for h, room in enumerate(self.rooms):
            b = room.bitrate_min + v[h] * (room.bitrate_max - room.bitrate_min)
            f = room.framerate_min + v[H + h] * (room.framerate_max - room.framerate_min)
            beta = room.beta_min + v[2 * H + h] * (room.beta_max - room.beta_min)
            decisions.append(self.project(h, float(b), float(f), float(beta)))
        donations = [float(x) for x in v[3 * H:]] if self.cooperative else None
        return decisions, donations

    def minimal_decision(self, h: int) -> AllocationDecision:
        room = self.rooms[h]
        return AllocationDecision(room.bitrate_min, room.framerate_min, self._grids[h][0])

    # -- model evaluation ------------------------------------------------

    def head_cost(self, h: int, d: AllocationDecision, clients: int | None = None) -> float:
        c = self.heads[h].clients if clients is None else clients
        return demand(d, c, self.rooms[h], self.params,
                      self.config.env.net_ve_uses_allocated_bitrate).total_cost

    def head_immersion(self, h: int, d: AllocationDecision) -> float:
        return immersion(d, self.heads[h].eps_head, self.rooms[h], self.params,
                         self._taus[h]).immersion

    def cheapest_cost(self, m: int) -> float:
        return sum(self.head_cost(h, self.minimal_decision(h))
                   for h in self.msps[m].head_ids if self.heads[h].request_active)

    def available_funds(self, m: int) -> float:
        """Own budget plus what the pool could cover for MSP ``m`` right now."""
        funds = self.msps[m].budget
        if self.cooperative:
            funds += min(self.ledger.pool, self.ledger.headroom(m))
        return funds

    # -- stepping --------------------------------------------------------

    def step_noncoop(self, decisions: Sequence[AllocationDecision | None]) -> StepOutcome:
        return self._advance(decisions, [0.0] * self.n_msps, cooperative=False)

    def step_coop(self, decisions: Sequence[AllocationDecision | None],
                  donations: Sequence[float]) -> StepOutcome:
        if len(donations) != self.n_msps:
            raise ValueError(f"expected {self.n_msps} donation fractions, got {len(donations)}")
        for d in donations:
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"donation fraction {d} outside [0, 1]")
        return self._advance(decisions, list(donations), cooperative=True)

    def step(self, decisions, donations=None):
        """Gym-style step: returns ``(observation, reward, done, outcome)``."""
        if self.cooperative:
            out = self.step_coop(decisions, donations if donations is not None else [0.0] * self.n_msps)
        else:
            out = self.step_noncoop(decisions)
        return self.encode_observation(), out.reward, out.done, out

    def step_vector(self, vec):
        decisions, donations = self.decode_action(vec)
        return self.step(decisions, donations)

    def _advance(self, decisions, donations, cooperative: bool) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        if len(decisions) != self.n_heads:
            raise ValueError(f"expected {self.n_heads} decisions, got {len(decisions)}")
        for h, d in enumerate(decisions):
            if d is not None and not self.is_admissible(h, d):
                raise DomainError(f"decision {d} for Head {h} is not admissible")
        self.t += 1
        M = self.n_msps
        active = [head.request_active for head in self.heads]
        clients = [head.clients for head in self.heads]
        serve = [active[h] and decisions[h] is not None for h in range(self.n_heads)]

        cost = [0.0] * M
        for h in range(self.n_heads):
            if serve[h]:
                cost[self.heads[h].msp_id] += self.head_cost(h, decisions[h])

        # deficits, smallest first, covered from the start-of-step pool
        dropped = [False] * M
        withdrawal = [0.0] * M
        available = self.ledger.pool
        short = sorted((cost[m] - self.msps[m].budget, m) for m in range(M)
                       if cost[m] > self.msps[m].budget)
        for w, m in short:
            if cooperative and w <= available and w <= self.ledger.headroom(m):
                withdrawal[m] = w
                available -= w
            else:
                dropped[m] = True

        donation = [0.0] * M
        for m, msp in enumerate(self.msps):
            if dropped[m]:
                continue
            surplus = max(0.0, msp.budget - cost[m])
            donation[m] = donations[m] * surplus
            msp.budget = surplus - donation[m]
            self.total_spent += cost[m]
            self.ledger.cumulative_withdrawals[m] += withdrawal[m]
            self.ledger.cumulative_deposits[m] += donation[m]
        self.ledger.pool = available + sum(donation)
        settled = [0.0 if dropped[m] else cost[m] for m in range(M)]

        executed = [serve[h] and not dropped[self.heads[h].msp_id] for h in range(self.n_heads)]
        imm = [self.head_immersion(h, decisions[h]) if executed[h] else 0.0
               for h in range(self.n_heads)]
        z = [satisfaction(imm[h], executed[h], self.threshold) for h in range(self.n_heads)]
        L = [msp_fulfillment([z[h] for h in msp.head_ids if active[h]]) for msp in self.msps]
        for m, msp in enumerate(self.msps):
            msp.fulfilled_count += L[m]
            msp.completed_count += sum(executed[h] for h in msp.head_ids)

        rc = self.config.reward
        r_imm = rc.w_imm * sum(efficiency(imm[h], self.threshold)
                               for h in range(self.n_heads) if active[h])
        self._terminal_count += sum(1 for h in range(self.n_heads)
                                    if executed[h] and 0.0 < imm[h] <= rc.i_max)

        if self.config.env.dynamic_clients:
            for head in self.heads:
                head.clients = update_clients(head.clients, head.room, self.rng)
        self._refresh_requests()
        self._detect_stuck()
        self.done = self.t >= self.horizon or self.stuck >= self.config.env.stuck_cutoff
        r_fin = rc.w_fin * self._terminal_count if self.done else 0.0

        return StepOutcome(
            t=self.t, head_msp=[head.msp_id for head in self.heads], clients=clients,
            active=active, executed=executed,
            decisions=[decisions[h] if serve[h] else None for h in range(self.n_heads)],
            immersion=imm, satisfied=z, msp_fulfilled=L, msp_cost=settled,
            donation=donation, withdrawal=withdrawal, dropped=dropped,
            budgets=[msp.budget for msp in self.msps], pool=self.ledger.pool,
            reward_immediate=r_imm, reward_terminal=r_fin, done=self.done, stuck=self.stuck,
        )

    def is_halted(self) -> bool:
        """No MSP has work left, or none can afford even its cheapest allocation."""
        needing = [m for m, msp in enumerate(self.msps)
                   if any(self.heads[h].request_active for h in msp.head_ids)]
        if not needing:
            return True
        return all(self.cheapest_cost(m) > self.available_funds(m) for m in needing)

    def _detect_stuck(self) -> None:
        self.stuck = self.stuck + 1 if self.is_halted() else 0

    # -- encoding --------------------------------------------------------

    def encode_observation(self) -> np.ndarray:
        s1 = [m.budget / m.initial_budget for m in self.msps]
        s2 = [m.fulfilled_count / m.quota for m in self.msps]
        s3 = [h.clients / h.room.capacity for h in self.heads]
        s4 = [float(h.request_active) for h in self.heads]
        s5 = [self.t / self.horizon]
        parts = s1 + s2 + s3 + s4 + s5
        if self.cooperative:
            total = sum(m.initial_budget for m in self.msps)
            parts += [self.ledger.pool / total, self.stuck / self.config.env.stuck_cutoff]
        return np.asarray(parts, dtype=np.float64)
