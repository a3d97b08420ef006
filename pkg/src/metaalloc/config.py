"""Parameter sets and run configuration.

Room profiles and global constants default to the published parameter
tables. Everything is plain dataclasses so a whole run can be dumped to,
and rebuilt from, one YAML document.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VRoomProfile:
    room_kind: str
    bitrate_min: int
    bitrate_max: int
    framerate_min: int
    framerate_max: int
    eps_min: float
    eps_max: float
    beta_min: float
    beta_max: float
    omega: float
    kappa_comp: float
    kappa_net: float
    w_sigma: float
    w_eta: float
    theta_comp: float
    theta_net: float
    lambda_density: float
    iota: float
    polygons: float
    objects: float
    interaction_points: float
    sensors: float
    state_vars: float
    update_freq: float
    capacity: int
    w_q: float
    w_f: float
    w_a: float
    arrival_rate: float
    departure_rate: float

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        name = self.room_kind
        if abs(self.w_sigma + self.w_eta - 1.0) > 1e-9:
            raise ConfigError(f"{name}: w_sigma + w_eta must be 1")
        if abs(self.w_q + self.w_f + self.w_a - 1.0) > 1e-9:
            raise ConfigError(f"{name}: w_q + w_f + w_a must be 1")
        if not self.bitrate_min <= self.bitrate_max:
            raise ConfigError(f"{name}: bitrate_min > bitrate_max")
        if not 0 < self.framerate_min <= self.framerate_max:
            raise ConfigError(f"{name}: bad frame-rate bounds")
        if self.bitrate_min <= 0:
            raise ConfigError(f"{name}: bitrate_min must be positive")
        if not 0.0 <= self.beta_min <= self.beta_max <= 1.0:
            raise ConfigError(f"{name}: bad beta bounds")
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ConfigError(f"{name}: bad eps bounds")
        if not 0.0 <= self.iota <= 1.0:
            raise ConfigError(f"{name}: iota outside [0, 1]")
        if self.capacity < 1:
            raise ConfigError(f"{name}: capacity must be >= 1")
        counts = (self.polygons, self.objects, self.interaction_points,
                  self.sensors, self.state_vars, self.update_freq)
        if min(counts) < 0 or self.arrival_rate < 0 or self.departure_rate < 0:
            raise ConfigError(f"{name}: counts and rates must be non-negative")

    @property
    def eps_mid(self) -> float:
        return (self.eps_min + self.eps_max) / 2.0


@dataclass(frozen=True)
class GlobalParams:
    ssim_coeffs: tuple[float, float, float, float, float] = (
        0.65, 0.368, 1.23e-3, 0.85, 1.23e-3)
    # four published values mapped onto j1..j4
    vmaf_coeffs: tuple[float, float, float, float] = (
        36.13, -1.66e-2, 11.62, -6.07e-3)
    k_comp: float = 0.01
    k_net: float = 0.01
    p_max: float = 1e5
    o_max: float = 100.0
    a_max: float = 10.0
    n_max: float = 100.0
    sv_max: float = 100.0
    u_max: float = 10.0
    phi_dt: float = 0.1
    tau_fixed: float | None = 1.0
    lambda_temporal: float | None = None
    beta_grid_step: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "ssim_coeffs", tuple(float(x) for x in self.ssim_coeffs))
        object.__setattr__(self, "vmaf_coeffs", tuple(float(x) for x in self.vmaf_coeffs))
        if len(self.ssim_coeffs) != 5 or len(self.vmaf_coeffs) != 4:
            raise ConfigError("need 5 SSIM and 4 VMAF coefficients")
        ceilings = (self.p_max, self.o_max, self.a_max, self.n_max, self.sv_max, self.u_max)
        if min(ceilings) <= 0:
            raise ConfigError("normalisation ceilings must be positive")
        if self.k_comp <= 0 or self.k_net <= 0 or self.phi_dt <= 0:
            raise ConfigError("unit prices and phi_dt must be positive")
        if self.tau_fixed is not None and not 0.0 < self.tau_fixed <= 1.0:
            raise ConfigError("tau_fixed must lie in (0, 1]")
        if self.tau_fixed is None and (self.lambda_temporal is None or self.lambda_temporal <= 0):
            raise ConfigError("lambda_temporal > 0 is required when tau_fixed is unset")
        if self.beta_grid_step <= 0:
            raise ConfigError("beta_grid_step must be positive")


_THIRD = 1.0 / 3.0

LIBRARY = VRoomProfile(
    room_kind="Library", bitrate_min=20, bitrate_max=25, framerate_min=30, framerate_max=60,
    eps_min=0.6, eps_max=1.0, beta_min=0.5, beta_max=1.0,
    omega=400.0, kappa_comp=1.1, kappa_net=0.5, w_sigma=0.5, w_eta=0.5,
    theta_comp=0.7, theta_net=0.9, lambda_density=0.8, iota=0.6,
    polygons=2e5, objects=50, interaction_points=5, sensors=50, state_vars=30, update_freq=2,
    capacity=10, w_q=_THIRD, w_f=_THIRD, w_a=_THIRD, arrival_rate=0.4, departure_rate=0.7,
)

ARENA = VRoomProfile(
    room_kind="Arena", bitrate_min=30, bitrate_max=50, framerate_min=60, framerate_max=120,
    eps_min=0.5, eps_max=1.0, beta_min=0.5, beta_max=1.0,
    omega=720.0, kappa_comp=1.1, kappa_net=0.5, w_sigma=0.3, w_eta=0.7,
    theta_comp=0.85, theta_net=0.85, lambda_density=0.8, iota=0.5,
    polygons=5e5, objects=200, interaction_points=30, sensors=200, state_vars=100, update_freq=10,
    capacity=100, w_q=_THIRD, w_f=_THIRD, w_a=_THIRD, arrival_rate=0.4, departure_rate=0.7,
)

GALLERY = VRoomProfile(
    room_kind="Gallery", bitrate_min=25, bitrate_max=35, framerate_min=30, framerate_max=60,
    eps_min=0.8, eps_max=1.0, beta_min=0.3, beta_max=1.0,
    omega=400.0, kappa_comp=1.1, kappa_net=0.5, w_sigma=0.7, w_eta=0.3,
    theta_comp=0.7, theta_net=0.8, lambda_density=0.7, iota=0.8,
    polygons=3e5, objects=20, interaction_points=15, sensors=30, state_vars=20, update_freq=1,
    capacity=10, w_q=_THIRD, w_f=_THIRD, w_a=_THIRD, arrival_rate=0.4, departure_rate=0.7,
)

DEFAULT_ROOMS: dict[str, VRoomProfile] = {r.room_kind: r for r in (LIBRARY, ARENA, GALLERY)}

ROOM_SEQUENCE = ("Library", "Arena", "Gallery", "Library", "Gallery",
                 "Arena", "Gallery", "Library", "Library")


@dataclass
class RewardConfig:
    w_imm: float = 1.0
    w_fin: float = 2.0
    i_max: float = 1.0

    def validate(self, threshold: float) -> None:
        if not 0.0 < threshold <= self.i_max <= 1.0:
            raise ConfigError("need 0 < threshold <= i_max <= 1")
        if self.w_imm < 0 or self.w_fin < 0:
            raise ConfigError("reward weights must be non-negative")


@dataclass
class EnvConfig:
    msps: int = 3
    heads_per_msp: int = 1
    room_sequence: list[str] = field(default_factory=lambda: list(ROOM_SEQUENCE))
    horizon: int = 100
    threshold: float = 0.6
    quota: int = 50
    cooperative: bool = False
    # "quota": post until N_m fulfilled; "continuous": post every step
    request_mode: str = "quota"
    dynamic_clients: bool = True
    # per-Head initial clients; None draws uniform in [1, ceil(V_max / 2)]
    initial_clients: list[int] | None = None
    eps_head: float | None = None
    budget_per_msp: float = 20.0
    # "equal" or "ramp"; ramp keeps the same total but weights MSP m by (m + 1)
    budget_profile: str = "equal"
    budgets: list[float] | None = None
    withdraw_cap_ratio: float = math.inf
    stuck_cutoff: int = 10
    net_ve_uses_allocated_bitrate: bool = True

    def validate(self, rooms: dict[str, VRoomProfile]) -> None:
        if self.msps < 1 or self.heads_per_msp < 1:
            raise ConfigError("need at least one MSP and one Head per MSP")
        if self.horizon < 1 or self.quota < 1 or self.stuck_cutoff < 1:
            raise ConfigError("horizon, quota and stuck_cutoff must be >= 1")
        if self.request_mode not in ("quota", "continuous"):
            raise ConfigError(f"unknown request_mode {self.request_mode!r}")
        if self.budget_profile not in ("equal", "ramp"):
            raise ConfigError(f"unknown budget_profile {self.budget_profile!r}")
        if not self.room_sequence:
            raise ConfigError("room_sequence is empty")
        for name in self.room_sequence:
            if name not in rooms:
                raise ConfigError(f"unknown room type {name!r}")
        if self.budgets is not None and len(self.budgets) != self.msps:
            raise ConfigError("budgets must list one value per MSP")
        if self.initial_clients is not None and len(self.initial_clients) != self.n_heads:
            raise ConfigError("initial_clients must list one value per Head")
        if self.withdraw_cap_ratio < 0:
            raise ConfigError("withdraw_cap_ratio must be non-negative")
        for b in self.initial_budgets():
            if b <= 0:
                raise ConfigError("budgets must be positive")

    @property
    def n_heads(self) -> int:
        return self.msps * self.heads_per_msp

    def initial_budgets(self) -> list[float]:
        if self.budgets is not None:
            return [float(b) for b in self.budgets]
        if self.budget_profile == "equal":
            return [float(self.budget_per_msp)] * self.msps
        total = self.budget_per_msp * self.msps
        weights = [m + 1 for m in range(self.msps)]
        return [total * w / sum(weights) for w in weights]

    def room_for_head(self, h: int) -> str:
        return self.room_sequence[h % len(self.room_sequence)]


@dataclass
class AgentConfig:
    hidden_layers: list[int] = field(default_factory=lambda: [128, 128])
    gamma: float = 0.97
    batch_size: int = 128
    learning_rate: float = 3e-4
    clip_ratio: float = 0.2
    epochs_per_update: int = 10
    rollout_length: int = 2048
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    gae_lambda: float = 0.95
    init_log_std: float = 0.0
    max_grad_norm: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.clip_ratio <= 0:
            raise ConfigError("clip_ratio must be positive")
        sizes = [self.batch_size, self.epochs_per_update, self.rollout_length, *self.hidden_layers]
        if min(sizes) < 1:
            raise ConfigError("all sizes must be >= 1")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError("gae_lambda must lie in [0, 1]")


@dataclass
class RunConfig:
    policy: str = "saving"
    episodes: int = 1
    seed: int = 0
    train_episodes: int = 500
    checkpoint: str | None = None
    # sweep / suite knobs
    sweep_msps: list[int] = field(default_factory=lambda: [3, 5, 7])
    sweep_horizons: list[int] = field(default_factory=lambda: [100, 150, 200])
    sweep_policies: list[str] = field(default_factory=lambda: ["average", "max", "random"])
    cap_ratios: list[float] = field(default_factory=lambda: [0.8, 1.0, 1.2, 1.4, 1.6, math.inf])
    volume_steps: int = 5
    volume_increment: float = 0.10
    budget_steps: int = 5
    budget_decrement: float = 0.05
    adapt_episode: int = 100
    adapt_threshold: float = 0.67
    adapt_arrival_scale: float = 2.0


@dataclass
class Config:
    globals: GlobalParams = field(default_factory=GlobalParams)
    rooms: dict[str, VRoomProfile] = field(default_factory=lambda: dict(DEFAULT_ROOMS))
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "Config":
        self.env.validate(self.rooms)
        self.reward.validate(self.env.threshold)
        self.agent.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        out = {
            "globals": asdict(self.globals),
            "rooms": {k: asdict(v) for k, v in self.rooms.items()},
            "env": asdict(self.env),
            "reward": asdict(self.reward),
            "agent": asdict(self.agent),
            "run": asdict(self.run),
        }
        out["globals"]["ssim_coeffs"] = list(self.globals.ssim_coeffs)
        out["globals"]["vmaf_coeffs"] = list(self.globals.vmaf_coeffs)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "Config":
        data = copy.deepcopy(data or {})
        unknown = set(data) - {"globals", "rooms", "env", "reward", "agent", "run"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        rooms = dict(DEFAULT_ROOMS)
        for name, spec in (data.get("rooms") or {}).items():
            base = asdict(rooms[name]) if name in rooms else {}
            base.update(spec or {})
            base["room_kind"] = name
            rooms[name] = _build(VRoomProfile, base)
        cfg = cls(
            globals=_build(GlobalParams, data.get("globals") or {}),
            rooms=rooms,
            env=_build(EnvConfig, data.get("env") or {}),
            reward=_build(RewardConfig, data.get("reward") or {}),
            agent=_build(AgentConfig, data.get("agent") or {}),
            run=_build(RunConfig, data.get("run") or {}),
        )
        return cfg.validate()

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Config":
        return cls.from_dict(yaml.safe_load(text))

    def with_overrides(self, overrides: dict[str, Any]) -> "Config":
        data = self.to_dict()
        for path, value in overrides.items():
            node = data
            keys = path.split(".")
            for key in keys[:-1]:
                if key not in node or not isinstance(node[key], dict):
                    if key == keys[-2] and node is data.get("rooms"):
                        node[key] = {}
                    else:
                        raise ConfigError(f"bad override path {path!r}")
                node = node[key]
            node[keys[-1]] = value
        return Config.from_dict(data)


def _build(kind, values: dict[str, Any]):
    names = {f.name for f in fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
    try:
        return kind(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> Config:
    if path is None:
        return Config().validate()
    with open(path, encoding="utf-8") as fh:
        return Config.loads(fh.read())
