"""Seedable simulator and optimizers for multi-provider Metaverse resource allocation."""

from .config import (AgentConfig, Config, ConfigError, EnvConfig, GlobalParams, RewardConfig,
                     RunConfig, VRoomProfile, load_config)
from .env import MetaverseEnv, StepOutcome, efficiency
from .immersion import AllocationDecision, DomainError, immersion
from .metrics import EpisodeReport, gini, range_metric, summarize
from .policies import MyopicOptimal, make_policy, run_episode
from .ppo import DRLPolicy, PPOAgent, train
from .scaling import ResourceDemand, demand

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "AllocationDecision", "Config", "ConfigError", "DRLPolicy", "DomainError",
    "EnvConfig", "EpisodeReport", "GlobalParams", "MetaverseEnv", "MyopicOptimal", "PPOAgent",
    "ResourceDemand", "RewardConfig", "RunConfig", "StepOutcome", "VRoomProfile", "demand",
    "efficiency", "gini", "immersion", "load_config", "make_policy", "range_metric",
    "run_episode", "summarize", "train",
]
