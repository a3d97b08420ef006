"""Clipped-surrogate actor-critic learner in plain numpy.

Actor and critic are separate tanh MLPs. Actions are per-dimension Gaussians
with a learned, state-independent log-std, squashed through a sigmoid onto
[0, 1]; the environment projects them onto its admissible grids.

Checkpoint layout (all little-endian)::

    8 bytes   magic b"MAPPOCK\\x00"
    uint32    format version (1)
    uint32    obs_dim
    uint32    action_dim
    uint32    n_arrays
    n_arrays times:
        uint32      ndim
        uint32[ndim] shape
        float32[prod(shape)] row-major data

Arrays are stored actor layers (W, b per layer), then log_std, then critic
layers.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .config import AgentConfig
from .env import MetaverseEnv
from .metrics import summarize
from .policies import Action, Policy

MAGIC = b"MAPPOCK\x00"
VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


class CheckpointError(ValueError):
    pass


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class MLP:
    """tanh hidden layers, linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, out_gain: float,
                 dtype=np.float32):
        self.params: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else math.sqrt(2.0)
            self.params.append(_orthogonal(rng, n_in, n_out, gain).astype(dtype))
            self.params.append(np.zeros(n_out, dtype=dtype))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ W + b
            if i < self.n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)
        g = grad_out
        for i in reversed(range(self.n_layers)):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[2 * i].T) * (1.0 - acts[i] ** 2)
        return grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-5):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass
class PolicyOutput:
    action: np.ndarray
    raw: np.ndarray
    log_probs: np.ndarray
    value: float
    decisions: list | None = None
    donations: list[float] | None = None

    @property
    def log_prob(self) -> float:
        return float(self.log_probs.sum())


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class PPOAgent:
    def __init__(self, obs_dim: int, action_dim: int, config: AgentConfig | None = None,
                 dtype=np.float32):
        self.config = config or AgentConfig()
        self.config.validate()
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.dtype = dtype
        init_rng = np.random.default_rng(self.config.seed)
        hidden = list(self.config.hidden_layers)
        self.actor = MLP([obs_dim, *hidden, action_dim], init_rng, 0.01, dtype)
        self.log_std = np.full(action_dim, self.config.init_log_std, dtype=dtype)
        self.critic = MLP([obs_dim, *hidden, 1], init_rng, 1.0, dtype)
        self.rng = np.random.default_rng(self.config.seed + 1)
        self.optimizer = Adam(self.params, self.config.learning_rate)

    # -- parameters ------------------------------------------------------

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.actor.params, self.log_std, *self.critic.params]

    def set_params(self, arrays: list[np.ndarray]) -> None:
        current = self.params
        if len(arrays) != len(current):
            raise CheckpointError(f"expected {len(current)} arrays, got {len(arrays)}")
        for dst, src in zip(current, arrays):
            if dst.shape != src.shape:
                raise CheckpointError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    # -- acting ----------------------------------------------------------

    def _obs(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=self.dtype)
        if x.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has dim {x.shape[-1]}, expected {self.obs_dim}")
        return x

    def act(self, obs, stochastic: bool = True) -> PolicyOutput:
        x = self._obs(obs)[None, :]
        mu = self.actor.forward(x)[0][0]
        value = float(self.critic.forward(x)[0][0, 0])
        std = np.exp(self.log_std)
        if stochastic:
            raw = mu + std * self.rng.standard_normal(self.action_dim).astype(self.dtype)
        else:
            raw = mu.copy()
        logp = -0.5 * ((raw - mu) / std) ** 2 - self.log_std - 0.5 * _LOG_2PI
        return PolicyOutput(sigmoid(raw.astype(np.float64)), raw, logp, value)

    def value(self, obs) -> float:
        return float(self.critic.forward(self._obs(obs)[None, :])[0][0, 0])

    # -- learning --------------------------------------------------------

    def loss_and_grads(self, obs, raw, old_logp, adv, returns):
        """Total loss and its gradient with respect to :attr:`params`."""
        cfg = self.config
        n = obs.shape[0]
        mu, a_acts = self.actor.forward(obs)
        v, c_acts = self.critic.forward(obs)
        v = v[:, 0]
        std = np.exp(self.log_std)
        diff = raw - mu
        z = diff / std
        logp = (-0.5 * z ** 2 - self.log_std - 0.5 * _LOG_2PI).sum(axis=1)
        ratio = np.exp(logp - old_logp)
        clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
        unclipped_obj = ratio * adv
        clipped_obj = clipped * adv
        surrogate = np.minimum(unclipped_obj, clipped_obj)
        policy_loss = -surrogate.mean()
        value_loss = ((v - returns) ** 2).mean()
        entropy = float((self.log_std + 0.5 * (_LOG_2PI + 1.0)).sum())
        total = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy

        # the surrogate never credits more than the clip interval allows
        pos = adv > 0
        neg = adv < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            eff = np.where(adv != 0, surrogate / np.where(adv != 0, adv, 1), 1.0)
        assert np.all(eff[pos] <= 1.0 + cfg.clip_ratio + 1e-6)
        assert np.all(eff[neg] >= 1.0 - cfg.clip_ratio - 1e-6)

        live = (unclipped_obj <= clipped_obj).astype(obs.dtype)
        d_ratio = -(live * adv) / n
        d_logp = d_ratio * ratio
        g_mu = d_logp[:, None] * (diff / std ** 2)
        g_log_std = (d_logp[:, None] * (z ** 2 - 1.0)).sum(axis=0) - cfg.entropy_coeff
        g_v = (cfg.value_coeff * 2.0 / n) * (v - returns)
        grads = [*self.actor.backward(a_acts, g_mu), g_log_std.astype(self.dtype),
                 *self.critic.backward(c_acts, g_v[:, None])]
        stats = {
            "loss": float(total), "policy_loss": float(policy_loss),
            "value_loss": float(value_loss), "entropy": entropy,
            "clip_frac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio)),
        }
        return float(total), grads, stats

    def update(self, buffer: "RolloutBuffer") -> dict:
        cfg = self.config
        if len(buffer) == 0:
            raise ValueError("empty rollout buffer")
        if len(buffer) < cfg.batch_size:
            raise ValueError(f"buffer holds {len(buffer)} < batch_size {cfg.batch_size} transitions")
        obs, raw, old_logp, adv, returns = buffer.arrays(self.dtype)
        if adv.size > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(buffer)
        history = []
        for _ in range(cfg.epochs_per_update):
            order = self.rng.permutation(n)
            for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                _, grads, stats = self.loss_and_grads(obs[idx], raw[idx], old_logp[idx],
                                                      adv[idx], returns[idx])
                norm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
                if cfg.max_grad_norm and norm > cfg.max_grad_norm:
                    grads = [g * (cfg.max_grad_norm / norm) for g in grads]
                self.optimizer.step(self.params, grads)
                history.append(stats)
        return {k: float(np.mean([h[k] for h in history])) for k in history[0]}

    # -- persistence -----------------------------------------------------

    def save(self, path: str) -> None:
        arrays = self.params
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIII", VERSION, self.obs_dim, self.action_dim, len(arrays)))
            for a in arrays:
                fh.write(struct.pack("<I", a.ndim))
                fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
                fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str, config: AgentConfig | None = None) -> "PPOAgent":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint")
        version, obs_dim, action_dim, n_arrays = struct.unpack_from("<IIII", data, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        off = 24
        arrays = []
        for _ in range(n_arrays):
            (ndim,) = struct.unpack_from("<I", data, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
            off += 4 * count
            arrays.append(arr.astype(np.float32))
        if n_arrays < 5 or (n_arrays - 1) % 4:
            raise CheckpointError(f"{path}: malformed array count {n_arrays}")
        # hidden sizes come from the stored actor layer shapes
        n_layers = (n_arrays - 1) // 4
        hidden = [int(arrays[2 * i].shape[1]) for i in range(n_layers - 1)]
        cfg = replace(config or AgentConfig(), hidden_layers=hidden)
        agent = cls(obs_dim, action_dim, cfg)
        agent.set_params(arrays)
        return agent


@dataclass
class RolloutBuffer:
    gamma: float
    lam: float
    obs: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    def add(self, obs, raw, logp: float, value: float, reward: float, done: bool) -> None:
        self.obs.append(np.asarray(obs))
        self.raw.append(np.asarray(raw))
        self.logp.append(logp)
        self.values.append(value)
        self.rewards.append(reward)
        self.dones.append(done)

    def finish(self, last_value: float) -> None:
        """Generalised advantage estimates; ``lam=1`` gives Monte-Carlo returns."""
        n = len(self)
        adv = np.zeros(n)
        gae = 0.0
        next_value = last_value
        for t in reversed(range(n)):
            nonterminal = 0.0 if self.dones[t] else 1.0
            delta = self.rewards[t] + self.gamma * next_value * nonterminal - self.values[t]
            gae = delta + self.gamma * self.lam * nonterminal * gae
            adv[t] = gae
            next_value = self.values[t]
        self.advantages = adv
        self.returns = adv + np.asarray(self.values)

    def arrays(self, dtype):
        if self.advantages is None:
            raise ValueError("call finish() before reading the buffer")
        return (np.asarray(self.obs, dtype=dtype), np.asarray(self.raw, dtype=dtype),
                np.asarray(self.logp, dtype=dtype), self.advantages.astype(dtype),
                self.returns.astype(dtype))


class DRLPolicy(Policy):
    """Deterministic (mean-action) use of a trained agent."""

    def __init__(self, agent: PPOAgent, name: str = "drl"):
        self.agent = agent
        self.name = name

    def act(self, env: MetaverseEnv) -> Action:
        out = self.agent.act(env.encode_observation(), stochastic=False)
        decisions, donations = env.decode_action(out.action)
        return Action(decisions, donations)


def train(make_env: Callable[[int], MetaverseEnv], config: AgentConfig, episodes: int,
          seed: int = 0, agent: PPOAgent | None = None,
          on_episode: Callable[[dict], None] | None = None):
    """Run PPO for ``episodes`` episodes; returns ``(agent, curve)``.

    ``make_env(i)`` supplies the environment for episode ``i`` (letting callers
    mutate it mid-training). Episode ``i`` is reset with seed ``seed + i``.
    """
    env = make_env(0)
    if agent is None:
        agent = PPOAgent(env.obs_dim, env.action_dim, config)
    buffer = RolloutBuffer(config.gamma, config.gae_lambda)
    curve = []
    for ep in range(episodes):
        env = make_env(ep)
        obs = env.reset(seed + ep)
        trace = []
        total = 0.0
        while not env.done:
            out = agent.act(obs)
            next_obs, reward, done, outcome = env.step_vector(out.action)
            buffer.add(obs, out.raw, out.log_prob, out.value, reward, done)
            trace.append(outcome.record(env.threshold))
            total += reward
            obs = next_obs
            if len(buffer) >= config.rollout_length:
                buffer.finish(0.0 if done else agent.value(obs))
                agent.update(buffer)
                buffer = RolloutBuffer(config.gamma, config.gae_lambda)
        rep = summarize(trace)
        row = {"episode": ep, "reward": total, "completion": rep.completion,
               "fulfillment": rep.fulfillment, "cost": rep.total_cost}
        curve.append(row)
        if on_episode is not None:
            on_episode(row)
    return agent, curve
