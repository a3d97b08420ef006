"""Command-line experiment runner.

Every subcommand writes into ``--out-dir``:

* ``trace.ndjson``  one JSON record per environment step
* ``metrics.csv``   one row per evaluated episode (or trial)
* ``curve.csv``     per-episode learning curve (training subcommands only)
* ``report.txt``    resolved config, seed and a metrics summary

Outputs carry no timestamps, so reruns with the same config and seed are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from typing import Any, Iterable

import yaml

from .config import Config, ConfigError, load_config
from .env import MetaverseEnv
from .metrics import EpisodeReport, summarize
from .policies import Policy, make_policy, run_episode
from .ppo import CheckpointError, DRLPolicy, PPOAgent, train

EVAL_SEED_OFFSET = 1_000_000
CURVE_FIELDS = ["episode", "reward", "completion", "fulfillment", "cost"]


class CliError(Exception):
    pass


# -- config resolution ---------------------------------------------------

def _parse_set(items: Iterable[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def resolve_config(args: argparse.Namespace) -> Config:
    cfg = load_config(args.config)
    overrides: dict[str, Any] = {}
    for flag, path in (("policy", "run.policy"), ("msps", "env.msps"),
                       ("horizon", "env.horizon"), ("seed", "run.seed"),
                       ("threshold", "env.threshold"), ("episodes", "run.episodes"),
                       ("train_episodes", "run.train_episodes"),
                       ("checkpoint", "run.checkpoint")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[path] = value
    overrides.update(_parse_set(args.set or []))
    return cfg.with_overrides(overrides) if overrides else cfg


# -- output helpers ------------------------------------------------------

def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(path: str, rows: list[dict], fields: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fields])


class TraceWriter:
    def __init__(self, path: str):
        self.fh = open(path, "w", encoding="utf-8")

    def write(self, record: dict, **tags: Any) -> None:
        self.fh.write(json.dumps({**tags, **record}, sort_keys=True) + "\n")

    def close(self) -> None:
        self.fh.close()


def write_report(path: str, command: str, cfg: Config, rows: list[dict],
                 columns: list[str], notes: list[str] | None = None) -> None:
    lines = [f"command: {command}", f"seed: {cfg.run.seed}", "", "resolved config:"]
    lines += ["  " + ln for ln in cfg.dumps().splitlines()]
    lines += ["", "results:"]
    widths = [max(len(c), *(len(_fmt(r[c])) for r in rows)) if rows else len(c) for c in columns]
    lines.append("  " + "  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for r in rows:
        lines.append("  " + "  ".join(_fmt(r[c]).ljust(w) for c, w in zip(columns, widths)))
    for note in notes or []:
        lines.append(note)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(ln.rstrip() for ln in lines) + "\n")


# -- policies ------------------------------------------------------------

def build_policy(name: str, env: MetaverseEnv, cfg: Config, agent: PPOAgent | None = None) -> Policy:
    if name in ("drl", "drl-gcp"):
        if agent is None:
            path = cfg.run.checkpoint
            if not path:
                raise CliError(f"policy {name!r} needs --checkpoint")
            if not os.path.exists(path):
                raise CliError(f"checkpoint not found: {path}")
            agent = PPOAgent.load(path, cfg.agent)
        if (agent.obs_dim, agent.action_dim) != (env.obs_dim, env.action_dim):
            raise CliError(
                f"checkpoint expects obs/action dims {(agent.obs_dim, agent.action_dim)}, "
                f"environment has {(env.obs_dim, env.action_dim)}")
        return DRLPolicy(agent, name)
    try:
        return make_policy(name, cfg.run.seed)
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from None


def evaluate(cfg: Config, policy_name: str, trace: TraceWriter, tags: dict,
             agent: PPOAgent | None = None, seed_offset: int = 0) -> list[dict]:
    env = MetaverseEnv(cfg)
    policy = build_policy(policy_name, env, cfg, agent)
    rows = []
    for e in range(cfg.run.episodes):
        seed = cfg.run.seed + seed_offset + e
        records = [o.record(env.threshold) for o in run_episode(env, policy, seed)]
        for rec in records:
            trace.write(rec, episode=e, seed=seed, **tags)
        rows.append({**tags, "episode": e, "seed": seed, **summarize(records).row()})
    return rows


REPORT_FIELDS = list(EpisodeReport.__dataclass_fields__)


# -- subcommands ---------------------------------------------------------

def cmd_eval(cfg: Config, out: str) -> None:
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    tags = {"policy": cfg.run.policy, "msps": cfg.env.msps, "horizon": cfg.env.horizon}
    rows = evaluate(cfg, cfg.run.policy, trace, tags)
    trace.close()
    fields = ["policy", "msps", "horizon", "episode", "seed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    write_report(os.path.join(out, "report.txt"), "eval", cfg, rows,
                 ["policy", "episode", "seed", "completion", "fulfillment", "total_cost", "gini"])


def _train(cfg: Config, out: str, make_env) -> tuple[PPOAgent, list[dict]]:
    agent_cfg = replace(cfg.agent, seed=cfg.agent.seed + cfg.run.seed)
    agent, curve = train(make_env, agent_cfg, cfg.run.train_episodes, seed=cfg.run.seed)
    write_csv(os.path.join(out, "curve.csv"), curve, CURVE_FIELDS)
    path = cfg.run.checkpoint or os.path.join(out, "agent.ckpt")
    agent.save(path)
    return agent, curve


def cmd_train(cfg: Config, out: str) -> None:
    env = MetaverseEnv(cfg)
    agent, curve = _train(cfg, out, lambda i: env)
    name = "drl-gcp" if cfg.env.cooperative else "drl"
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    tags = {"policy": name, "msps": cfg.env.msps, "horizon": cfg.env.horizon}
    rows = evaluate(cfg, name, trace, tags, agent, seed_offset=EVAL_SEED_OFFSET)
    trace.close()
    fields = ["policy", "msps", "horizon", "episode", "seed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    last = curve[-1] if curve else {}
    write_report(os.path.join(out, "report.txt"), "train", cfg, rows,
                 ["policy", "episode", "seed", "completion", "fulfillment", "total_cost"],
                 [f"training episodes: {len(curve)}",
                  f"final training reward: {_fmt(last.get('reward', 0.0))}"])


def cmd_sweep(cfg: Config, out: str) -> None:
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    rows = []
    for msps in cfg.run.sweep_msps:
        for horizon in cfg.run.sweep_horizons:
            point = cfg.with_overrides({"env.msps": msps, "env.horizon": horizon})
            for name in point.run.sweep_policies:
                tags = {"policy": name, "msps": msps, "horizon": horizon}
                rows += evaluate(point, name, trace, tags)
    trace.close()
    fields = ["policy", "msps", "horizon", "episode", "seed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    write_report(os.path.join(out, "report.txt"), "sweep", cfg, rows,
                 ["policy", "msps", "horizon", "episode", "completion", "fulfillment",
                  "total_cost", "range", "gini"])


def _scaled_budget(cfg: Config, factor: float) -> dict[str, Any]:
    ec = cfg.env
    over: dict[str, Any] = {"env.budget_per_msp": ec.budget_per_msp * factor}
    if ec.budgets is not None:
        over["env.budgets"] = [b * factor for b in ec.budgets]
    return over


def cmd_tolerance(cfg: Config, out: str) -> None:
    if not cfg.run.checkpoint:
        raise CliError("tolerance needs --checkpoint")
    agent = build_policy("drl-gcp" if cfg.env.cooperative else "drl", MetaverseEnv(cfg), cfg).agent
    trials = []
    for k in range(cfg.run.volume_steps + 1):
        scale = 1.0 + k * cfg.run.volume_increment
        quota = max(1, int(math.floor(cfg.env.quota * scale + 0.5)))
        trials.append(("volume", scale, {"env.quota": quota}))
    for k in range(cfg.run.budget_steps + 1):
        scale = 1.0 - k * cfg.run.budget_decrement
        trials.append(("budget", scale, _scaled_budget(cfg, scale)))
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    rows = []
    name = "drl-gcp" if cfg.env.cooperative else "drl"
    for i, (kind, scale, over) in enumerate(trials):
        trial_cfg = cfg.with_overrides(over)
        tags = {"trial": i, "kind": kind, "scale": round(scale, 10)}
        rows += evaluate(trial_cfg, name, trace, tags, agent)
    trace.close()
    fields = ["trial", "kind", "scale", "episode", "seed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    write_report(os.path.join(out, "report.txt"), "tolerance", cfg, rows,
                 ["trial", "kind", "scale", "episode", "mean_immersion", "completion",
                  "fulfillment", "total_cost"])


def adapted_config(cfg: Config) -> Config:
    """The post-shift environment: higher threshold, scaled client arrivals."""
    over: dict[str, Any] = {"env.threshold": cfg.run.adapt_threshold}
    for name, room in cfg.rooms.items():
        over[f"rooms.{name}.arrival_rate"] = room.arrival_rate * cfg.run.adapt_arrival_scale
    if cfg.reward.i_max < cfg.run.adapt_threshold:
        over["reward.i_max"] = 1.0
    return cfg.with_overrides(over)


def cmd_adapt(cfg: Config, out: str) -> None:
    before = MetaverseEnv(cfg)
    shifted_cfg = adapted_config(cfg)
    after = MetaverseEnv(shifted_cfg)
    switch = cfg.run.adapt_episode
    agent, curve = _train(cfg, out, lambda i: before if i < switch else after)
    name = "drl-gcp" if cfg.env.cooperative else "drl"
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    rows = []
    for phase, phase_cfg in (("before", cfg), ("after", shifted_cfg)):
        tags = {"phase": phase, "threshold": phase_cfg.env.threshold}
        rows += evaluate(phase_cfg, name, trace, tags, agent, seed_offset=EVAL_SEED_OFFSET)
    trace.close()
    fields = ["phase", "threshold", "episode", "seed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    write_report(os.path.join(out, "report.txt"), "adapt", cfg, rows,
                 ["phase", "threshold", "episode", "completion", "fulfillment", "total_cost"],
                 [f"shift at training episode: {switch}"])


def cmd_capsweep(cfg: Config, out: str) -> None:
    trace = TraceWriter(os.path.join(out, "trace.ndjson"))
    rows = []
    for ratio in cfg.run.cap_ratios:
        point = cfg.with_overrides({"env.cooperative": True, "env.withdraw_cap_ratio": ratio})
        tags = {"cap_ratio": float(ratio), "policy": point.run.policy}
        for row in evaluate(point, point.run.policy, trace, tags):
            row["failed"] = row["posted"] - row["executed"]
            rows.append(row)
    trace.close()
    fields = ["cap_ratio", "policy", "episode", "seed", "failed", *REPORT_FIELDS]
    write_csv(os.path.join(out, "metrics.csv"), rows, fields)
    write_report(os.path.join(out, "report.txt"), "capsweep", cfg, rows,
                 ["cap_ratio", "episode", "completion", "served_clients", "failed"])


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
    "tolerance": cmd_tolerance, "adapt": cmd_adapt, "capsweep": cmd_capsweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--policy")
        p.add_argument("--msps", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--episodes", type=int, help="evaluation episodes")
        p.add_argument("--train-episodes", type=int)
        p.add_argument("--checkpoint")
        p.add_argument("--out-dir", default=".")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dot-path config override, e.g. env.cooperative=true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        os.makedirs(args.out_dir, exist_ok=True)
        COMMANDS[args.command](cfg, args.out_dir)
    except (CliError, ConfigError, CheckpointError, OSError) as exc:
        print(f"metaalloc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
