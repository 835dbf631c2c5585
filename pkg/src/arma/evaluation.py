"""Metric harness: mean time to fall, converged return, command tracking
with the feasible-command grid, mean joint jerk, and the minimum-friction
line search, across the five controller variants.

Episodes run the policy in mean (deterministic) mode. All protocols use
fixed seed lists so reruns produce byte-identical reports.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import agents as agents_mod
from . import env as env_mod, train
from .agents import AgentSet
from .config import RunConfig
from .errors import CheckpointError
from .gait import Command

EVAL_MODES = ("priv", "rma", "arma", "static", "robust")

# (checkpoints needed, policy source, latent source) per mode
MODE_SPEC = {
    "priv": (("1",), "runner_priv"),
    "rma": (("1", "2"), "runner_estimated"),
    "arma": (("1", "2", "3"), "runner_estimated"),
    "static": (("1", "2", "3"), "runner_static"),
    "robust": (("robust",), "runner_none"),
}

FRICTION_SENTINEL = "above-training-range"


@dataclass
class MetricReport:
    mode: str
    mttf: float = 0.0
    return_mean: float = 0.0
    tracking_err: tuple = (0.0, 0.0)   # (speed m/s, height m)
    feasible_fraction: float = 0.0
    mean_jerk: float = 0.0
    min_friction: float | str = 0.0
    seeds: list = field(default_factory=list)
    episodes: int = 0


def load_mode(run_dir: str, cfg: RunConfig, mode: str) -> AgentSet:
    if mode not in EVAL_MODES:
        raise CheckpointError(f"unknown eval mode {mode!r}")
    need, _ = MODE_SPEC[mode]
    with_latent = mode != "robust"
    if not with_latent:
        agent_set = train.load_agents_from(run_dir, cfg, seed=0, need=("robust",))
        return agent_set
    return train.load_agents_from(run_dir, cfg, seed=0, need=need)


def runner_mode(mode: str) -> str:
    return {"priv": "priv", "rma": "estimated", "arma": "estimated",
            "static": "static", "robust": "none"}[mode]


class EpisodeStats:
    """Per-episode aggregates from a batched deterministic rollout."""

    def __init__(self, n: int, max_steps: int):
        self.ret = np.zeros(n)
        self.fall_step = np.full(n, -1, dtype=np.int64)
        self.alive = np.ones(n, dtype=bool)
        self.max_steps = max_steps
        self.track_speed = np.zeros(n)
        self.track_height = np.zeros(n)
        self.track_n = np.zeros(n, dtype=np.int64)
        self.jerk_sum = np.zeros(n)
        self.jerk_n = np.zeros(n, dtype=np.int64)

    def fall_times(self) -> np.ndarray:
        t = np.where(self.fall_step >= 0, self.fall_step / 30.0,
                     self.max_steps / 30.0)
        return t


def rollout_episodes(cfg: RunConfig, agent_set: AgentSet, mode: str, n: int,
                     steps: int, seed: int, transient_steps: int = 0,
                     **env_kwargs) -> EpisodeStats:
    """n parallel episodes, mean-mode actions, no auto-restart counting:
    each instance contributes exactly one episode (falls end its scoring)."""
    runner = train.RolloutRunner(cfg, agent_set, seed, runner_mode(mode),
                                 n=n, episode_steps=steps + 1, **env_kwargs)
    runner.reward_cfg = env_mod.RewardConfig()  # undecayed eval reward
    stats = EpisodeStats(n, steps)
    e = runner.env
    joint_hist = np.zeros((4, n, 6))
    for t in range(steps):
        obs = runner.observe()
        z = runner.latent()
        action, _ = agents_mod.act(
            agent_set, obs, z if runner.mode != "none" else None, mode="mean")
        r, done, info = runner.step_env(action)
        live = stats.alive
        stats.ret[live] += r[live]
        fell = live & info["fallen"]
        stats.fall_step[fell] = t
        stats.alive &= ~(info["fallen"] | info["diverged"])
        # tracking after the transient, only while alive
        if t >= transient_steps:
            sel = stats.alive
            stats.track_speed[sel] += np.abs(e.qd[sel, 0] - e.speed[sel])
            stats.track_height[sel] += np.abs(e.q[sel, 1] - e.height[sel])
            stats.track_n[sel] += 1
        # third difference of joint positions at the control rate
        joint_hist = np.roll(joint_hist, -1, axis=0)
        joint_hist[-1] = e.q[:, 3:9]
        if t >= 3:
            d3 = (joint_hist[3] - 3 * joint_hist[2] + 3 * joint_hist[1]
                  - joint_hist[0])
            sel = stats.alive
            stats.jerk_sum[sel] += np.abs(d3[sel]).sum(axis=1)
            stats.jerk_n[sel] += 6
        runner._after_step(done)
    return stats


def mean_jerk_from_stats(stats: EpisodeStats) -> float:
    dt3 = (1.0 / 30.0) ** 3
    total = stats.jerk_sum.sum()
    count = stats.jerk_n.sum()
    if count == 0:
        raise ValueError("trajectory too short for a third difference")
    return float(total / count / dt3 / 1000.0)  # krad/s^3


def jerk_of_trajectory(q: np.ndarray, control_dt: float = 1.0 / 30.0) -> float:
    """Mean |third difference| / dt^3 over joints and steps, in krad/s^3.

    q: (T, n_joints) joint positions at the control rate; needs T >= 4."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, None]
    if q.shape[0] < 4:
        raise ValueError("trajectory too short for a third difference: "
                         f"{q.shape[0]} < 4 steps")
    d3 = q[3:] - 3.0 * q[2:-1] + 3.0 * q[1:-2] - q[:-3]
    return float(np.mean(np.abs(d3)) / control_dt ** 3 / 1000.0)


def mttf(cfg: RunConfig, agent_set: AgentSet, mode: str, n: int | None = None,
         timeout: float | None = None, seed: int = 1000) -> float:
    """Mean time to fall over randomized episodes; survivors are censored
    at the timeout."""
    ev = cfg.eval
    n = n if n is not None else ev.episodes
    steps = int(round((timeout or ev.timeout_seconds) * 30.0))
    stats = rollout_episodes(cfg, agent_set, mode, n, steps, seed)
    return float(stats.fall_times().mean())


def mean_return(cfg: RunConfig, agent_set: AgentSet, mode: str,
                n: int | None = None, horizon: float | None = None,
                seed: int = 1000) -> float:
    ev = cfg.eval
    n = n if n is not None else ev.episodes
    steps = int(round((horizon or ev.timeout_seconds) * 30.0))
    stats = rollout_episodes(cfg, agent_set, mode, n, steps, seed)
    return float(stats.ret.mean())


def command_grid(cfg: RunConfig):
    ev = cfg.eval
    speeds = np.round(np.arange(-1.0, 1.0 + 1e-9, ev.speed_step), 10)
    heights = np.round(np.arange(0.65, 1.0 + 1e-9, ev.height_step), 10)
    return [Command(float(s), float(h)) for s in speeds for h in heights]


def tracking(cfg: RunConfig, agent_set: AgentSet, mode: str,
             seed: int = 2000, thorough: bool = False):
    """Feasible-command fraction and per-axis tracking error on the
    nominal-ground command grid (one 10 s trial per cell per seed)."""
    ev = cfg.eval
    cells = command_grid(cfg)
    steps = int(round(ev.feasible_seconds * 30.0))
    transient = int(round(ev.transient_seconds * 30.0))
    n_seeds = ev.thorough_seeds if thorough else 1
    feasible_votes = np.zeros(len(cells), dtype=np.int64)
    err_speed = np.zeros(len(cells))
    err_height = np.zeros(len(cells))
    err_n = np.zeros(len(cells), dtype=np.int64)
    for s in range(n_seeds):
        # all cells in lockstep as one batch; per-cell fixed command
        runner = train.RolloutRunner(
            cfg, agent_set, seed + s, runner_mode(mode), n=len(cells),
            episode_steps=steps + 1, randomize_params=False,
            fixed_command=list(cells),
            terrain_kinds=("flat",), resample_enabled=False)
        runner.reward_cfg = env_mod.RewardConfig()
        stats = rollout_episodes_preset(runner, cells, steps, transient)
        survived = stats.fall_step < 0
        feasible_votes += survived
        sel = survived & (stats.track_n > 0)
        err_speed[sel] += stats.track_speed[sel] / stats.track_n[sel]
        err_height[sel] += stats.track_height[sel] / stats.track_n[sel]
        err_n[sel] += 1
    needed = (n_seeds // 2) + 1
    feasible = feasible_votes >= needed
    fraction = float(feasible.mean())
    scored = err_n > 0
    per_axis = (float(np.mean(err_speed[scored] / err_n[scored])) if scored.any() else float("nan"),
                float(np.mean(err_height[scored] / err_n[scored])) if scored.any() else float("nan"))
    return per_axis, fraction


def rollout_episodes_preset(runner, cells, steps, transient_steps) -> EpisodeStats:
    """Like rollout_episodes but on an already-configured runner whose env
    commands must stay pinned per cell."""
    n = len(cells)
    stats = EpisodeStats(n, steps)
    e = runner.env
    speeds = np.array([c.speed for c in cells])
    heights = np.array([c.height for c in cells])
    joint_hist = np.zeros((4, n, 6))
    for t in range(steps):
        obs = runner.observe()
        z = runner.latent()
        action, _ = agents_mod.act(
            runner.agents, obs, z if runner.mode != "none" else None, mode="mean")
        r, done, info = runner.step_env(action)
        live = stats.alive
        stats.ret[live] += r[live]
        fell = live & (info["fallen"] | info["diverged"])
        stats.fall_step[fell] = t
        stats.alive &= ~fell
        if t >= transient_steps:
            sel = stats.alive
            stats.track_speed[sel] += np.abs(e.qd[sel, 0] - speeds[sel])
            stats.track_height[sel] += np.abs(e.q[sel, 1] - heights[sel])
            stats.track_n[sel] += 1
        joint_hist = np.roll(joint_hist, -1, axis=0)
        joint_hist[-1] = e.q[:, 3:9]
        if t >= 3:
            d3 = (joint_hist[3] - 3 * joint_hist[2] + 3 * joint_hist[1]
                  - joint_hist[0])
            sel = stats.alive
            stats.jerk_sum[sel] += np.abs(d3[sel]).sum(axis=1)
            stats.jerk_n[sel] += 6
        runner._after_step(done)
    return stats


def mean_jerk(cfg: RunConfig, agent_set: AgentSet, mode: str,
              n: int | None = None, seed: int = 1000) -> float:
    ev = cfg.eval
    n = n if n is not None else ev.episodes
    steps = int(round(ev.timeout_seconds * 30.0))
    stats = rollout_episodes(cfg, agent_set, mode, n, steps, seed)
    return mean_jerk_from_stats(stats)


def min_friction(cfg: RunConfig, agent_set: AgentSet, mode: str,
                 seed: int = 3000):
    """Descending friction scan on flat ground at a fixed forward command;
    a value passes when >= 4 of 5 seeded trials stay up for 10 s."""
    ev = cfg.eval
    steps = int(round(ev.feasible_seconds * 30.0))
    value = ev.friction_start
    best = None
    while value >= ev.friction_floor - 1e-9:
        params = env_mod.EnvParams(friction_ratio=value)
        stats_ = rollout_episodes(
            cfg, agent_set, mode, ev.friction_trials, steps, seed,
            fixed_params=params, fixed_command=Command(0.5, 0.98),
            terrain_kinds=("flat",), resample_enabled=False)
        ups = int((stats_.fall_step < 0).sum())
        if ups >= ev.friction_trials - 1:
            best = value
            value = round(value - ev.friction_step, 10)
        else:
            break
    return best if best is not None else FRICTION_SENTINEL


BENCH_HEADER = "mode,mttf,return,track_x,feasible,jerk,minfric,seed_set"


def evaluate_mode(cfg: RunConfig, run_dir: str, mode: str,
                  thorough: bool = False, base_seed: int = 1000) -> MetricReport:
    agent_set = load_mode(run_dir, cfg, mode)
    report = MetricReport(mode=mode)
    ev = cfg.eval
    steps = int(round(ev.timeout_seconds * 30.0))
    stats = rollout_episodes(cfg, agent_set, mode, ev.episodes, steps, base_seed)
    report.mttf = float(stats.fall_times().mean())
    report.return_mean = float(stats.ret.mean())
    report.mean_jerk = mean_jerk_from_stats(stats)
    report.tracking_err, report.feasible_fraction = tracking(
        cfg, agent_set, mode, seed=base_seed + 1000, thorough=thorough)
    report.min_friction = min_friction(cfg, agent_set, mode,
                                       seed=base_seed + 2000)
    report.seeds = [base_seed, base_seed + 1000, base_seed + 2000]
    report.episodes = ev.episodes
    return report


def compare(cfg: RunConfig, run_dir: str, modes, csv_path: str,
            thorough: bool = False, base_seed: int = 1000) -> list[MetricReport]:
    """One row per mode; emits the benchmark CSV and returns the reports."""
    reports = [evaluate_mode(cfg, run_dir, m, thorough, base_seed)
               for m in modes]
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# config={cfg.hash()} seed={base_seed}\n")
        fh.write(BENCH_HEADER + "\n")
        for rep in reports:
            minfric = (rep.min_friction if isinstance(rep.min_friction, str)
                       else f"{rep.min_friction:.9g}")
            fh.write(",".join([
                rep.mode, f"{rep.mttf:.9g}", f"{rep.return_mean:.9g}",
                f"{rep.tracking_err[0]:.9g}", f"{rep.feasible_fraction:.9g}",
                f"{rep.mean_jerk:.9g}", minfric,
                ";".join(str(s) for s in rep.seeds)]) + "\n")
    return reports


def format_table(reports: list[MetricReport]) -> str:
    lines = [f"{'mode':8} {'mttf':>7} {'return':>9} {'track_x':>9} "
             f"{'feasible':>9} {'jerk':>8} {'minfric':>8}"]
    for r in reports:
        minfric = (r.min_friction if isinstance(r.min_friction, str)
                   else f"{r.min_friction:.2f}")
        lines.append(f"{r.mode:8} {r.mttf:7.2f} {r.return_mean:9.2f} "
                     f"{r.tracking_err[0]:9.4f} {r.feasible_fraction:9.3f} "
                     f"{r.mean_jerk:8.3f} {minfric:>8}")
    return "\n".join(lines)
