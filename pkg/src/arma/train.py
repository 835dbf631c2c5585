"""Three-phase training pipeline plus the no-latent robust baseline.

Phase 1 trains policy, privileged encoder, and critic jointly with PPO.
Phase 2 regresses the temporal-conv estimator onto the frozen encoder's
latents over on-policy rollouts driven by the current estimator. Phase 3
finetunes the policy with PPO against the frozen, imperfect estimator.

Rollout collection runs all simulator instances in lockstep; the physics
kernel is invoked per worker slice (envs partitioned contiguously by
worker index) while network inference always runs over the full batch, so
results are bitwise independent of the worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import agents as agents_mod
from . import checkpoint, env as env_mod, nn
from .agents import (ACT_DIM, HIST_CHANNELS, HISTORY_LEN, LATENT_DIM, OBS_DIM,
                     AgentSet)
from .config import RunConfig
from .errors import CheckpointError, NonFiniteError

MODES = ("priv", "estimated", "static", "none")
RECORD_HEADER = "iter,return_mean,pg_loss,v_loss,mse,imit_mult,seconds"


@dataclass
class RolloutBuffer:
    obs: np.ndarray          # (B, OBS_DIM)
    e: np.ndarray            # (B, E_DIM) true extrinsics, always logged
    latent: np.ndarray       # (B, LATENT_DIM) latent fed to the policy
    action: np.ndarray       # (B, 6)
    logp: np.ndarray         # (B,)
    reward: np.ndarray       # (B,)
    value: np.ndarray        # (B,)
    done: np.ndarray         # (B,)
    adv: np.ndarray          # (B,)
    ret: np.ndarray          # (B,)
    steps_per_env: int = 0
    n_envs: int = 0
    windows: np.ndarray | None = None       # (B, 70, 22) when collected
    window_valid: np.ndarray | None = None  # (B,)
    episode_returns: list = field(default_factory=list)
    worker_steps: list = field(default_factory=list)

    def size(self) -> int:
        return self.obs.shape[0]


def worker_partition(n_envs: int, workers: int) -> list[slice]:
    """Contiguous env slices, one per worker, in worker-index order."""
    workers = max(1, min(workers, n_envs))
    base = n_envs // workers
    extra = n_envs % workers
    slices, start = [], 0
    for w in range(workers):
        size = base + (1 if w < extra else 0)
        slices.append(slice(start, start + size))
        start += size
    return slices


def gae(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimation, recursive form.

    rewards/dones: (T,) or (T, N); values: (T+1,) or (T+1, N) including the
    bootstrap value. A done step treats the following value as zero.
    Returns raw (unnormalized) advantages and returns.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards = rewards[:, None]
        values = values[:, None]
        dones = dones[:, None]
    T = rewards.shape[0]
    if values.shape[0] != T + 1 or dones.shape[0] != T:
        raise ValueError("gae expects values of length T+1 and dones of length T")
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
    ret = adv + values[:T]
    if squeeze:
        return adv[:, 0], ret[:, 0]
    return adv, ret


class RolloutRunner:
    """Owns the vectorized env, per-env histories, and latent sourcing."""

    def __init__(self, cfg: RunConfig, agent_set: AgentSet, seed: int,
                 mode: str, **env_kwargs):
        if mode not in MODES:
            raise ValueError(f"unknown rollout mode {mode!r}")
        self.cfg = cfg
        self.agents = agent_set
        self.mode = mode
        n = env_kwargs.pop("n", cfg.env.num_envs)
        self.env = env_mod.VecBipedEnv(
            n, seed,
            episode_steps=env_kwargs.pop("episode_steps", cfg.env.episode_steps),
            lowpass_beta=cfg.env.lowpass_beta,
            fall_height=cfg.env.fall_height,
            init_noise=cfg.env.init_noise,
            **env_kwargs)
        self.n = n
        self.act_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xAC7)))
        self.reward_cfg = env_mod.RewardConfig()
        self.proprio_ring = np.zeros((n, 5, 16), dtype=np.float32)
        self.act_ring = np.zeros((n, 4, 6), dtype=np.float32)
        self.hist = np.zeros((n, HISTORY_LEN, HIST_CHANNELS), dtype=np.float32)
        self.hist_count = np.zeros(n, dtype=np.int64)
        self.frozen_z = np.zeros((n, LATENT_DIM), dtype=np.float32)
        self.has_frozen = np.zeros(n, dtype=bool)
        self.ep_return = np.zeros(n, dtype=np.float64)

    # -- pieces -------------------------------------------------------------

    def observe(self, push: bool = True) -> np.ndarray:
        cur = self.env.proprio()
        if push:
            self.proprio_ring = np.roll(self.proprio_ring, -1, axis=1)
            self.proprio_ring[:, -1] = cur
            ring = self.proprio_ring
        else:
            ring = np.roll(self.proprio_ring, -1, axis=1)
            ring[:, -1] = cur
        la_q, la_qd = self.env.lookahead_obs()
        la = np.concatenate([la_q, la_qd], axis=2).reshape(self.n, -1)
        return np.concatenate([ring.reshape(self.n, -1),
                               self.act_ring.reshape(self.n, -1),
                               la, self.env.command_obs()], axis=1)

    def latent(self) -> np.ndarray:
        """Latent fed to the policy this step, per the rollout mode."""
        if self.mode == "none":
            return np.zeros((self.n, 0), dtype=np.float32)
        if self.mode == "priv":
            with nn.no_grad():
                return self.agents.mu(self.env.true_e()).data
        z = np.zeros((self.n, LATENT_DIM), dtype=np.float32)
        full = self.hist_count >= HISTORY_LEN
        if self.mode == "estimated":
            if np.any(full):
                with nn.no_grad():
                    z[full] = self.agents.phi(self.hist[full]).data
            return z
        # static: freeze the first full-window estimate per episode
        fresh = full & ~self.has_frozen
        if np.any(fresh):
            with nn.no_grad():
                self.frozen_z[fresh] = self.agents.phi(self.hist[fresh]).data
            self.has_frozen[fresh] = True
        z[self.has_frozen] = self.frozen_z[self.has_frozen]
        return z

    def values(self, obs: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            v = self.agents.critic(np.concatenate(
                [obs, self.env.true_e()], axis=1)).data
        return v[:, 0].astype(np.float64)

    def _after_step(self, done: np.ndarray):
        for i in np.nonzero(done)[0]:
            self.episode_done(int(i))

    def episode_done(self, i: int):
        self.proprio_ring[i] = 0.0
        self.act_ring[i] = 0.0
        self.hist[i] = 0.0
        self.hist_count[i] = 0
        self.has_frozen[i] = False
        self.frozen_z[i] = 0.0

    def step_env(self, action: np.ndarray):
        """Physics advance, partitioned into worker slices. Network passes
        stay full-batch, so results do not depend on the worker count."""
        targets = self.env.begin_step(action)
        for sl in worker_partition(self.n, self.cfg.workers()):
            self.env.run_kernel(targets, sl)
        return self.env.finish_step(self.reward_cfg)

    def warmup(self, steps: int):
        """Roll the current policy without recording (history pre-fill)."""
        for _ in range(steps):
            obs = self.observe()
            z = self.latent()
            action, _ = agents_mod.act(
                self.agents, obs, z if self.mode != "none" else None,
                mode="sample", rng=self.act_rng)
            self.hist = np.roll(self.hist, -1, axis=1)
            self.hist[:, -1, :16] = self.env.proprio()
            self.hist[:, -1, 16:] = action
            self.hist_count += 1
            self.act_ring = np.roll(self.act_ring, -1, axis=1)
            self.act_ring[:, -1] = action
            _, done, _ = self.step_env(action)
            self._after_step(done)

    def collect(self, total_steps: int, with_windows: bool = False) -> RolloutBuffer:
        n = self.n
        if total_steps % n != 0:
            raise ValueError(f"batch {total_steps} not divisible by {n} envs")
        T = total_steps // n
        B = total_steps
        buf = RolloutBuffer(
            obs=np.zeros((B, OBS_DIM), dtype=np.float32),
            e=np.zeros((B, env_mod.E_DIM), dtype=np.float32),
            latent=np.zeros((B, LATENT_DIM), dtype=np.float32),
            action=np.zeros((B, ACT_DIM), dtype=np.float32),
            logp=np.zeros(B), reward=np.zeros(B), value=np.zeros(B),
            done=np.zeros(B, dtype=bool), adv=np.zeros(B), ret=np.zeros(B),
            steps_per_env=T, n_envs=n)
        buf.worker_steps = [T * (sl.stop - sl.start)
                            for sl in worker_partition(n, self.cfg.workers())]
        if with_windows:
            buf.windows = np.zeros((B, HISTORY_LEN, HIST_CHANNELS), dtype=np.float32)
            buf.window_valid = np.zeros(B, dtype=bool)
        rewards = np.zeros((T, n))
        values = np.zeros((T + 1, n))
        dones = np.zeros((T, n))

        for t in range(T):
            rows = slice(t * n, (t + 1) * n)
            obs = self.observe()
            z = self.latent()
            cur_proprio = self.env.proprio()
            if with_windows:
                buf.windows[rows] = self.hist
                buf.window_valid[rows] = self.hist_count >= HISTORY_LEN
            action, logp = agents_mod.act(
                self.agents, obs, z if self.mode != "none" else None,
                mode="sample", rng=self.act_rng)
            value = self.values(obs)
            self.hist = np.roll(self.hist, -1, axis=1)
            self.hist[:, -1, :16] = cur_proprio
            self.hist[:, -1, 16:] = action
            self.hist_count += 1
            self.act_ring = np.roll(self.act_ring, -1, axis=1)
            self.act_ring[:, -1] = action

            buf.obs[rows] = obs
            buf.e[rows] = self.env.true_e()
            if self.mode != "none":
                buf.latent[rows] = z
            buf.action[rows] = action
            buf.logp[rows] = logp
            buf.value[rows] = value

            r, done, info = self.step_env(action)
            buf.reward[rows] = r
            buf.done[rows] = done
            rewards[t] = r
            values[t] = value
            dones[t] = done
            self.ep_return += r
            for i in np.nonzero(done)[0]:
                buf.episode_returns.append(float(self.ep_return[i]))
                self.ep_return[i] = 0.0
            self._after_step(done)

        values[T] = self.values(self.observe(push=False))
        adv, ret = gae(rewards, values, dones, self.cfg.train.gamma,
                       self.cfg.train.lam)
        buf.adv = adv.reshape(-1)
        buf.ret = ret.reshape(-1)
        buf.reward = rewards.reshape(-1)
        buf.done = dones.reshape(-1).astype(bool)
        return buf


# ---------------------------------------------------------------------------
# PPO
# ---------------------------------------------------------------------------

def ppo_losses(agent_set: AgentSet, obs, e, latent, actions, logp_old, adv,
               ret, clip: float, train_encoder: bool):
    """Clipped-surrogate, value, and entropy loss graph for one minibatch."""
    obs_t = nn.Tensor(obs)
    if agent_set.uses_latent():
        if train_encoder:
            z = agent_set.mu(e)
        else:
            z = nn.Tensor(latent)
        x = nn.concat([obs_t, z], axis=1)
    else:
        x = obs_t
    mean = agent_set.pi(x)
    logp = agent_set.head.log_prob(mean, actions)
    ratio = (logp - nn.Tensor(logp_old.astype(np.float32))).exp()
    adv_t = nn.Tensor(adv.astype(np.float32))
    surr1 = ratio * adv_t
    surr2 = ratio.clip(1.0 - clip, 1.0 + clip) * adv_t
    pg_loss = -(nn.minimum(surr1, surr2).mean())
    entropy = agent_set.head.entropy()
    v = agent_set.critic(nn.concat([obs_t, nn.Tensor(e)], axis=1))
    v = v.reshape(v.shape[0])
    v_loss = (v - nn.Tensor(ret.astype(np.float32))).square().mean()
    return pg_loss, v_loss, entropy, ratio


def ppo_update(buf: RolloutBuffer, agent_set: AgentSet, cfg: RunConfig,
               rng: np.random.Generator, opt_actor: nn.Adam,
               opt_critic: nn.Adam, train_encoder: bool) -> dict:
    t = cfg.train
    B = buf.size()
    adv = (buf.adv - buf.adv.mean()) / (buf.adv.std() + 1e-8)
    snapshot = {name: p.data.copy()
                for name, p in agent_set.named_params().items()}
    stats = {"pg_loss": 0.0, "v_loss": 0.0, "entropy": 0.0, "aborted": False}
    n_mb = 0
    for _ in range(t.epochs):
        perm = rng.permutation(B)
        for start in range(0, B, t.minibatch):
            idx = perm[start:start + t.minibatch]
            pg, vl, ent, _ = ppo_losses(
                agent_set, buf.obs[idx], buf.e[idx], buf.latent[idx],
                buf.action[idx], buf.logp[idx], adv[idx], buf.ret[idx],
                t.clip, train_encoder)
            loss = pg + 0.5 * vl + (-t.entropy_coef) * ent
            if not np.isfinite(loss.data):
                stats["aborted"] = True
                break
            opt_actor.zero_grad()
            opt_critic.zero_grad()
            nn.backward(loss)
            try:
                nn.clip_grad_norm(opt_actor.params, t.grad_clip)
                nn.clip_grad_norm(opt_critic.params, t.grad_clip)
                opt_actor.step()
                opt_critic.step()
            except NonFiniteError:
                stats["aborted"] = True
                break
            stats["pg_loss"] += float(pg.data)
            stats["v_loss"] += float(vl.data)
            stats["entropy"] += float(ent.data)
            n_mb += 1
        if stats["aborted"]:
            break
    if stats["aborted"]:
        for name, p in agent_set.named_params().items():
            p.data[:] = snapshot[name]
    elif n_mb:
        for k in ("pg_loss", "v_loss", "entropy"):
            stats[k] /= n_mb
    # post-update ratio over the whole batch (sanity band diagnostics)
    with nn.no_grad():
        _, _, _, ratio = ppo_losses(
            agent_set, buf.obs, buf.e, buf.latent, buf.action, buf.logp,
            adv, buf.ret, t.clip, False)
    stats["ratio_mean"] = float(ratio.data.mean(dtype=np.float64))
    return stats


# ---------------------------------------------------------------------------
# Phase drivers
# ---------------------------------------------------------------------------

def imitation_multiplier(iteration: int, total: int, floor: float) -> float:
    """Linear decay from 1.0 to the floor over the first half of training."""
    half = max(1, total // 2)
    if iteration >= half:
        return floor
    return 1.0 - (1.0 - floor) * (iteration / half)


class RecordWriter:
    def __init__(self, path, resume: bool = False):
        mode = "a" if resume else "w"
        self.fh = open(path, mode)
        if not resume:
            self.fh.write(RECORD_HEADER + "\n")

    def row(self, iteration, return_mean, pg_loss, v_loss, mse, mult, seconds):
        vals = [f"{iteration}"] + [f"{v:.9g}" for v in
                                   (return_mean, pg_loss, v_loss, mse, mult, seconds)]
        self.fh.write(",".join(vals) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _ckpt_meta(cfg: RunConfig, phase: str, seed: int, iteration: int) -> dict:
    return {"phase": phase, "config": cfg.hash(), "seed": seed,
            "iteration": iteration, "format": "named-f32"}


def _save_agents(path, agent_set: AgentSet, opts: dict, meta: dict):
    tensors = {k: v.data for k, v in agent_set.named_params().items()}
    for prefix, opt in opts.items():
        tensors.update(opt.state_tensors(prefix))
    checkpoint.save_checkpoint(path, tensors, meta)


def _ppo_phase(cfg: RunConfig, run_dir, seed: int, phase: str, mode: str,
               agent_set: AgentSet, train_encoder: bool, iters: int,
               decay: bool, resume: bool = False) -> str:
    import os

    t = cfg.train
    path = os.path.join(run_dir, f"phase{phase}.ckpt" if phase != "robust"
                        else "robust.ckpt")
    record_path = os.path.join(run_dir, f"phase{phase}_record.csv"
                               if phase != "robust" else "robust_record.csv")
    actor_params = list(agent_set.pi.params.values()) + [agent_set.head.log_std]
    if train_encoder and agent_set.mu is not None:
        actor_params += list(agent_set.mu.params.values())
    opt_actor = nn.Adam(actor_params, lr=t.lr)
    opt_critic = nn.Adam(list(agent_set.critic.params.values()), lr=t.lr)
    opts = {"adam_actor": opt_actor, "adam_critic": opt_critic}

    start_iter = 0
    if resume:
        try:
            tensors, meta = checkpoint.load_checkpoint(path)
            checkpoint.require_phase(meta, phase, path)
            if meta.get("config") != cfg.hash():
                raise CheckpointError(
                    f"resume refused: checkpoint config {meta.get('config')} "
                    f"differs from current {cfg.hash()}")
            checkpoint.load_into(agent_set.named_params(), tensors, path=path)
            for prefix, opt in opts.items():
                opt.load_state_tensors(prefix, tensors)
            start_iter = int(meta["iteration"]) + 1
        except FileNotFoundError:
            start_iter = 0

    runner = RolloutRunner(cfg, agent_set, seed, mode)
    rng_update = np.random.default_rng(np.random.SeedSequence((seed, 0x0B1)))
    writer = RecordWriter(record_path, resume=start_iter > 0)
    last_return = 0.0
    for it in range(start_iter, iters):
        t0 = time.perf_counter()
        mult = imitation_multiplier(it, iters, t.decay_floor) if decay \
            else t.decay_floor
        runner.reward_cfg.imitation_decay_multiplier = mult
        buf = runner.collect(t.batch)
        stats = ppo_update(buf, agent_set, cfg, rng_update, opt_actor,
                           opt_critic, train_encoder)
        if buf.episode_returns:
            last_return = float(np.mean(buf.episode_returns))
        writer.row(it, last_return, stats["pg_loss"], stats["v_loss"], 0.0,
                   mult, time.perf_counter() - t0)
        if (it + 1) % t.checkpoint_every == 0 or it == iters - 1:
            _save_agents(path, agent_set, opts, _ckpt_meta(cfg, phase, seed, it))
    if iters == 0 or start_iter >= iters:
        _save_agents(path, agent_set, opts,
                     _ckpt_meta(cfg, phase, seed, max(start_iter - 1, 0)))
    writer.close()
    return path


def phase1(cfg: RunConfig, run_dir: str, seed: int, resume: bool = False) -> str:
    """Privileged training: PPO over z = mu(e), imitation weight decaying."""
    agent_set = agents_mod.build_agents(seed, hidden=cfg.agents.hidden,
                                        e_dim=cfg.agents.e_dim)
    return _ppo_phase(cfg, run_dir, seed, "1", "priv", agent_set,
                      train_encoder=True, iters=cfg.train.iters_phase1,
                      decay=True, resume=resume)


def load_agents_from(run_dir: str, cfg: RunConfig, seed: int,
                     need: tuple = ("1",)) -> AgentSet:
    """Build an agent set and load the requested phase checkpoints into it;
    phase 3/robust policies replace the phase-1 policy when requested."""
    import os

    agent_set = agents_mod.build_agents(seed, hidden=cfg.agents.hidden,
                                        e_dim=cfg.agents.e_dim,
                                        with_latent="robust" not in need)
    for tag in need:
        name = "robust.ckpt" if tag == "robust" else f"phase{tag}.ckpt"
        path = os.path.join(run_dir, name)
        if not os.path.exists(path):
            raise CheckpointError(f"missing checkpoint for phase {tag}: {path}")
        tensors, meta = checkpoint.load_checkpoint(path)
        checkpoint.require_phase(meta, tag, path)
        if tag == "1":
            checkpoint.load_into(agent_set.pi.params, tensors, path=path)
            checkpoint.load_into(agent_set.mu.params, tensors, path=path)
            checkpoint.load_into(agent_set.critic.params, tensors, path=path)
            agent_set.head.log_std.data[:] = tensors["log_std"]
        elif tag == "2":
            checkpoint.load_into(agent_set.phi.params, tensors, path=path)
        elif tag in ("3", "robust"):
            checkpoint.load_into(agent_set.pi.params, tensors, path=path)
            checkpoint.load_into(agent_set.critic.params, tensors, path=path)
            agent_set.head.log_std.data[:] = tensors["log_std"]
    return agent_set


def phase2(cfg: RunConfig, run_dir: str, seed: int, resume: bool = False) -> str:
    """Supervised latent regression on on-policy rollouts."""
    import os

    t = cfg.train
    agent_set = load_agents_from(run_dir, cfg, seed, need=("1",))
    # fresh estimator; the adaptation module starts from random init
    re_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF1)))
    agent_set.phi = nn.Conv1dNet(
        nn.Conv1dSpec(HIST_CHANNELS, agents_mod.CONV_LAYERS), HISTORY_LEN,
        agents_mod.CONV_DENSE, LATENT_DIM, re_rng, "phi")
    path = os.path.join(run_dir, "phase2.ckpt")
    record_path = os.path.join(run_dir, "phase2_record.csv")
    opt = nn.Adam(list(agent_set.phi.params.values()), lr=t.lr_phase2)

    start_iter = 0
    if resume and os.path.exists(path):
        tensors, meta = checkpoint.load_checkpoint(path)
        checkpoint.require_phase(meta, "2", path)
        checkpoint.load_into(agent_set.phi.params, tensors, path=path)
        opt.load_state_tensors("adam_phi", tensors)
        start_iter = int(meta["iteration"]) + 1

    runner = RolloutRunner(cfg, agent_set, seed, "estimated")
    runner.reward_cfg.imitation_decay_multiplier = t.decay_floor
    runner.warmup(HISTORY_LEN)
    writer = RecordWriter(record_path, resume=start_iter > 0)
    mu_before = {k: v.data.copy() for k, v in agent_set.mu.params.items()}
    last_return = 0.0
    initial_mse = None
    def save(it: int):
        tensors = {k: v.data for k, v in agent_set.phi.params.items()}
        tensors.update(opt.state_tensors("adam_phi"))
        checkpoint.save_checkpoint(path, tensors, _ckpt_meta(cfg, "2", seed, it))

    for it in range(start_iter, t.iters_phase2):
        t0 = time.perf_counter()
        buf = runner.collect(t.batch, with_windows=True)
        valid = np.nonzero(buf.window_valid)[0]
        mse_hold = float("nan")
        if valid.size >= 16:
            with nn.no_grad():
                targets = agent_set.mu(buf.e[valid]).data
            n_hold = max(1, int(round(valid.size * t.holdout_fraction)))
            train_idx, hold_idx = valid[:-n_hold], valid[-n_hold:]
            train_targets, hold_targets = targets[:-n_hold], targets[-n_hold:]
            with nn.no_grad():
                pred = agent_set.phi(buf.windows[hold_idx]).data
            mse_hold = float(np.mean(np.sum(
                (pred.astype(np.float64) - hold_targets.astype(np.float64)) ** 2,
                axis=1)))
            if initial_mse is None:
                initial_mse = mse_hold
            zhat = agent_set.phi(buf.windows[train_idx])
            z_t = nn.Tensor(train_targets)
            loss = (zhat - z_t).square().sum(axis=1).mean()
            if float(loss.data) > 10.0 * max(initial_mse, 1e-9) and it > 10:
                writer.close()
                raise NonFiniteError(
                    f"phase-2 regression diverged: loss {float(loss.data):.4g} "
                    f"exceeds 10x initial MSE {initial_mse:.4g}")
            opt.zero_grad()
            nn.backward(loss)
            opt.step()
        if buf.episode_returns:
            last_return = float(np.mean(buf.episode_returns))
        writer.row(it, last_return, 0.0, 0.0, mse_hold, t.decay_floor,
                   time.perf_counter() - t0)
        if (it + 1) % t.checkpoint_every == 0 or it == t.iters_phase2 - 1:
            save(it)
    if start_iter >= t.iters_phase2:
        save(max(start_iter - 1, 0))
    writer.close()
    for k, v in agent_set.mu.params.items():
        assert np.array_equal(v.data, mu_before[k]), \
            "encoder changed during phase 2"
    return path


def phase3(cfg: RunConfig, run_dir: str, seed: int, resume: bool = False) -> str:
    """PPO finetuning of the policy against the frozen estimator."""
    agent_set = load_agents_from(run_dir, cfg, seed, need=("1", "2"))
    phi_before = {k: v.data.copy() for k, v in agent_set.phi.params.items()}
    mu_before = {k: v.data.copy() for k, v in agent_set.mu.params.items()}
    path = _ppo_phase(cfg, run_dir, seed, "3", "estimated", agent_set,
                      train_encoder=False, iters=cfg.train.iters_phase3,
                      decay=False, resume=resume)
    for k, v in agent_set.phi.params.items():
        assert np.array_equal(v.data, phi_before[k]), \
            "adaptation module changed during phase 3"
    for k, v in agent_set.mu.params.items():
        assert np.array_equal(v.data, mu_before[k]), \
            "encoder changed during phase 3"
    return path


def train_robust_baseline(cfg: RunConfig, run_dir: str, seed: int,
                          resume: bool = False) -> str:
    """Domain-randomized baseline: same procedure, no latent anywhere."""
    agent_set = agents_mod.build_agents(seed, hidden=cfg.agents.hidden,
                                        e_dim=cfg.agents.e_dim,
                                        with_latent=False)
    return _ppo_phase(cfg, run_dir, seed, "robust", "none", agent_set,
                      train_encoder=False, iters=cfg.train.iters_robust,
                      decay=True, resume=resume)
