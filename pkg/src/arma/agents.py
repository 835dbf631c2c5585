"""The controller networks and their input plumbing: observation layout,
the privileged encoder, the Gaussian walking policy, the temporal-conv
estimator that recovers the latent from state-action history, and the
privileged critic.

Observation layout (154 for the default build), fixed and versioned:
    [0:80)    5 proprio frames, oldest first; each frame is
              [pitch, q_hip/knee/ankle x2 (6), vx, vz, pitch_rate, joint rates (6)]
    [80:104)  4 past actions, oldest first (6 each)
    [104:152) reference lookahead at control ticks t, t+1, t+4, t+7;
              each frame is q_m_ref (6) then qd_m_ref (6)
    [152:154) command (speed, height)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeError, WarmupError

OBS_LAYOUT_VERSION = 1

PROPRIO_DIM = 16
PROPRIO_FRAMES = 5
ACT_DIM = 6
ACT_FRAMES = 4
LOOKAHEAD_FRAMES = 4
LOOKAHEAD_DIM = 12
CMD_DIM = 2
OBS_DIM = (PROPRIO_FRAMES * PROPRIO_DIM + ACT_FRAMES * ACT_DIM
           + LOOKAHEAD_FRAMES * LOOKAHEAD_DIM + CMD_DIM)

LATENT_DIM = 8
HISTORY_LEN = 70
HIST_CHANNELS = PROPRIO_DIM + ACT_DIM  # 22 per step

CONV_LAYERS = [(8, 4, 32), (5, 1, 32), (5, 1, 32)]
CONV_DENSE = 256
MU_HIDDEN = [256]


def build_observation(proprio_frames, actions, lookahead_q, lookahead_qd,
                      command) -> np.ndarray:
    """Assemble one observation; inputs may be zero-padded at episode start.

    proprio_frames: (5, 16) oldest->current; actions: (4, 6) oldest first;
    lookahead_q/qd: (4, 6); command: (2,).
    """
    proprio_frames = np.asarray(proprio_frames, dtype=np.float32)
    actions = np.asarray(actions, dtype=np.float32)
    la = np.concatenate([np.asarray(lookahead_q, dtype=np.float32),
                         np.asarray(lookahead_qd, dtype=np.float32)], axis=1)
    if proprio_frames.shape != (PROPRIO_FRAMES, PROPRIO_DIM):
        raise ShapeError(f"proprio frames must be (5, 16), got {proprio_frames.shape}")
    if actions.shape != (ACT_FRAMES, ACT_DIM):
        raise ShapeError(f"action history must be (4, 6), got {actions.shape}")
    out = np.concatenate([proprio_frames.reshape(-1), actions.reshape(-1),
                          la.reshape(-1),
                          np.asarray(command, dtype=np.float32)])
    assert out.shape == (OBS_DIM,)
    return out


def split_observation(obs: np.ndarray) -> dict:
    """Inverse of build_observation (layout round-trip)."""
    obs = np.asarray(obs)
    if obs.shape[-1] != OBS_DIM:
        raise ShapeError(f"observation dim {obs.shape[-1]} != {OBS_DIM}")
    o1 = PROPRIO_FRAMES * PROPRIO_DIM
    o2 = o1 + ACT_FRAMES * ACT_DIM
    o3 = o2 + LOOKAHEAD_FRAMES * LOOKAHEAD_DIM
    la = obs[o2:o3].reshape(LOOKAHEAD_FRAMES, LOOKAHEAD_DIM)
    return {
        "proprio": obs[:o1].reshape(PROPRIO_FRAMES, PROPRIO_DIM),
        "actions": obs[o1:o2].reshape(ACT_FRAMES, ACT_DIM),
        "lookahead_q": la[:, :6],
        "lookahead_qd": la[:, 6:],
        "command": obs[o3:],
    }


@dataclass
class AgentSet:
    """All trainable pieces for one controller variant."""
    pi: nn.Mlp
    critic: nn.Mlp
    head: nn.GaussianHead
    mu: nn.Mlp | None = None
    phi: nn.Conv1dNet | None = None
    latent_dim: int = LATENT_DIM

    def policy_input_dim(self) -> int:
        return self.pi.spec.input_dim

    def uses_latent(self) -> bool:
        return self.pi.spec.input_dim == OBS_DIM + self.latent_dim

    def named_params(self) -> dict:
        out = {}
        out.update(self.pi.params)
        out.update(self.critic.params)
        out[self.head.log_std.name] = self.head.log_std
        if self.mu is not None:
            out.update(self.mu.params)
        if self.phi is not None:
            out.update(self.phi.params)
        return out


def build_agents(seed: int, hidden: int = 128, e_dim: int = 14,
                 with_latent: bool = True, obs_dim: int = OBS_DIM) -> AgentSet:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA6E27)))
    pi_in = obs_dim + (LATENT_DIM if with_latent else 0)
    pi = nn.Mlp(nn.MlpSpec(pi_in, [hidden, hidden], ACT_DIM), rng, "pi",
                final_gain=0.01)
    critic = nn.Mlp(nn.MlpSpec(obs_dim + e_dim, [hidden, hidden], 1), rng, "critic")
    head = nn.GaussianHead(ACT_DIM, name="log_std", init=-1.0)
    mu = phi = None
    if with_latent:
        mu = nn.Mlp(nn.MlpSpec(e_dim, MU_HIDDEN, LATENT_DIM), rng, "mu")
        phi = nn.Conv1dNet(nn.Conv1dSpec(HIST_CHANNELS, CONV_LAYERS),
                           HISTORY_LEN, CONV_DENSE, LATENT_DIM, rng, "phi")
    return AgentSet(pi=pi, critic=critic, head=head, mu=mu, phi=phi)


def encode(mu: nn.Mlp, e: np.ndarray) -> np.ndarray:
    """True latent z from the privileged environment vector."""
    e = np.asarray(e, dtype=np.float32)
    if e.shape[-1] != mu.spec.input_dim:
        raise ShapeError(f"encoder expects dim {mu.spec.input_dim}, got {e.shape[-1]}")
    with nn.no_grad():
        return mu(e).data


def act(agents: AgentSet, obs: np.ndarray, z: np.ndarray | None,
        mode: str = "sample", rng: np.random.Generator | None = None):
    """Policy action (PD joint targets, rad) and its log-probability.

    mode "mean" is deterministic; "sample" draws from the Gaussian head.
    """
    obs = np.asarray(obs, dtype=np.float32)
    x = obs if z is None else np.concatenate(
        [obs, np.asarray(z, dtype=np.float32)], axis=-1)
    with nn.no_grad():
        mean = agents.pi(x).data
    if mode == "mean":
        action = mean
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        action = agents.head.sample(mean, rng)
    else:
        raise ValueError(f"unknown act mode {mode!r}")
    logp = agents.head.log_prob_np(mean, action)
    return action, logp


class HistoryBuffer:
    """Chronological ring of the last k (proprio, action) pairs."""

    def __init__(self, k: int = HISTORY_LEN):
        self.k = k
        self.buf = np.zeros((k, HIST_CHANNELS), dtype=np.float32)
        self.count = 0

    def push(self, proprio: np.ndarray, action: np.ndarray):
        self.buf = np.roll(self.buf, -1, axis=0)
        self.buf[-1, :PROPRIO_DIM] = proprio
        self.buf[-1, PROPRIO_DIM:] = action
        self.count += 1

    def full(self) -> bool:
        return self.count >= self.k

    def window(self) -> np.ndarray:
        if not self.full():
            raise WarmupError(
                f"history holds {self.count} of {self.k} steps; latent "
                "estimation needs a full window")
        return self.buf

    def clear(self):
        self.buf[:] = 0.0
        self.count = 0


def adapt(phi: nn.Conv1dNet, history) -> np.ndarray:
    """Estimated latent from a full state-action history window."""
    window = history.window() if isinstance(history, HistoryBuffer) else history
    window = np.asarray(window, dtype=np.float32)
    if window.shape[-2:] != (HISTORY_LEN, HIST_CHANNELS):
        raise ShapeError(
            f"history window must end in (70, 22), got {window.shape}")
    with nn.no_grad():
        return phi(window).data


class StaticLatent:
    """Freezes the estimate from the first full window for the episode."""

    def __init__(self, phi: nn.Conv1dNet):
        self.phi = phi
        self.frozen: np.ndarray | None = None

    def query(self, history: HistoryBuffer) -> np.ndarray:
        if self.frozen is None:
            self.frozen = adapt(self.phi, history).copy()
        return self.frozen

    def reset(self):
        self.frozen = None
