"""Episode-level simulator: dynamics randomization, terrain, the seven-term
reward, the command/parameter resampling protocol, and termination.

The vectorized environment steps all instances in lockstep through the
numba kernel; each instance owns an rng stream derived as seed XOR index,
so trajectories are independent of how instances are grouped or scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, gait
from .errors import SimulationDivergedError
from .gait import Command

E_DIM = 14
FALL_HEIGHT = 0.55
NOMINAL_HEIGHT = 0.98
RESAMPLE_SECONDS = 8.0
LOWPASS_BETA = 0.8
TERRAIN_SPACING = 0.05
TERRAIN_KINDS = ("flat", "fractal", "slope", "steps")

PARAM_RANGES = {
    "friction_ratio": (0.3, 3.0),
    "link_mass_scale": (0.7, 1.3),
    "mass_center_scale": (0.7, 1.3),
    "joint_damping_scale": (0.3, 4.0),
    "contact_spring_scale": (0.95, 1.05),
    "terrain_amplitude": (0.0, 0.12),
}

COMMAND_SPEED_RANGE = (-1.0, 1.0)
COMMAND_HEIGHT_RANGE = (0.65, 1.0)


@dataclass
class EnvParams:
    """Privileged physical randomization; flattened it is the e vector."""
    friction_ratio: float = 1.0
    link_mass_scale: np.ndarray = field(default_factory=lambda: np.ones(7))
    mass_center_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    joint_damping_scale: float = 1.0
    contact_spring_scale: float = 1.0
    terrain_amplitude: float = 0.0

    def flatten(self) -> np.ndarray:
        out = np.empty(E_DIM)
        out[0] = self.friction_ratio
        out[1:8] = self.link_mass_scale
        out[8:11] = self.mass_center_scale
        out[11] = self.joint_damping_scale
        out[12] = self.contact_spring_scale
        out[13] = self.terrain_amplitude
        return out


def _uniform(rng, lo, hi, size=None):
    return lo + rng.random(size) * (hi - lo)


def sample_env_params(rng) -> EnvParams:
    r = PARAM_RANGES
    return EnvParams(
        friction_ratio=float(_uniform(rng, *r["friction_ratio"])),
        link_mass_scale=_uniform(rng, *r["link_mass_scale"], size=7),
        mass_center_scale=_uniform(rng, *r["mass_center_scale"], size=3),
        joint_damping_scale=float(_uniform(rng, *r["joint_damping_scale"])),
        contact_spring_scale=float(_uniform(rng, *r["contact_spring_scale"])),
        terrain_amplitude=float(_uniform(rng, *r["terrain_amplitude"])),
    )


def nominal_env_params() -> EnvParams:
    return EnvParams()


def sample_command(rng) -> Command:
    return Command(float(_uniform(rng, *COMMAND_SPEED_RANGE)),
                   float(_uniform(rng, *COMMAND_HEIGHT_RANGE)))


# ---------------------------------------------------------------------------
# Reward
# ---------------------------------------------------------------------------

_W_RAW = (0.3, 0.24, 0.15, 0.13, 0.06, 0.06, 0.06)
_RHO = (5.0, 0.1, 5.0, 5.0, 1.0, 5e-7, 1.25e-5)


def _exact_weights() -> np.ndarray:
    w = np.array(_W_RAW)
    partial = 0.0
    for v in w[:6]:
        partial += float(v)
    w[6] = 1.0 - partial  # exact complement so a perfect step scores 1.0
    return w


@dataclass
class RewardConfig:
    weights: np.ndarray = field(default_factory=_exact_weights)
    rhos: np.ndarray = field(default_factory=lambda: np.array(_RHO))
    imitation_decay_multiplier: float = 1.0

    def __post_init__(self):
        assert abs(float(self.weights.sum()) - 1.0) < 1e-9
        assert 0.0 < self.imitation_decay_multiplier <= 1.0


def reward_from_errors(errs: np.ndarray, cfg: RewardConfig):
    """errs[..., 7] -> (reward, per-term breakdown), float64 throughout.

    Terms 1-5 are imitation terms and carry the decay multiplier."""
    errs = np.asarray(errs, dtype=np.float64)
    m = cfg.imitation_decay_multiplier
    scale = np.array([m, m, m, m, m, 1.0, 1.0])
    terms = (cfg.weights * scale) * np.exp(-cfg.rhos * errs)
    r = terms[..., 0].copy()
    for i in range(1, 7):
        r += terms[..., i]
    return r, terms


def reward(q_m, qd_m, pelvis, pelvis_vel, pitch, pitch_rate,
           ref: gait.ReferenceFrame, ref_pelvis_x, torque, grf,
           cfg: RewardConfig):
    """Single-step reward from raw state and a reference frame.

    `grf` is the stacked per-foot force vector; `torque` the 6 joint
    torques. Matches the vectorized in-env computation exactly."""
    q_m = np.asarray(q_m, dtype=np.float64)
    qd_m = np.asarray(qd_m, dtype=np.float64)
    torque = np.asarray(torque, dtype=np.float64)
    grf = np.asarray(grf, dtype=np.float64)
    errs = np.empty(7)
    errs[0] = float(np.sum((ref.q_m - q_m) ** 2))
    errs[1] = (ref_pelvis_x - pelvis[0]) ** 2 + (ref.pelvis_z - pelvis[1]) ** 2
    errs[2] = (ref.pelvis_vx - pelvis_vel[0]) ** 2 + (0.0 - pelvis_vel[1]) ** 2
    errs[3] = 1.0 - math.cos(ref.pitch - pitch)
    errs[4] = (ref.pitch_rate - pitch_rate) ** 2
    errs[5] = float(np.sum(torque ** 2))
    errs[6] = float(np.sum(grf ** 2))
    return reward_from_errors(errs, cfg)


# ---------------------------------------------------------------------------
# Terrain
# ---------------------------------------------------------------------------

@dataclass
class Terrain:
    kind: str
    amplitude: float
    profile: np.ndarray          # height samples, fixed spacing
    x0: float
    spacing: float = TERRAIN_SPACING
    out_of_extent: int = 0       # clamp warning counter


def terrain_height(x: float, terrain: Terrain) -> float:
    """Linear interpolation of the profile; clamps outside the extent and
    counts the clamp on the terrain object."""
    f = (x - terrain.x0) / terrain.spacing
    n = len(terrain.profile)
    if f < 0.0 or f > n - 1:
        terrain.out_of_extent += 1
        f = min(max(f, 0.0), n - 1.000001)
    i = int(f)
    t = f - i
    if i >= n - 1:
        return float(terrain.profile[-1])
    return float(terrain.profile[i] * (1.0 - t) + terrain.profile[i + 1] * t)


def _grid(extent: float, spacing: float):
    n = int(round(2 * extent / spacing)) + 1
    x = np.arange(n) * spacing - extent
    return x, n


def make_flat(extent: float = 50.0, spacing: float = TERRAIN_SPACING) -> Terrain:
    _, n = _grid(extent, spacing)
    return Terrain("flat", 0.0, np.zeros(n), -extent, spacing)


def make_slope(grade: float, extent: float = 50.0,
               spacing: float = TERRAIN_SPACING) -> Terrain:
    x, _ = _grid(extent, spacing)
    return Terrain("slope", abs(grade), grade * x, -extent, spacing)


def _fractal_unit(rng, extent: float, spacing: float,
                  min_wavelength: float = 0.4) -> np.ndarray:
    """Midpoint displacement down to `min_wavelength`, normalized to unit
    peak-to-peak and zero height at x = 0."""
    x, n = _grid(extent, spacing)
    seg = extent  # start with one segment per half-extent
    xs = np.array([-extent, 0.0, extent])
    ys = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)])
    scale = 0.5
    while seg / 2 >= min_wavelength:
        seg /= 2
        mid_x = (xs[:-1] + xs[1:]) / 2
        mid_y = (ys[:-1] + ys[1:]) / 2 + rng.uniform(-1, 1, len(mid_x)) * scale
        xs_new = np.empty(len(xs) + len(mid_x))
        ys_new = np.empty_like(xs_new)
        xs_new[0::2] = xs
        xs_new[1::2] = mid_x
        ys_new[0::2] = ys
        ys_new[1::2] = mid_y
        xs, ys = xs_new, ys_new
        scale *= 0.55
    prof = np.interp(x, xs, ys)
    ptp = prof.max() - prof.min()
    if ptp > 0:
        prof /= ptp
    origin = np.searchsorted(x, 0.0)
    return prof - prof[origin]


def _steps_unit(rng, extent: float, spacing: float,
                step_width: float = 0.5) -> np.ndarray:
    x, n = _grid(extent, spacing)
    blocks = int(math.ceil(2 * extent / step_width)) + 1
    heights = rng.uniform(-0.5, 0.5, blocks)
    idx = np.minimum(((x + extent) / step_width).astype(int), blocks - 1)
    prof = heights[idx]
    origin = np.searchsorted(x, 0.0)
    return prof - prof[origin]


def make_fractal(amplitude: float, rng, extent: float = 50.0,
                 spacing: float = TERRAIN_SPACING) -> Terrain:
    return Terrain("fractal", amplitude,
                   _fractal_unit(rng, extent, spacing) * amplitude,
                   -extent, spacing)


def make_steps(amplitude: float, rng, extent: float = 50.0,
               spacing: float = TERRAIN_SPACING) -> Terrain:
    return Terrain("steps", amplitude,
                   _steps_unit(rng, extent, spacing) * amplitude,
                   -extent, spacing)


# slope grade at the maximum Table-I amplitude
MAX_SLOPE_GRADE = 0.10


def unit_profile(kind: str, rng, extent: float,
                 spacing: float = TERRAIN_SPACING) -> np.ndarray:
    """Amplitude-independent profile shape; height = amplitude * unit."""
    x, n = _grid(extent, spacing)
    if kind == "flat":
        return np.zeros(n)
    if kind == "slope":
        grade_per_amp = MAX_SLOPE_GRADE / PARAM_RANGES["terrain_amplitude"][1]
        direction = 1.0 if rng.random() < 0.5 else -1.0
        return direction * grade_per_amp * x
    if kind == "fractal":
        return _fractal_unit(rng, extent, spacing)
    if kind == "steps":
        return _steps_unit(rng, extent, spacing)
    raise ValueError(f"unknown terrain kind {kind!r}")


# ---------------------------------------------------------------------------
# Low-level control ops
# ---------------------------------------------------------------------------

def low_pass(raw: np.ndarray, previous: np.ndarray, beta: float = LOWPASS_BETA):
    """First-order filter y_t = beta*y_{t-1} + (1-beta)*a_t."""
    raw = np.asarray(raw, dtype=np.float64)
    previous = np.asarray(previous, dtype=np.float64)
    if raw.shape != previous.shape:
        raise ValueError("filter state and action shapes differ")
    return beta * previous + (1.0 - beta) * raw


def pd_torque(target: np.ndarray, q_m: np.ndarray, qd_m: np.ndarray,
              kp: np.ndarray | None = None, kd: np.ndarray | None = None,
              tau_max: float | None = None) -> np.ndarray:
    """Joint torques from PD on position targets, clamped to the actuator
    limit (same law the substep kernel applies)."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape[-1] != 6:
        raise ValueError("expected 6 joint targets")
    kp = dynamics.KP if kp is None else np.asarray(kp, dtype=np.float64)
    kd = dynamics.KD if kd is None else np.asarray(kd, dtype=np.float64)
    lim = dynamics.TAU_MAX if tau_max is None else tau_max
    u = kp * (target - q_m) - kd * qd_m
    return np.clip(u, -lim, lim)


@dataclass
class RobotState:
    q: np.ndarray
    qdot: np.ndarray
    grf: np.ndarray            # (2, 2) per-foot (Fx, Fz)
    motor_torque: np.ndarray   # (6,)
    time: float = 0.0
    phase: float = 0.0


def physics_step(state: RobotState, torque: np.ndarray, params: EnvParams,
                 terrain: Terrain, dt: float = dynamics.SUB_DT,
                 g: float = dynamics.GRAVITY) -> RobotState:
    """One raw dynamics substep driven by explicit joint torques."""
    q = state.q[None, :].astype(np.float64).copy()
    qd = state.qdot[None, :].astype(np.float64).copy()
    masses, inertias, pt_a, pt_b = dynamics.point_tables(
        params.link_mass_scale, params.mass_center_scale)
    out_grf = np.zeros((1, 4))
    out_u = np.zeros((1, 6))
    out_usq = np.zeros(1)
    out_fsq = np.zeros(1)
    out_cone = np.zeros(1)
    out_clamped = np.zeros(1)
    diverged = np.zeros(1, dtype=np.bool_)
    dynamics.step_batch(
        q, qd, np.zeros((1, 6)), np.asarray(torque, dtype=np.float64)[None, :], 0,
        masses[None], inertias[None], pt_a[None], pt_b[None],
        (dynamics.BASE_JOINT_DAMPING * params.joint_damping_scale) * np.ones((1, 6)),
        np.array([dynamics.CONTACT_KC * params.contact_spring_scale]),
        np.array([dynamics.CONTACT_CC]),
        np.array([params.friction_ratio]),
        terrain.profile[None, :], terrain.x0, 1.0 / terrain.spacing,
        g, dt, 1, np.ones(1, dtype=np.bool_),
        out_grf, out_u, out_usq, out_fsq, out_cone, diverged, out_clamped)
    if diverged[0]:
        raise SimulationDivergedError("physics state became non-finite")
    return RobotState(q[0], qd[0], out_grf[0].reshape(2, 2), out_u[0],
                      state.time + dt, state.phase)


# ---------------------------------------------------------------------------
# Vectorized environment
# ---------------------------------------------------------------------------

class VecBipedEnv:
    """N simulator instances stepped in lockstep at 30 Hz.

    Instances auto-reset on termination. Resampling of command and
    randomization parameters happens exactly at 8 s boundaries unless
    disabled. Construction options pin parameters/commands/terrain for the
    evaluation protocols.
    """

    def __init__(self, n: int, seed: int, episode_steps: int = 2500,
                 resample_enabled: bool = True,
                 randomize_params: bool = True,
                 fixed_params: EnvParams | None = None,
                 fixed_command: Command | None = None,
                 terrain_kinds: tuple = TERRAIN_KINDS,
                 lowpass_beta: float = LOWPASS_BETA,
                 fall_height: float = FALL_HEIGHT,
                 init_noise: float = 0.01,
                 g: float = dynamics.GRAVITY):
        self.n = n
        self.episode_steps = episode_steps
        self.resample_steps = int(round(RESAMPLE_SECONDS / dynamics.CONTROL_DT))
        self.resample_enabled = resample_enabled
        self.randomize_params = randomize_params
        self.fixed_params = fixed_params
        self.fixed_command = fixed_command
        self.terrain_kinds = terrain_kinds
        self.beta = lowpass_beta
        self.fall_height = fall_height
        self.init_noise = init_noise
        self.g = g
        self.rngs = [np.random.default_rng(np.random.SeedSequence(seed ^ i))
                     for i in range(n)]

        extent = max(25.0, episode_steps * dynamics.CONTROL_DT * 1.1 + 10.0)
        self.extent = extent
        _, self._prof_len = _grid(extent, TERRAIN_SPACING)

        self.q = np.zeros((n, dynamics.N_Q))
        self.qd = np.zeros((n, dynamics.N_Q))
        self.filt = np.zeros((n, 6))
        self.phase = np.zeros(n)
        self.ref_x = np.zeros(n)
        self.step_idx = np.zeros(n, dtype=np.int64)
        self.speed = np.zeros(n)
        self.height = np.full(n, NOMINAL_HEIGHT)
        self.masses = np.zeros((n, 7))
        self.inertias = np.zeros((n, 7))
        self.pt_a = np.zeros((n, dynamics.N_POINTS, 3))
        self.pt_b = np.zeros((n, dynamics.N_POINTS, 3))
        self.damping = np.zeros((n, 6))
        self.kc = np.zeros(n)
        self.cc = np.full(n, dynamics.CONTACT_CC)
        self.mu = np.zeros(n)
        self.e_vec = np.zeros((n, E_DIM))
        self.unit_prof = np.zeros((n, self._prof_len))
        self.profiles = np.zeros((n, self._prof_len))
        self.amplitude = np.zeros(n)

        self._grf = np.zeros((n, 4))
        self._u = np.zeros((n, 6))
        self._usq = np.zeros(n)
        self._fsq = np.zeros(n)
        self._cone = np.zeros(n)
        self._clamped = np.zeros(n)
        self._diverged = np.zeros(n, dtype=np.bool_)
        self._active = np.ones(n, dtype=np.bool_)

        for i in range(n):
            self.reset_env(i)

    # -- sampling ----------------------------------------------------------

    def _draw_params(self, i: int) -> EnvParams:
        if self.fixed_params is not None:
            return self.fixed_params
        if self.randomize_params:
            return sample_env_params(self.rngs[i])
        return nominal_env_params()

    def _draw_command(self, i: int) -> Command:
        if self.fixed_command is not None:
            if isinstance(self.fixed_command, (list, tuple)):
                return self.fixed_command[i]
            return self.fixed_command
        return sample_command(self.rngs[i])

    def apply_params(self, i: int, params: EnvParams):
        m, inr, a, b = dynamics.point_tables(params.link_mass_scale,
                                             params.mass_center_scale)
        self.masses[i] = m
        self.inertias[i] = inr
        self.pt_a[i] = a
        self.pt_b[i] = b
        self.damping[i] = dynamics.BASE_JOINT_DAMPING * params.joint_damping_scale
        self.kc[i] = dynamics.CONTACT_KC * params.contact_spring_scale
        self.mu[i] = params.friction_ratio
        self.amplitude[i] = params.terrain_amplitude
        self.profiles[i] = self.unit_prof[i] * params.terrain_amplitude
        self.e_vec[i] = params.flatten()

    def set_command(self, i: int, cmd: Command):
        self.speed[i] = cmd.speed
        self.height[i] = cmd.height

    def reset_env(self, i: int):
        rng = self.rngs[i]
        params = self._draw_params(i)
        cmd = self._draw_command(i)
        kind = self.terrain_kinds[int(rng.integers(len(self.terrain_kinds)))] \
            if len(self.terrain_kinds) > 1 else self.terrain_kinds[0]
        self.unit_prof[i] = unit_profile(kind, rng, self.extent)
        self.apply_params(i, params)
        self.set_command(i, cmd)

        phase = float(rng.random())
        q_ref, qd_ref = gait.reference_batch(cmd.speed, cmd.height, phase)
        noise = self.init_noise
        self.q[i, 0] = 0.0
        self.q[i, 1] = cmd.height
        self.q[i, 2] = rng.normal(0.0, noise * 0.5)
        self.q[i, 3:9] = q_ref + rng.normal(0.0, noise, 6)
        self.qd[i, 0] = cmd.speed
        self.qd[i, 1] = 0.0
        self.qd[i, 2] = rng.normal(0.0, noise)
        self.qd[i, 3:9] = qd_ref + rng.normal(0.0, noise * 5.0, 6)
        self.filt[i] = self.q[i, 3:9]  # filter holds the initial pose
        self.phase[i] = phase
        self.ref_x[i] = 0.0
        self.step_idx[i] = 0
        self._diverged[i] = False

    # -- observation pieces --------------------------------------------------

    def proprio(self) -> np.ndarray:
        """Per-step observable frame: [pitch, joints(6), all velocities(9)]."""
        out = np.empty((self.n, 16), dtype=np.float32)
        out[:, 0] = self.q[:, 2]
        out[:, 1:7] = self.q[:, 3:9]
        out[:, 7:16] = self.qd
        return out

    def lookahead_obs(self):
        q, qd = gait.lookahead_batch(self.speed, self.height, self.phase)
        return q.astype(np.float32), qd.astype(np.float32)

    def command_obs(self) -> np.ndarray:
        return np.stack([self.speed, self.height], axis=1).astype(np.float32)

    def true_e(self) -> np.ndarray:
        return self.e_vec.astype(np.float32)

    # -- stepping -------------------------------------------------------------

    def begin_step(self, actions: np.ndarray) -> np.ndarray:
        """Low-pass the raw actions and return the clamped PD targets."""
        actions = np.asarray(actions, dtype=np.float64)
        self.filt = self.beta * self.filt + (1.0 - self.beta) * actions
        return np.clip(self.filt, dynamics.JOINT_LO, dynamics.JOINT_HI)

    def run_kernel(self, targets: np.ndarray, sl: slice | None = None):
        """Advance the physics for an env slice (default: all)."""
        sl = sl if sl is not None else slice(0, self.n)
        dynamics.step_batch(
            self.q[sl], self.qd[sl], targets[sl],
            np.zeros((sl.stop - sl.start, 6)), 1,
            self.masses[sl], self.inertias[sl], self.pt_a[sl], self.pt_b[sl],
            self.damping[sl], self.kc[sl], self.cc[sl], self.mu[sl],
            self.profiles[sl], -self.extent, 1.0 / TERRAIN_SPACING,
            self.g, dynamics.SUB_DT, dynamics.DECIMATION, self._active[sl],
            self._grf[sl], self._u[sl], self._usq[sl], self._fsq[sl],
            self._cone[sl], self._diverged[sl], self._clamped[sl])

    def step(self, actions: np.ndarray, reward_cfg: RewardConfig):
        targets = self.begin_step(actions)
        self.run_kernel(targets)
        return self.finish_step(reward_cfg)

    def finish_step(self, reward_cfg: RewardConfig):
        """Reward, termination, resample protocol, and auto-reset after the
        physics kernel has advanced the state."""
        period = gait.gait_period(self.speed)
        self.phase = np.mod(self.phase + dynamics.CONTROL_DT / period, 1.0)
        self.ref_x += self.speed * dynamics.CONTROL_DT
        self.step_idx += 1

        ref_q, ref_qd = gait.reference_batch(self.speed, self.height, self.phase)
        errs = np.empty((self.n, 7))
        errs[:, 0] = np.sum((ref_q - self.q[:, 3:9]) ** 2, axis=1)
        errs[:, 1] = (self.ref_x - self.q[:, 0]) ** 2 + (self.height - self.q[:, 1]) ** 2
        errs[:, 2] = (self.speed - self.qd[:, 0]) ** 2 + self.qd[:, 1] ** 2
        errs[:, 3] = 1.0 - np.cos(self.q[:, 2])
        errs[:, 4] = self.qd[:, 2] ** 2
        errs[:, 5] = self._usq
        errs[:, 6] = self._fsq
        r, terms = reward_from_errors(errs, reward_cfg)

        fallen = self.q[:, 1] < self.fall_height
        timeout = self.step_idx >= self.episode_steps
        diverged = self._diverged.copy()
        done = fallen | timeout | diverged

        info = {
            "fallen": fallen, "timeout": timeout, "diverged": diverged,
            "terms": terms, "u_mean": self._u.copy(),
            "grf_mean": self._grf.copy(), "episode_step": self.step_idx.copy(),
            "cone_violation": self._cone.copy(),
        }

        for i in range(self.n):
            if done[i]:
                self.reset_env(i)
            elif self.resample_enabled and self.step_idx[i] % self.resample_steps == 0:
                self.set_command(i, self._draw_command(i))
                self.apply_params(i, self._draw_params(i))
        return r, done, info

    def state(self, i: int = 0) -> RobotState:
        return RobotState(self.q[i].copy(), self.qd[i].copy(),
                          self._grf[i].reshape(2, 2).copy(), self._u[i].copy(),
                          float(self.step_idx[i]) * dynamics.CONTROL_DT,
                          float(self.phase[i]))


class BipedEnv:
    """Single-instance convenience wrapper over VecBipedEnv."""

    def __init__(self, seed: int = 0, **kwargs):
        self.vec = VecBipedEnv(1, seed, **kwargs)

    def reset(self):
        self.vec.reset_env(0)
        return self.vec.state(0)

    def control_step(self, action, reward_cfg: RewardConfig | None = None):
        cfg = reward_cfg if reward_cfg is not None else RewardConfig()
        r, done, info = self.vec.step(np.asarray(action)[None, :], cfg)
        return (self.vec.state(0), float(r[0]), info["terms"][0],
                bool(done[0]), {k: v[0] for k, v in info.items()})


TRAJECTORY_HEADER = (
    ["t", "qx", "qz", "pitch"] + [f"j{i}" for i in range(1, 7)]
    + [f"dj{i}" for i in range(1, 7)] + [f"u{i}" for i in range(1, 7)]
    + ["grf_L", "grf_R", "r"] + [f"term{i}" for i in range(1, 8)] + ["done"]
)


def write_trajectory_csv(path, rows, config_hash: str, seed: int):
    """Trajectory dump, one row per control step, 9 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config={config_hash} seed={seed}\n")
        fh.write(",".join(TRAJECTORY_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
