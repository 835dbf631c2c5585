"""Parametrized periodic walking reference: cycloidal swing over a
straight stance sweep, mapped to hip/knee/ankle angles by planar two-link
inverse kinematics.

All quantities live in the torso frame with zero reference pitch. Joint
order everywhere is [hipL, kneeL, ankleL, hipR, kneeR, ankleR]; a positive
angle is a counter-clockwise rotation in the sagittal plane and the knee
solution is the bent-backward branch (knee angle <= 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleCommandError

# leg geometry (shared with the simulator model)
THIGH_LEN = 0.5
SHANK_LEN = 0.5
ANKLE_HEIGHT = 0.07  # ankle joint sits this far above the sole
REACH_LIMIT = 0.98   # fraction of total leg length the IK is allowed to use

DUTY_FACTOR = 0.6
SWING_HEIGHT = 0.15
PERIOD_SLOW = 1.0    # period at standstill, seconds
PERIOD_FAST = 0.6    # period at |speed| = 1 m/s

SPEED_RANGE = (-1.0, 1.0)
HEIGHT_RANGE = (0.65, 1.0)


@dataclass
class Command:
    """Walking command: sagittal speed (m/s) and pelvis height (m)."""
    speed: float
    height: float


@dataclass
class GaitParams:
    period: float
    swing_height: float
    duty_factor: float
    command: Command


@dataclass
class ReferenceFrame:
    q_m: np.ndarray        # 6 joint angles (rad)
    qd_m: np.ndarray       # 6 joint velocities (rad/s)
    pelvis_vx: float       # commanded sagittal velocity
    pelvis_z: float        # commanded walking height
    pitch: float = 0.0
    pitch_rate: float = 0.0


def gait_period(speed) -> np.ndarray | float:
    """Cycle period shrinks linearly with command speed."""
    return PERIOD_SLOW + (PERIOD_FAST - PERIOD_SLOW) * np.abs(speed)


def gait_params(command: Command) -> GaitParams:
    return GaitParams(float(gait_period(command.speed)), SWING_HEIGHT,
                      DUTY_FACTOR, command)


def _foot_profile(speed, height, leg_phase):
    """Ankle target relative to the hip and its time derivative.

    Stance sweeps the foot backward at exactly the commanded speed so the
    foot is stationary in the world; swing returns it along a smooth bump.
    Returns (x, z, xdot, zdot) with shapes equal to the broadcast inputs.
    """
    speed = np.asarray(speed, dtype=np.float64)
    height = np.asarray(height, dtype=np.float64)
    leg_phase = np.asarray(leg_phase, dtype=np.float64)

    period = gait_period(speed)
    d = DUTY_FACTOR
    stride = speed * period          # distance per cycle
    sweep = stride * d               # distance covered during stance
    z_ankle = ANKLE_HEIGHT - height  # sole on the ground

    stance = leg_phase < d
    # stance: x from +sweep/2 to -sweep/2, linear in phase
    x_st = sweep * (0.5 - leg_phase / d)
    xd_st = -sweep / (d * period)    # equals -speed
    # swing: sigma in [0,1]; endpoint slope matched to the stance sweep
    sigma = (leg_phase - d) / (1.0 - d)
    two_pi = 2.0 * np.pi
    amp = -(1.0 / d) / two_pi        # f'(0)=f'(1)=-(1-d)/d after scaling
    f = sigma + amp * np.sin(two_pi * sigma)
    fd = 1.0 + amp * two_pi * np.cos(two_pi * sigma)
    x_sw = sweep * (f - 0.5)
    xd_sw = sweep * fd / ((1.0 - d) * period)
    bump = 0.5 * (1.0 - np.cos(two_pi * sigma))
    bumpd = 0.5 * two_pi * np.sin(two_pi * sigma)
    z_sw = z_ankle + SWING_HEIGHT * bump
    zd_sw = SWING_HEIGHT * bumpd / ((1.0 - d) * period)

    x = np.where(stance, x_st, x_sw)
    xd = np.where(stance, xd_st, xd_sw)
    z = np.where(stance, z_ankle, z_sw)
    zd = np.where(stance, 0.0, zd_sw)
    return x, z, xd, zd


def leg_ik(x, z):
    """Hip/knee angles reaching ankle target (x, z) from the hip.

    Bent-backward knee branch (knee <= 0). Raises InfeasibleCommandError
    when the target distance exceeds the reach limit.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    l1, l2 = THIGH_LEN, SHANK_LEN
    d2 = x * x + z * z
    d = np.sqrt(d2)
    if np.any(d > REACH_LIMIT * (l1 + l2)):
        raise InfeasibleCommandError(
            "walking height unreachable for the leg length: ankle target "
            f"distance {float(np.max(d)):.3f} exceeds "
            f"{REACH_LIMIT * (l1 + l2):.3f}")
    gamma = np.arctan2(x, -z)
    cos_beta = (l1 * l1 + d2 - l2 * l2) / (2.0 * l1 * d)
    beta = np.arccos(np.clip(cos_beta, -1.0, 1.0))
    cos_knee = (l1 * l1 + l2 * l2 - d2) / (2.0 * l1 * l2)
    interior = np.arccos(np.clip(cos_knee, -1.0, 1.0))
    hip = gamma + beta
    knee = -(np.pi - interior)
    return hip, knee


def leg_fk(hip, knee):
    """Ankle position from joint angles (inverse of leg_ik)."""
    a1 = hip
    a2 = hip + knee
    x = THIGH_LEN * np.sin(a1) + SHANK_LEN * np.sin(a2)
    z = -THIGH_LEN * np.cos(a1) - SHANK_LEN * np.cos(a2)
    return x, z


def _leg_joint_rates(hip, knee, xd, zd):
    """Joint velocities from the ankle target velocity via the 2x2 leg
    Jacobian (analytic)."""
    a1 = hip
    a2 = hip + knee
    j11 = THIGH_LEN * np.cos(a1) + SHANK_LEN * np.cos(a2)
    j12 = SHANK_LEN * np.cos(a2)
    j21 = THIGH_LEN * np.sin(a1) + SHANK_LEN * np.sin(a2)
    j22 = SHANK_LEN * np.sin(a2)
    det = j11 * j22 - j12 * j21
    hipd = (j22 * xd - j12 * zd) / det
    kneed = (-j21 * xd + j11 * zd) / det
    return hipd, kneed


def reference_batch(speeds, heights, phases):
    """Vectorized reference evaluation.

    Returns (q_m, qd_m) with shapes (..., 6) for broadcast inputs of
    command speed, command height, and gait phase in [0, 1).
    """
    speeds, heights, phases = np.broadcast_arrays(
        np.asarray(speeds, dtype=np.float64),
        np.asarray(heights, dtype=np.float64),
        np.asarray(phases, dtype=np.float64))
    phases = np.mod(phases, 1.0)
    q = np.empty(speeds.shape + (6,), dtype=np.float64)
    qd = np.empty_like(q)
    for leg, offset in ((0, 0.0), (1, 0.5)):
        leg_phase = np.mod(phases + offset, 1.0)
        x, z, xd, zd = _foot_profile(speeds, heights, leg_phase)
        hip, knee = leg_ik(x, z)
        hipd, kneed = _leg_joint_rates(hip, knee, xd, zd)
        base = 3 * leg
        q[..., base + 0] = hip
        q[..., base + 1] = knee
        q[..., base + 2] = -(hip + knee)      # sole kept level
        qd[..., base + 0] = hipd
        qd[..., base + 1] = kneed
        qd[..., base + 2] = -(hipd + kneed)
    return q, qd


def reference(command: Command, phase: float) -> ReferenceFrame:
    """Reference joint state plus pelvis targets at a gait phase."""
    q, qd = reference_batch(command.speed, command.height, phase)
    return ReferenceFrame(q, qd, command.speed, command.height)


def desired_pelvis(command: Command, t: float):
    """Pelvis reference under a constant command held since t=0: position
    integrates the commanded velocity, pitch and pitch rate stay 0."""
    return {
        "x": command.speed * t,
        "z": command.height,
        "vx": command.speed,
        "vz": 0.0,
        "pitch": 0.0,
        "pitch_rate": 0.0,
    }


LOOKAHEAD_TICKS = (0, 1, 4, 7)


def lookahead(command: Command, t: float, control_dt: float = 1.0 / 30.0):
    """Reference frames at the control ticks t, t+1, t+4, t+7."""
    period = float(gait_period(command.speed))
    base_phase = (t / period) % 1.0
    return [reference(command, base_phase + k * control_dt / period)
            for k in LOOKAHEAD_TICKS]


def lookahead_batch(speeds, heights, phases, control_dt: float = 1.0 / 30.0):
    """Batched lookahead: returns q_m, qd_m of shape (N, 4, 6)."""
    speeds = np.asarray(speeds, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    period = gait_period(speeds)
    offs = np.asarray(LOOKAHEAD_TICKS, dtype=np.float64)
    ph = phases[:, None] + offs[None, :] * (control_dt / period[:, None])
    q, qd = reference_batch(speeds[:, None], heights[:, None], ph)
    return q, qd


def export_reference_csv(path, command: Command, samples: int = 200):
    """Phase-sampled reference table for inspection."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase"] + [f"q{i+1}" for i in range(6)]
                   + [f"dq{i+1}" for i in range(6)])
        for i in range(samples):
            phase = i / samples
            ref = reference(command, phase)
            w.writerow([f"{phase:.9g}"] + [f"{v:.9g}" for v in ref.q_m]
                       + [f"{v:.9g}" for v in ref.qd_m])
