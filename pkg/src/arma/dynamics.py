"""Planar 7-link biped rigid-body dynamics.

Links: torso, left/right thigh, shank, foot. Generalized coordinates
q = [pelvis_x, pelvis_z, pitch, hipL, kneeL, ankleL, hipR, kneeR, ankleR].

Every body point (link CoM or foot contact point) is written as
    p = pelvis + sum_seg a*d(alpha) + b*dperp(alpha),
with d(a) = (sin a, -cos a) and the absolute link angles alpha linear in q.
That makes mass matrix, Coriolis bias, and point Jacobians closed-form; the
batched stepper below assembles them per substep and integrates with
velocity-first (semi-implicit) Euler.

Contact is a spring-damper normal force plus Coulomb friction solved as a
per-point impulse clamped to the cone, evaluated sequentially so stacked
contacts stay stable at the 600 Hz substep rate.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import gait

N_Q = 9
N_LINKS = 7
N_JOINTS = 6
N_POINTS = 11  # 7 CoM + heelL, toeL, heelR, toeR
CONTACT_START = 7

GRAVITY = 9.81
SUB_DT = 1.0 / 600.0
DECIMATION = 20
CONTROL_DT = SUB_DT * DECIMATION

# base (unscaled) link properties; legs ordered thigh, shank, foot
BASE_MASS = np.array([14.0, 2.0, 1.2, 0.6, 2.0, 1.2, 0.6])
BASE_INERTIA = np.array([0.30, 0.042, 0.025, 0.010, 0.042, 0.025, 0.010])
TORSO_COM = 0.25   # above the pelvis
THIGH_COM = 0.22   # from the hip
SHANK_COM = 0.22   # from the knee
FOOT_COM = (0.04, -0.05)   # in the foot frame, from the ankle
HEEL = (-0.09, -gait.ANKLE_HEIGHT)
TOE = (0.16, -gait.ANKLE_HEIGHT)

KP = np.array([500.0, 500.0, 200.0, 500.0, 500.0, 200.0])
KD = np.array([12.0, 12.0, 8.0, 12.0, 12.0, 8.0])
TAU_MAX = 150.0
JOINT_LO = np.array([-1.4, -2.5, -1.2, -1.4, -2.5, -1.2])
JOINT_HI = np.array([1.4, 0.0, 1.2, 1.4, 0.0, 1.2])
JOINT_LIMIT_K = 200.0
BASE_JOINT_DAMPING = 0.8

CONTACT_KC = 3.0e4   # N/m per contact point
CONTACT_CC = 300.0   # N s/m
CONTACT_F_CAP = 4000.0
MU_BASE = 1.0

# absolute angle composition: angle i depends on these q indices
ANG_DOFS = np.array([
    [2, -1, -1, -1],
    [2, 3, -1, -1],
    [2, 3, 4, -1],
    [2, 3, 4, 5],
    [2, 6, -1, -1],
    [2, 6, 7, -1],
    [2, 6, 7, 8],
], dtype=np.int64)
ANG_NDOF = np.array([1, 2, 3, 4, 2, 3, 4], dtype=np.int64)

# points as chains of (angle index, a, b); padded to 3 segments
PT_NSEG = np.array([1, 1, 2, 3, 1, 2, 3, 3, 3, 3, 3], dtype=np.int64)
PT_ANG = np.array([
    [0, -1, -1],
    [1, -1, -1],
    [1, 2, -1],
    [1, 2, 3],
    [4, -1, -1],
    [4, 5, -1],
    [4, 5, 6],
    [1, 2, 3],   # heel L
    [1, 2, 3],   # toe L
    [4, 5, 6],   # heel R
    [4, 5, 6],   # toe R
], dtype=np.int64)


def point_tables(mass_scale: np.ndarray, center_scale: np.ndarray):
    """Per-env (a, b) coefficient tables; center_scale = [torso, thigh, shank]."""
    a = np.zeros((N_POINTS, 3))
    b = np.zeros((N_POINTS, 3))
    l1, l2 = gait.THIGH_LEN, gait.SHANK_LEN
    a[0, 0] = -TORSO_COM * center_scale[0]
    a[1, 0] = THIGH_COM * center_scale[1]
    a[2, :2] = (l1, SHANK_COM * center_scale[2])
    a[3, :3] = (l1, l2, -FOOT_COM[1])
    b[3, 2] = FOOT_COM[0]
    a[4, 0] = THIGH_COM * center_scale[1]
    a[5, :2] = (l1, SHANK_COM * center_scale[2])
    a[6, :3] = (l1, l2, -FOOT_COM[1])
    b[6, 2] = FOOT_COM[0]
    for i, local in ((7, HEEL), (8, TOE), (9, HEEL), (10, TOE)):
        a[i, :3] = (l1, l2, -local[1])
        b[i, 2] = local[0]
    masses = BASE_MASS * mass_scale
    inertias = BASE_INERTIA * mass_scale
    return masses, inertias, a, b


@njit(cache=True)
def _chol(m, lo):
    n = m.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = m[i, j]
            for k in range(j):
                s -= lo[i, k] * lo[j, k]
            if i == j:
                lo[i, j] = np.sqrt(s) if s > 1e-12 else 1e-6
            else:
                lo[i, j] = s / lo[j, j]


@njit(cache=True)
def _chol_solve(lo, b, out):
    n = lo.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= lo[i, k] * out[k]
        out[i] = s / lo[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= lo[k, i] * out[k]
        out[i] = s / lo[i, i]


@njit(cache=True)
def _ground(profile, x0, inv_dx, x):
    f = (x - x0) * inv_dx
    n = profile.shape[0]
    clamped = 0
    if f < 0.0:
        f = 0.0
        clamped = 1
    elif f > n - 1.000001:
        f = n - 1.000001
        clamped = 1
    i = int(f)
    t = f - i
    return profile[i] * (1.0 - t) + profile[i + 1] * t, clamped


@njit(cache=True)
def _step_batch(q, qd, targets, ext_tau, use_pd,
                masses, inertias, pt_a, pt_b, damping, kc, cc, mu,
                profiles, x0, inv_dx, kp, kd, tau_max, jlo, jhi, jlim_k,
                g, dt, n_sub, active,
                out_grf, out_u, out_usq, out_fsq, out_cone, diverged,
                out_clamped):
    n_env = q.shape[0]
    jac = np.empty((N_POINTS, 2, N_Q))
    bias = np.empty((N_POINTS, 2))
    pos = np.empty((N_POINTS, 2))
    mm = np.empty((N_Q, N_Q))
    lo = np.empty((N_Q, N_Q))
    force = np.empty(N_Q)
    acur = np.empty(N_Q)
    ywork = np.empty(N_Q)
    alpha = np.empty(N_LINKS)
    adot = np.empty(N_LINKS)
    sa = np.empty(N_LINKS)
    ca = np.empty(N_LINKS)
    u_sub = np.empty(N_JOINTS)

    for n in range(n_env):
        if not active[n]:
            continue
        for i in range(4):
            out_grf[n, i] = 0.0
        for j in range(N_JOINTS):
            out_u[n, j] = 0.0
        out_usq[n] = 0.0
        out_fsq[n] = 0.0
        out_cone[n] = -1.0e18

        for sub in range(n_sub):
            # absolute link angles and rates
            for i in range(N_LINKS):
                s = 0.0
                sd = 0.0
                for kk in range(ANG_NDOF[i]):
                    dof = ANG_DOFS[i, kk]
                    s += q[n, dof]
                    sd += qd[n, dof]
                alpha[i] = s
                adot[i] = sd
                sa[i] = np.sin(s)
                ca[i] = np.cos(s)

            # point kinematics
            for p in range(N_POINTS):
                for r in range(2):
                    for c in range(N_Q):
                        jac[p, r, c] = 0.0
                jac[p, 0, 0] = 1.0
                jac[p, 1, 1] = 1.0
                px = q[n, 0]
                pz = q[n, 1]
                bx = 0.0
                bz = 0.0
                for seg in range(PT_NSEG[p]):
                    ai = PT_ANG[p, seg]
                    a = pt_a[n, p, seg]
                    b = pt_b[n, p, seg]
                    px += a * sa[ai] + b * ca[ai]
                    pz += -a * ca[ai] + b * sa[ai]
                    dvx = a * ca[ai] - b * sa[ai]
                    dvz = a * sa[ai] + b * ca[ai]
                    for kk in range(ANG_NDOF[ai]):
                        dof = ANG_DOFS[ai, kk]
                        jac[p, 0, dof] += dvx
                        jac[p, 1, dof] += dvz
                    w2 = adot[ai] * adot[ai]
                    bx += (-a * sa[ai] - b * ca[ai]) * w2
                    bz += (a * ca[ai] - b * sa[ai]) * w2
                pos[p, 0] = px
                pos[p, 1] = pz
                bias[p, 0] = bx
                bias[p, 1] = bz

            # mass matrix and applied generalized forces
            for r in range(N_Q):
                force[r] = 0.0
                for c in range(N_Q):
                    mm[r, c] = 0.0
            for i in range(N_LINKS):
                m_i = masses[n, i]
                for r in range(N_Q):
                    jx = jac[i, 0, r]
                    jz = jac[i, 1, r]
                    if jx == 0.0 and jz == 0.0:
                        continue
                    for c in range(r, N_Q):
                        mm[r, c] += m_i * (jx * jac[i, 0, c] + jz * jac[i, 1, c])
                    # gravity and Coriolis bias enter through the same Jacobian
                    force[r] -= m_i * (g * jz + jx * bias[i, 0] + jz * bias[i, 1])
                inr = inertias[n, i]
                for rr in range(ANG_NDOF[i]):
                    dof_r = ANG_DOFS[i, rr]
                    for cc2 in range(ANG_NDOF[i]):
                        dof_c = ANG_DOFS[i, cc2]
                        if dof_c >= dof_r:
                            mm[dof_r, dof_c] += inr
            for r in range(N_Q):
                mm[r, r] += 1e-9
                for c in range(r):
                    mm[r, c] = mm[c, r]

            # actuation, joint damping, soft joint limits
            for j in range(N_JOINTS):
                dof = 3 + j
                if use_pd == 1:
                    u = kp[j] * (targets[n, j] - q[n, dof]) - kd[j] * qd[n, dof]
                else:
                    u = ext_tau[n, j]
                if u > tau_max:
                    u = tau_max
                elif u < -tau_max:
                    u = -tau_max
                u_sub[j] = u
                tau = u - damping[n, j] * qd[n, dof]
                if q[n, dof] > jhi[j]:
                    tau += jlim_k * (jhi[j] - q[n, dof])
                elif q[n, dof] < jlo[j]:
                    tau += jlim_k * (jlo[j] - q[n, dof])
                force[dof] += tau
                out_u[n, j] += u
                out_usq[n] += u * u

            _chol(mm, lo)

            # contacts, solved sequentially heelL, toeL, heelR, toeR
            fsq = 0.0
            for p in range(CONTACT_START, N_POINTS):
                gz, was_clamped = _ground(profiles[n], x0, inv_dx, pos[p, 0])
                if was_clamped == 1:
                    out_clamped[n] += 1.0
                pen = gz - pos[p, 1]
                if pen <= 0.0:
                    continue
                vx = 0.0
                vz = 0.0
                for c in range(N_Q):
                    vx += jac[p, 0, c] * qd[n, c]
                    vz += jac[p, 1, c] * qd[n, c]
                fn = kc[n] * pen - cc[n] * vz
                if fn < 0.0:
                    fn = 0.0
                elif fn > CONTACT_F_CAP:
                    fn = CONTACT_F_CAP
                # tangential impulse that would cancel the slip, cone-clamped
                _chol_solve(lo, jac[p, 0], ywork)
                denom = 0.0
                for c in range(N_Q):
                    denom += jac[p, 0, c] * ywork[c]
                ft = 0.0
                if denom > 1e-12:
                    _chol_solve(lo, force, acur)
                    ax = bias[p, 0]
                    for c in range(N_Q):
                        ax += jac[p, 0, c] * acur[c]
                    vx_free = vx + dt * ax
                    ft = -vx_free / (dt * denom)
                    lim = mu[n] * MU_BASE * fn
                    if ft > lim:
                        ft = lim
                    elif ft < -lim:
                        ft = -lim
                    viol = np.abs(ft) - lim
                    if viol > out_cone[n]:
                        out_cone[n] = viol
                for c in range(N_Q):
                    force[c] += jac[p, 0, c] * ft + jac[p, 1, c] * fn
                foot = (p - CONTACT_START) // 2
                out_grf[n, 2 * foot] += ft
                out_grf[n, 2 * foot + 1] += fn
                fsq += ft * ft + fn * fn
            out_fsq[n] += fsq

            # velocity-first Euler
            _chol_solve(lo, force, acur)
            ok = True
            for c in range(N_Q):
                qd[n, c] += dt * acur[c]
                q[n, c] += dt * qd[n, c]
                if not np.isfinite(q[n, c]) or not np.isfinite(qd[n, c]):
                    ok = False
            if not ok:
                diverged[n] = True
                break

        inv = 1.0 / n_sub
        for i in range(4):
            out_grf[n, i] *= inv
        for j in range(N_JOINTS):
            out_u[n, j] *= inv
        out_usq[n] *= inv
        out_fsq[n] *= inv


def step_batch(q, qd, targets, ext_tau, use_pd,
               masses, inertias, pt_a, pt_b, damping, kc, cc, mu,
               profiles, x0, inv_dx, g, dt, n_sub, active,
               out_grf, out_u, out_usq, out_fsq, out_cone, diverged,
               out_clamped):
    """Batched control/sub step; PD gains and limits are runtime values so
    they stay tunable (numba freezes globals at compile time)."""
    _step_batch(q, qd, targets, ext_tau, use_pd,
                masses, inertias, pt_a, pt_b, damping, kc, cc, mu,
                profiles, x0, inv_dx, KP, KD, TAU_MAX, JOINT_LO, JOINT_HI,
                JOINT_LIMIT_K, g, dt, n_sub, active,
                out_grf, out_u, out_usq, out_fsq, out_cone, diverged,
                out_clamped)


def link_kinematics(q: np.ndarray, qd: np.ndarray, masses, inertias, pt_a, pt_b):
    """Positions and velocities of all body points for one env (numpy mirror
    of the kernel kinematics; used by the energy diagnostics and tests)."""
    alpha = np.zeros(N_LINKS)
    adot = np.zeros(N_LINKS)
    for i in range(N_LINKS):
        dofs = ANG_DOFS[i, :ANG_NDOF[i]]
        alpha[i] = q[dofs].sum()
        adot[i] = qd[dofs].sum()
    sa, ca = np.sin(alpha), np.cos(alpha)
    pos = np.zeros((N_POINTS, 2))
    vel = np.zeros((N_POINTS, 2))
    for p in range(N_POINTS):
        px, pz = q[0], q[1]
        vx, vz = qd[0], qd[1]
        for seg in range(PT_NSEG[p]):
            ai = PT_ANG[p, seg]
            a, b = pt_a[p, seg], pt_b[p, seg]
            px += a * sa[ai] + b * ca[ai]
            pz += -a * ca[ai] + b * sa[ai]
            vx += (a * ca[ai] - b * sa[ai]) * adot[ai]
            vz += (a * sa[ai] + b * ca[ai]) * adot[ai]
        pos[p] = (px, pz)
        vel[p] = (vx, vz)
    return pos, vel, alpha, adot


def total_energy(q, qd, masses, inertias, pt_a, pt_b, g=GRAVITY) -> float:
    pos, vel, _, adot = link_kinematics(q, qd, masses, inertias, pt_a, pt_b)
    ke = 0.0
    pe = 0.0
    for i in range(N_LINKS):
        ke += 0.5 * masses[i] * (vel[i] @ vel[i]) + 0.5 * inertias[i] * adot[i] ** 2
        pe += masses[i] * g * pos[i, 1]
    return ke + pe
