import math

import numpy as np
import pytest

from arma import dynamics, env, gait
from arma.gait import Command


class MidpointRng:
    """Stub rng whose every uniform draw lands on the range midpoint."""

    def random(self, size=None):
        return 0.5 if size is None else np.full(size, 0.5)


class TestEnvParams:
    def test_sampled_fields_within_table_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            p = env.sample_env_params(rng)
            assert 0.3 <= p.friction_ratio <= 3.0
            assert np.all((0.7 <= p.link_mass_scale) & (p.link_mass_scale <= 1.3))
            assert np.all((0.7 <= p.mass_center_scale) & (p.mass_center_scale <= 1.3))
            assert 0.3 <= p.joint_damping_scale <= 4.0
            assert 0.95 <= p.contact_spring_scale <= 1.05
            assert 0.0 <= p.terrain_amplitude <= 0.12

    def test_bulk_compliance_hundred_thousand(self):
        rng = np.random.default_rng(1)
        lo = np.array([r[0] for r in (
            env.PARAM_RANGES["friction_ratio"],) ])
        # vectorized equivalent of the sampler's uniform math
        n = 100_000
        for name, (a, b) in env.PARAM_RANGES.items():
            draws = a + rng.random(n) * (b - a)
            assert draws.min() >= a and draws.max() <= b

    def test_midpoint_draw(self):
        p = env.sample_env_params(MidpointRng())
        np.testing.assert_allclose(p.link_mass_scale, 1.0)
        np.testing.assert_allclose(p.joint_damping_scale, 2.15)
        np.testing.assert_allclose(p.friction_ratio, 1.65)

    def test_flatten_is_encoder_input(self):
        p = env.nominal_env_params()
        v = p.flatten()
        assert v.shape == (env.E_DIM,) and env.E_DIM == 14
        assert v[0] == 1.0 and v[13] == 0.0


class TestTerrain:
    def test_flat_anywhere_zero(self):
        t = env.make_flat()
        for x in (-3.0, 0.0, 1.7, 12.0):
            assert env.terrain_height(x, t) == 0.0

    def test_fractal_peak_to_peak_bounded(self):
        rng = np.random.default_rng(3)
        for amp in (0.03, 0.12):
            t = env.make_fractal(amp, rng)
            assert t.profile.max() - t.profile.min() <= amp + 1e-12

    def test_slope_ten_percent(self):
        t = env.make_slope(0.10)
        np.testing.assert_allclose(env.terrain_height(1.0, t), 0.1, atol=1e-12)

    def test_out_of_extent_clamps_and_flags(self):
        t = env.make_flat(extent=5.0)
        assert t.out_of_extent == 0
        env.terrain_height(50.0, t)
        assert t.out_of_extent == 1

    def test_steps_quantized(self):
        t = env.make_steps(0.1, np.random.default_rng(0))
        assert np.mean(np.diff(t.profile) != 0) < 0.15  # piecewise constant
        assert t.profile.max() - t.profile.min() <= 0.1 + 1e-12

    def test_profiles_zero_at_origin(self):
        rng = np.random.default_rng(2)
        for kind in env.TERRAIN_KINDS:
            u = env.unit_profile(kind, rng, 25.0)
            i = int(round(25.0 / env.TERRAIN_SPACING))
            assert abs(u[i]) < 1e-12


class TestControlOps:
    def test_pd_zero_error_zero_velocity(self):
        q = np.array([0.1, -0.5, 0.2, 0.1, -0.5, 0.2])
        u = env.pd_torque(q, q, np.zeros(6))
        np.testing.assert_array_equal(u, np.zeros(6))

    def test_pd_formula(self):
        u = env.pd_torque(np.full(6, 0.1), np.zeros(6), np.zeros(6),
                          kp=np.full(6, 50.0), kd=np.zeros(6))
        np.testing.assert_allclose(u, np.full(6, 5.0), rtol=1e-12)

    def test_pd_clamp(self):
        u = env.pd_torque(np.full(6, 10.0), np.zeros(6), np.zeros(6),
                          kp=np.full(6, 40.0), kd=np.zeros(6), tau_max=150.0)
        np.testing.assert_array_equal(u, np.full(6, 150.0))

    def test_low_pass_beta_zero_passthrough(self):
        a = np.array([1.0, -2.0])
        np.testing.assert_array_equal(env.low_pass(a, np.array([5.0, 5.0]), 0.0), a)

    def test_low_pass_beta_one_holds(self):
        prev = np.array([1.0, -2.0])
        np.testing.assert_array_equal(env.low_pass(np.zeros(2), prev, 1.0), prev)

    def test_low_pass_geometric_series(self):
        y = np.zeros(1)
        for _ in range(3):
            y = env.low_pass(np.ones(1), y, 0.8)
        np.testing.assert_allclose(y, [1 - 0.8 ** 3], rtol=1e-12)
        np.testing.assert_allclose(y, [0.488], rtol=1e-12)


def _airborne_state(z=5.0, joints=None, qd=None):
    q = np.zeros(9)
    q[1] = z
    if joints is not None:
        q[3:9] = joints
    return env.RobotState(q, np.zeros(9) if qd is None else qd,
                          np.zeros((2, 2)), np.zeros(6))


class TestPhysics:
    def test_equilibrium_zero_gravity(self):
        st = _airborne_state(joints=[0.3, -0.6, 0.3, 0.1, -0.2, 0.1])
        nxt = env.physics_step(st, np.zeros(6), env.nominal_env_params(),
                               env.make_flat(), g=0.0)
        np.testing.assert_array_equal(nxt.q, st.q)
        np.testing.assert_array_equal(nxt.qdot, st.qdot)

    def test_free_fall_matches_ballistic_oracle(self):
        # closed form: dz = -0.5 g t^2 over t = 0.1 s
        st = _airborne_state()
        z0 = st.q[1]
        for _ in range(60):
            st = env.physics_step(st, np.zeros(6), env.nominal_env_params(),
                                  env.make_flat())
        oracle = -0.5 * 9.81 * 0.1 ** 2
        assert abs((st.q[1] - z0) - oracle) / abs(oracle) < 0.02

    def test_static_ground_reaction_equals_weight(self):
        cfg = env.RewardConfig()
        e = env.VecBipedEnv(1, seed=3, fixed_command=Command(0.0, 0.9),
                            randomize_params=False, terrain_kinds=("flat",),
                            resample_enabled=False, init_noise=0.0)
        e.phase[0] = 0.05
        qr, _ = gait.reference_batch(np.zeros(1), np.full(1, 0.9), np.full(1, 0.05))
        e.q[0, 3:9] = qr[0]
        e.qd[0] = 0.0
        e.filt[0] = qr[0]
        normals = []
        for t in range(60):
            _, done, info = e.step(qr, cfg)
            e.phase[0] = 0.05
            assert not done[0]
            if t >= 30:
                g = info["grf_mean"][0]
                normals.append(g[1] + g[3])
        weight = dynamics.BASE_MASS.sum() * dynamics.GRAVITY
        assert abs(np.mean(normals) - weight) / weight < 0.05

    def test_grf_normals_nonnegative(self):
        cfg = env.RewardConfig()
        e = env.VecBipedEnv(2, seed=0, episode_steps=200)
        for _ in range(50):
            qr, _ = gait.reference_batch(e.speed, e.height, e.phase)
            _, _, info = e.step(qr, cfg)
            g = info["grf_mean"]
            assert np.all(g[:, [1, 3]] >= 0.0)

    def test_friction_cone_never_violated(self):
        cfg = env.RewardConfig()
        p = env.EnvParams(friction_ratio=0.3)
        e = env.VecBipedEnv(1, seed=5, fixed_params=p,
                            fixed_command=Command(0.8, 0.9),
                            terrain_kinds=("flat",), resample_enabled=False)
        for _ in range(100):
            qr, _ = gait.reference_batch(e.speed, e.height, e.phase)
            _, _, info = e.step(qr, cfg)
            assert info["cone_violation"][0] <= 1e-9

    def test_energy_non_increasing_in_flight(self):
        # no contact, zero torque, zero joint damping
        p = env.EnvParams(joint_damping_scale=0.0)
        t = env.make_flat()
        rng = np.random.default_rng(8)
        qd = np.zeros(9)
        qd[2:] = rng.uniform(-2, 2, 7)
        st = _airborne_state(z=80.0, joints=[0.3, -0.8, 0.2, -0.2, -0.4, 0.1], qd=qd)
        masses, inertias, pt_a, pt_b = dynamics.point_tables(np.ones(7), np.ones(3))
        e0 = dynamics.total_energy(st.q, st.qdot, masses, inertias, pt_a, pt_b)
        for _ in range(600):  # 1 second
            st = env.physics_step(st, np.zeros(6), p, t)
        e1 = dynamics.total_energy(st.q, st.qdot, masses, inertias, pt_a, pt_b)
        assert e1 <= e0 + 0.01 * abs(e0)

    def test_determinism_bitwise(self):
        def run():
            cfg = env.RewardConfig()
            e = env.VecBipedEnv(3, seed=11, episode_steps=100)
            arng = np.random.default_rng(99)
            for _ in range(40):
                a = arng.normal(0, 0.3, (3, 6))
                e.step(a, cfg)
            return e.q.tobytes(), e.qd.tobytes()

        assert run() == run()


class TestControlStep:
    def test_fall_terminates(self):
        b = env.BipedEnv(seed=0, terrain_kinds=("flat",))
        b.vec.q[0, 1] = 0.50
        _, _, _, done, info = b.control_step(np.zeros(6))
        assert done and info["fallen"]

    def test_timeout_flag(self):
        b = env.BipedEnv(seed=0, episode_steps=3, terrain_kinds=("flat",),
                         fixed_command=Command(0.0, 0.9),
                         randomize_params=False)
        for i in range(3):
            _, _, _, done, info = b.control_step(b.vec.filt[0])
        assert done and info["timeout"] and not info["fallen"]

    def test_healthy_step_reward_in_unit_interval(self):
        b = env.BipedEnv(seed=1, terrain_kinds=("flat",),
                         fixed_command=Command(0.0, 0.9), randomize_params=False)
        qr, _ = gait.reference_batch(b.vec.speed, b.vec.height, b.vec.phase)
        _, r, terms, done, _ = b.control_step(qr[0])
        assert not done
        assert 0.0 < r <= 1.0
        assert terms.shape == (7,)


class TestReward:
    def test_perfect_tracking_zero_effort_is_exactly_one(self):
        ref = gait.reference(Command(0.5, 0.9), 0.3)
        r, terms = env.reward(ref.q_m, ref.qd_m, (2.0, 0.9), (0.5, 0.0), 0.0, 0.0,
                              ref, 2.0, np.zeros(6), np.zeros(4),
                              env.RewardConfig())
        assert r == 1.0
        assert np.all(terms > 0)

    def test_terms_match_independent_scalar_script(self):
        # independent implementation: plain python floats and math.exp
        w = [0.3, 0.24, 0.15, 0.13, 0.06, 0.06, 0.06]
        rho = [5.0, 0.1, 5.0, 5.0, 1.0, 5e-7, 1.25e-5]
        rng = np.random.default_rng(42)
        cfg = env.RewardConfig()
        for _ in range(20):
            q_m = rng.uniform(-1, 1, 6)
            qd_m = rng.uniform(-3, 3, 6)
            ref = gait.reference(Command(float(rng.uniform(-1, 1)),
                                         float(rng.uniform(0.65, 1.0))),
                                 float(rng.random()))
            pelvis = rng.uniform(-1, 1, 2)
            pelvis[1] = rng.uniform(0.6, 1.0)
            pvel = rng.uniform(-1, 1, 2)
            pitch = float(rng.uniform(-1, 1))
            pitch_rate = float(rng.uniform(-2, 2))
            ref_x = float(rng.uniform(-1, 1))
            torque = rng.uniform(-150, 150, 6)
            grf = rng.uniform(-100, 300, 4)
            m = float(rng.uniform(0.3, 1.0))
            cfg.imitation_decay_multiplier = m

            errs = [
                sum((ref.q_m[i] - q_m[i]) ** 2 for i in range(6)),
                (ref_x - pelvis[0]) ** 2 + (ref.pelvis_z - pelvis[1]) ** 2,
                (ref.pelvis_vx - pvel[0]) ** 2 + (0.0 - pvel[1]) ** 2,
                1.0 - math.cos(0.0 - pitch),
                (0.0 - pitch_rate) ** 2,
                sum(float(u) ** 2 for u in torque),
                sum(float(f) ** 2 for f in grf),
            ]
            want = [w[i] * (m if i < 5 else 1.0) * math.exp(-rho[i] * errs[i])
                    for i in range(7)]
            r, terms = env.reward(q_m, qd_m, pelvis, pvel, pitch, pitch_rate,
                                  ref, ref_x, torque, grf, cfg)
            for i in range(7):
                assert abs(terms[i] - want[i]) < 1e-9
            assert abs(r - sum(want)) < 1e-9

    def test_spec_scalar_examples(self):
        # motor error 0.2 with rho1=5 -> 0.3*exp(-1)
        cfg = env.RewardConfig()
        errs = np.zeros(7)
        errs[0] = 0.2
        _, terms = env.reward_from_errors(errs, cfg)
        np.testing.assert_allclose(terms[0], 0.3 * math.exp(-1.0), rtol=1e-12)
        assert abs(terms[0] - 0.11036) < 5e-6
        # pitch error pi/2 with rho4=5 -> 0.13*exp(-5)
        errs = np.zeros(7)
        errs[3] = 1.0 - math.cos(math.pi / 2)
        _, terms = env.reward_from_errors(errs, cfg)
        np.testing.assert_allclose(terms[3], 0.13 * math.exp(-5.0), rtol=1e-12)
        assert abs(terms[3] - 8.76e-4) < 5e-6

    def test_reward_bounded_unit_interval(self):
        rng = np.random.default_rng(0)
        cfg = env.RewardConfig()
        for _ in range(200):
            errs = rng.uniform(0, 10, 7)
            cfg.imitation_decay_multiplier = float(rng.uniform(0.3, 1.0))
            r, _ = env.reward_from_errors(errs, cfg)
            assert 0.0 < r <= 1.0


class TestScheduler:
    def test_resamples_exactly_at_eight_seconds(self):
        cfg = env.RewardConfig()
        e = env.VecBipedEnv(1, seed=7, episode_steps=10_000,
                            terrain_kinds=("flat",), init_noise=0.0)
        e.fall_height = -10.0  # keep the episode alive regardless of falls
        cmd_before = (e.speed[0], e.height[0])
        e_before = e.e_vec[0].copy()
        qr, _ = gait.reference_batch(e.speed, e.height, e.phase)
        for step in range(1, 241):
            e.step(np.tile(qr, (1, 1)), cfg)
            if step < 240:
                assert (e.speed[0], e.height[0]) == cmd_before
                np.testing.assert_array_equal(e.e_vec[0], e_before)
        assert (e.speed[0], e.height[0]) != cmd_before
        assert not np.array_equal(e.e_vec[0], e_before)
        assert e.step_idx[0] == 240  # no reset happened

    def test_resampled_command_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            c = env.sample_command(rng)
            assert -1.0 <= c.speed <= 1.0
            assert 0.65 <= c.height <= 1.0


def test_trajectory_csv_schema(tmp_path):
    rows = [np.arange(33, dtype=float)]
    path = tmp_path / "traj.csv"
    env.write_trajectory_csv(path, rows, "abc123", 7)
    lines = path.read_text().splitlines()
    assert lines[0] == "# config=abc123 seed=7"
    header = lines[1].split(",")
    assert header[:4] == ["t", "qx", "qz", "pitch"]
    assert header[-1] == "done"
    assert len(header) == 33
    assert len(lines[2].split(",")) == 33
