import numpy as np
import pytest

from arma import agents, evaluation, train
from arma.config import parse_config
from arma.errors import CheckpointError


@pytest.fixture(scope="module")
def cfg():
    return parse_config(None, [
        "env.num_envs=4", "train.batch=64", "train.minibatch=32",
        "eval.episodes=3", "eval.timeout_seconds=2.0",
        "eval.feasible_seconds=1.0", "eval.transient_seconds=0.2",
        "eval.friction_trials=2",
    ])


class TestJerk:
    def test_constant_positions_zero(self):
        q = np.full((50, 6), 0.7)
        assert evaluation.jerk_of_trajectory(q) == 0.0

    def test_constant_velocity_exactly_zero(self):
        # dyadic rationals keep the third difference bit-exact at zero
        t = np.arange(64, dtype=np.float64)
        q = 0.125 * t[:, None] + 0.5
        assert evaluation.jerk_of_trajectory(q) == 0.0

    def test_cubic_polynomial_oracle(self):
        # q(t) = t^3 sampled at dt: third difference / dt^3 == 6 exactly
        dt = 1.0 / 30.0
        t = np.arange(40) * dt
        q = t[:, None] ** 3
        got = evaluation.jerk_of_trajectory(q, control_dt=dt)
        np.testing.assert_allclose(got, 6.0 / 1000.0, rtol=1e-9)

    def test_too_short_raises(self):
        with pytest.raises(ValueError, match="too short"):
            evaluation.jerk_of_trajectory(np.zeros((3, 6)))


class TestGrid:
    def test_grid_size_168(self):
        cfg = parse_config(None)
        cells = evaluation.command_grid(cfg)
        assert len(cells) == 21 * 8 == 168
        speeds = sorted({c.speed for c in cells})
        assert speeds[0] == -1.0 and speeds[-1] == 1.0
        np.testing.assert_allclose(np.diff(speeds), 0.1)
        heights = sorted({c.height for c in cells})
        assert heights[0] == 0.65 and heights[-1] == 1.0
        np.testing.assert_allclose(np.diff(heights), 0.05)


class TestFrictionScan:
    def test_always_falling_policy_hits_sentinel(self, cfg):
        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        # sabotage: constant extreme targets make the robot dive immediately
        for name, p in ag.pi.params.items():
            p.data[:] = 0.0
        ag.pi.params["pi.l2.b"].data[:] = 3.0
        out = evaluation.min_friction(cfg, ag, "priv")
        assert out == evaluation.FRICTION_SENTINEL

    def test_scan_never_below_floor(self, cfg):
        ev = cfg.eval
        values = []
        v = ev.friction_start
        while v >= ev.friction_floor - 1e-9:
            values.append(round(v, 10))
            v = round(v - ev.friction_step, 10)
        assert min(values) >= 0.05


class TestCensoring:
    def test_mttf_upper_bound_is_timeout(self, cfg):
        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        value = evaluation.mttf(cfg, ag, "priv", n=3, timeout=1.0, seed=5)
        assert 0.0 <= value <= 1.0

    def test_never_falling_scores_full_timeout(self, cfg):
        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        stats = evaluation.rollout_episodes(cfg, ag, "priv", 2, 30, seed=0)
        stats.fall_step[:] = -1
        np.testing.assert_allclose(stats.fall_times(), 1.0)

    def test_immediate_fall_near_zero(self, cfg):
        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        stats = evaluation.rollout_episodes(cfg, ag, "priv", 2, 30, seed=0)
        stats.fall_step[:] = 0
        np.testing.assert_allclose(stats.fall_times(), 0.0)


class TestModeLoading:
    def test_missing_checkpoint_named_error(self, cfg, tmp_path):
        with pytest.raises(CheckpointError, match="phase 1"):
            evaluation.load_mode(str(tmp_path), cfg, "priv")

    def test_unknown_mode(self, cfg, tmp_path):
        with pytest.raises(CheckpointError, match="unknown eval mode"):
            evaluation.load_mode(str(tmp_path), cfg, "warp")

    def test_mode_checkpoint_requirements(self):
        assert evaluation.MODE_SPEC["priv"][0] == ("1",)
        assert evaluation.MODE_SPEC["rma"][0] == ("1", "2")
        assert evaluation.MODE_SPEC["arma"][0] == ("1", "2", "3")
        assert evaluation.MODE_SPEC["static"][0] == ("1", "2", "3")
        assert evaluation.MODE_SPEC["robust"][0] == ("robust",)


class TestBenchCsv:
    def test_schema_and_determinism(self, cfg, tmp_path):
        # train nothing: build checkpoints from fresh agents so compare()
        # exercises the full path quickly
        run_dir = tmp_path
        from arma import checkpoint

        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        named = {k: v.data for k, v in ag.named_params().items()}
        for phase, fname in (("1", "phase1.ckpt"), ("2", "phase2.ckpt"),
                             ("3", "phase3.ckpt"), ("robust", "robust.ckpt")):
            checkpoint.save_checkpoint(run_dir / fname, named,
                                       {"phase": phase, "config": cfg.hash(),
                                        "seed": 0, "iteration": 0})
        # robust checkpoint needs the no-latent architecture
        agr = agents.build_agents(0, hidden=cfg.agents.hidden,
                                  with_latent=False)
        checkpoint.save_checkpoint(
            run_dir / "robust.ckpt",
            {k: v.data for k, v in agr.named_params().items()},
            {"phase": "robust", "config": cfg.hash(), "seed": 0,
             "iteration": 0})

        cfg_small = parse_config(None, [
            "env.num_envs=4", "train.batch=64", "train.minibatch=32",
            "eval.episodes=2", "eval.timeout_seconds=0.5",
            "eval.feasible_seconds=0.4", "eval.transient_seconds=0.1",
            "eval.friction_trials=1", "eval.speed_step=1.0",
            "eval.height_step=0.35",
        ])
        a = run_dir / "bench_a.csv"
        b = run_dir / "bench_b.csv"
        reports = evaluation.compare(cfg_small, str(run_dir),
                                     ["priv", "robust"], str(a))
        evaluation.compare(cfg_small, str(run_dir), ["priv", "robust"], str(b))
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert lines[0].startswith("# config=")
        assert lines[1] == evaluation.BENCH_HEADER
        assert len(lines) == 4
        assert lines[2].startswith("priv,")
        assert lines[3].startswith("robust,")
        assert len(reports) == 2
        table = evaluation.format_table(reports)
        assert "priv" in table and "robust" in table


class TestTrackingAggregation:
    def test_perfect_mock_controller_zero_error_full_fraction(self, monkeypatch):
        # a fabricated run where nothing falls and tracking is exact
        cfg = parse_config(None, ["eval.speed_step=1.0", "eval.height_step=0.35"])
        cells = evaluation.command_grid(cfg)

        def fake_preset(runner, cells_, steps, transient):
            stats = evaluation.EpisodeStats(len(cells_), steps)
            stats.track_n[:] = steps - transient
            return stats  # fall_step stays -1, track sums stay 0

        monkeypatch.setattr(evaluation, "rollout_episodes_preset", fake_preset)
        (err_speed, err_height), fraction = evaluation.tracking(
            cfg, agents.build_agents(0, hidden=16), "priv")
        assert fraction == 1.0
        assert err_speed == 0.0 and err_height == 0.0

    def test_reward_bounded_return(self):
        # reward is bounded by 1 per step, so any episode return <= steps
        cfg = parse_config(None, [
            "env.num_envs=2", "train.batch=64", "train.minibatch=32",
            "eval.episodes=2"])
        ag = agents.build_agents(0, hidden=cfg.agents.hidden)
        stats = evaluation.rollout_episodes(cfg, ag, "priv", 2, 60, seed=3)
        assert np.all(stats.ret <= 60.0) and np.all(stats.ret >= 0.0)
