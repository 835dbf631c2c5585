import os

import numpy as np
import pytest

from arma import agents, checkpoint, cli
from arma.config import parse_config

TINY = ["env.num_envs=4", "env.episode_steps=200", "env.fall_height=0.05",
        "train.batch=64",
        "train.minibatch=32", "train.epochs=2", "train.iters_phase1=2",
        "train.iters_phase2=2", "train.iters_phase3=2",
        "train.iters_robust=2", "train.checkpoint_every=1",
        "eval.episodes=2", "eval.timeout_seconds=0.5",
        "eval.feasible_seconds=0.4", "eval.transient_seconds=0.1",
        "eval.friction_trials=1", "eval.speed_step=1.0",
        "eval.height_step=0.35"]


def tiny_args(extra=()):
    out = []
    for kv in TINY + list(extra):
        out += ["--set", kv]
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A fully trained (tiny) pipeline shared across CLI tests."""
    d = tmp_path_factory.mktemp("run")
    for phase in ("1", "2", "3", "robust"):
        code = cli.main(["train", "--phase", phase, "--out", str(d),
                         "--seed", "5"] + tiny_args())
        assert code == 0
    return d


class TestTrainCommand:
    def test_pipeline_produces_checkpoints(self, run_dir):
        for name in ("phase1.ckpt", "phase2.ckpt", "phase3.ckpt",
                     "robust.ckpt"):
            assert (run_dir / name).exists()
        for name in ("phase1_record.csv", "phase2_record.csv",
                     "phase3_record.csv", "robust_record.csv"):
            lines = (run_dir / name).read_text().splitlines()
            assert lines[0] == "iter,return_mean,pg_loss,v_loss,mse,imit_mult,seconds"
            assert len(lines) >= 3

    def test_config_dump_embeds_hash_and_seed(self, run_dir):
        head = (run_dir / "config.txt").read_text().splitlines()[0]
        cfg = parse_config(None, TINY + ["run.seed=5"])
        assert head == f"# config={cfg.hash()} seed=5"

    def test_phase3_without_phase2_exits_3(self, tmp_path):
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "0"] + tiny_args())
        assert code == 0
        code = cli.main(["train", "--phase", "3", "--out", str(tmp_path),
                         "--seed", "0"] + tiny_args())
        assert code == 3

    def test_bad_config_value_exits_2(self, tmp_path):
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "0", "--set", "train.gamma=1.5"])
        assert code == 2

    def test_checkpoint_phase_tags(self, run_dir):
        _, meta = checkpoint.load_checkpoint(run_dir / "phase2.ckpt")
        assert meta["phase"] == "2"
        _, meta = checkpoint.load_checkpoint(run_dir / "robust.ckpt")
        assert meta["phase"] == "robust"

    def test_train_determinism_bitwise(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            code = cli.main(["train", "--phase", "1", "--out", str(d),
                             "--seed", "9"] + tiny_args())
            assert code == 0
        assert (a / "phase1.ckpt").read_bytes() == (b / "phase1.ckpt").read_bytes()
        # the record CSV is identical except for the wall-time column
        rows_a = (a / "phase1_record.csv").read_text().splitlines()
        rows_b = (b / "phase1_record.csv").read_text().splitlines()
        for ra, rb in zip(rows_a[1:], rows_b[1:]):
            assert ra.split(",")[:5] == rb.split(",")[:5]

    def test_worker_flag_does_not_change_results(self, tmp_path):
        a, b = tmp_path / "w1", tmp_path / "w3"
        for d, w in ((a, "1"), (b, "3")):
            code = cli.main(["train", "--phase", "1", "--out", str(d),
                             "--seed", "11", "--workers", w] + tiny_args())
            assert code == 0
        ta, _ = checkpoint.load_checkpoint(a / "phase1.ckpt")
        tb, _ = checkpoint.load_checkpoint(b / "phase1.ckpt")
        for k in ta:
            assert ta[k].tobytes() == tb[k].tobytes(), k

    def test_resume_continues(self, tmp_path):
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "3"] + tiny_args())
        assert code == 0
        _, meta = checkpoint.load_checkpoint(tmp_path / "phase1.ckpt")
        assert meta["iteration"] == 1
        # resuming under the same config is a no-op that keeps the file valid
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "3", "--resume"] + tiny_args())
        assert code == 0
        # resuming under a different config hash is refused
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "3", "--resume"]
                        + tiny_args(("train.iters_phase1=4",)))
        assert code == 3

    def test_paper_scale_flag(self, tmp_path):
        # config parse only; do not actually train at paper scale
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path),
                         "--seed", "0", "--paper-scale",
                         "--set", "train.iters_phase1=0",
                         "--set", "train.batch=64",
                         "--set", "train.minibatch=32",
                         "--set", "env.num_envs=4",
                         "--set", "env.episode_steps=40",
                         "--set", "agents.hidden=16"])
        assert code == 0
        txt = (tmp_path / "config.txt").read_text()
        assert "run.profile='paper-scale'" in txt


class TestEvalCommand:
    def test_eval_writes_csv_and_reruns_identically(self, run_dir, tmp_path):
        csv_a = tmp_path / "bench_a.csv"
        csv_b = tmp_path / "bench_b.csv"
        argv = ["eval", "--modes", "priv,rma,arma,static,robust",
                "--ckpt-dir", str(run_dir), "--seed", "5"] + tiny_args()
        assert cli.main(argv + ["--csv", str(csv_a)]) == 0
        assert cli.main(argv + ["--csv", str(csv_b)]) == 0
        assert csv_a.read_bytes() == csv_b.read_bytes()
        lines = csv_a.read_text().splitlines()
        assert lines[1] == "mode,mttf,return,track_x,feasible,jerk,minfric,seed_set"
        assert len(lines) == 7  # comment + header + 5 modes
        modes = [l.split(",")[0] for l in lines[2:]]
        assert modes == ["priv", "rma", "arma", "static", "robust"]

    def test_missing_checkpoint_exits_3(self, tmp_path):
        code = cli.main(["eval", "--modes", "arma", "--ckpt-dir",
                         str(tmp_path), "--csv", str(tmp_path / "x.csv")]
                        + tiny_args())
        assert code == 3

    def test_unknown_mode_exits_2(self, run_dir, tmp_path):
        code = cli.main(["eval", "--modes", "warp", "--ckpt-dir",
                         str(run_dir), "--csv", str(tmp_path / "x.csv")])
        assert code == 2


class TestGradcheckCommand:
    def test_single_seed_passes(self, capsys):
        code = cli.main(["gradcheck", "--seed", "0"])
        out = capsys.readouterr().out
        assert code == 0
        assert "max relative error" in out and "OK" in out


class TestRolloutCommand:
    def test_dump_trajectories(self, run_dir, tmp_path):
        dump = tmp_path / "dump"
        code = cli.main(["rollout", "--mode", "priv", "--episodes", "2",
                         "--dump-dir", str(dump), "--ckpt-dir", str(run_dir),
                         "--seed", "5"] + tiny_args())
        assert code == 0
        files = sorted(os.listdir(dump))
        assert files == ["episode_000.csv", "episode_001.csv"]
        lines = (dump / files[0]).read_text().splitlines()
        assert lines[0].startswith("# config=")
        assert lines[1].split(",")[:4] == ["t", "qx", "qz", "pitch"]
        assert len(lines) >= 3

    def test_rollout_determinism(self, run_dir, tmp_path):
        da, db = tmp_path / "da", tmp_path / "db"
        argv = ["rollout", "--mode", "robust", "--episodes", "1",
                "--ckpt-dir", str(run_dir), "--seed", "5"] + tiny_args()
        assert cli.main(argv + ["--dump-dir", str(da)]) == 0
        assert cli.main(argv + ["--dump-dir", str(db)]) == 0
        assert ((da / "episode_000.csv").read_bytes()
                == (db / "episode_000.csv").read_bytes())


class TestSeedFallback:
    def test_arma_seed_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ARMA_SEED", "77")
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path)]
                        + tiny_args(("train.iters_phase1=1",)))
        assert code == 0
        head = (tmp_path / "config.txt").read_text().splitlines()[0]
        assert head.endswith("seed=77")

    def test_bad_env_seed_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ARMA_SEED", "abc")
        code = cli.main(["train", "--phase", "1", "--out", str(tmp_path)]
                        + tiny_args())
        assert code == 2
