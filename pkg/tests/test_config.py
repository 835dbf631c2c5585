import pytest

from arma.config import RunConfig, parse_config
from arma.errors import ConfigError


class TestParse:
    def test_empty_file_gives_desk_defaults(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("")
        cfg = parse_config(str(p))
        assert cfg.run.profile == "desk"
        assert cfg.agents.hidden == 128
        assert cfg.train.batch == 4096
        assert cfg.train.minibatch == 512

    def test_no_file_gives_defaults(self):
        cfg = parse_config(None)
        assert cfg == RunConfig()

    def test_paper_scale_profile(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("profile=paper-scale\n")
        cfg = parse_config(str(p))
        assert cfg.train.batch == 65536
        assert cfg.train.minibatch == 8192
        assert cfg.agents.hidden == 512
        assert cfg.train.iters_phase3 == 2000

    def test_profile_from_override(self):
        cfg = parse_config(None, ["run.profile=paper-scale"])
        assert cfg.train.batch == 65536

    def test_file_keys_win_over_profile(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("profile=paper-scale\n[train]\nbatch=16384\nminibatch=512\n")
        cfg = parse_config(str(p))
        assert cfg.train.batch == 16384
        assert cfg.agents.hidden == 512

    def test_overrides_win_over_file(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[train]\ngamma=0.9\n")
        cfg = parse_config(str(p), ["train.gamma=0.95"])
        assert cfg.train.gamma == 0.95

    def test_sections(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("seed=42\n[env]\nnum_envs=8\n[train]\nbatch=1024\nminibatch=128\n")
        cfg = parse_config(str(p))
        assert cfg.run.seed == 42
        assert cfg.env.num_envs == 8


class TestValidation:
    def test_gamma_out_of_range(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config(None, ["train.gamma=1.5"])

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config(None, ["train.warp_speed=9"])

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[warp]\nspeed=9\n")
        with pytest.raises(ConfigError, match="unknown config section"):
            parse_config(str(p))

    def test_minibatch_must_divide_batch(self):
        with pytest.raises(ConfigError, match="minibatch"):
            parse_config(None, ["train.minibatch=1000"])

    def test_bad_value_type(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(None, ["train.gamma=fast"])

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config("/nonexistent/path.ini")

    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="profile"):
            parse_config(None, ["run.profile=warp"])


class TestHash:
    def test_hash_stable_and_sensitive(self):
        a = parse_config(None)
        b = parse_config(None)
        assert a.hash() == b.hash()
        c = parse_config(None, ["train.gamma=0.98"])
        assert c.hash() != a.hash()

    def test_profile_recorded_in_hash(self):
        a = parse_config(None)
        b = parse_config(None, ["run.profile=paper-scale"])
        assert a.hash() != b.hash()
