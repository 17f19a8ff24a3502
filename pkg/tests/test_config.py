import math

import pytest

from percept.config import (RunConfig, build_topology, config_hash,
                            load_config, parse_config_file, seed_fields)
from percept.errors import ConfigError


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config(env={})
        assert cfg.t == 15
        assert cfg.effective_stride() == 15
        assert cfg.ref_joint_list() == [5, 2, 11, 8]

    def test_file_and_cli_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nt = 30\nhidden = 64\n")
        cfg = load_config(str(path), overrides={"hidden": "32"}, env={})
        assert cfg.t == 30          # from file
        assert cfg.hidden == 32     # CLI wins

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("nope = 3\n")
        with pytest.raises(ConfigError):
            load_config(str(path), env={})

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("t = many\n")
        with pytest.raises(ConfigError):
            load_config(str(path), env={})

    def test_env_seed_overrides_all_seeds(self):
        cfg = load_config(overrides={"head_seed": "7", "gmm_seed": "9"},
                          env={"PERCEPT_SEED": "123"})
        assert set(seed_fields(cfg).values()) == {123}

    def test_r_far_default_is_twice_diagonal(self):
        cfg = load_config(env={})
        assert math.isclose(cfg.effective_r_far(),
                            2 * math.hypot(cfg.scene_width, cfg.scene_height))
        cfg2 = load_config(overrides={"r_far": "9.0"}, env={})
        assert cfg2.effective_r_far() == 9.0

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"t": "1"}, env={})
        with pytest.raises(ConfigError):
            load_config(overrides={"protocol": "bootstrap"}, env={})
        with pytest.raises(ConfigError):
            load_config(overrides={"streams": "pers,video"}, env={})

    def test_hash_tracks_content(self):
        a = load_config(env={})
        b = load_config(overrides={"t": "30"}, env={})
        assert config_hash(a) == config_hash(load_config(env={}))
        assert config_hash(a) != config_hash(b)

    def test_mix_fractions(self):
        cfg = load_config(overrides={"mix": "0.5,0.25,0.25"}, env={})
        assert cfg.mix_fractions() == [0.5, 0.25, 0.25]
        with pytest.raises(ConfigError):
            load_config(overrides={"mix": "0.9,0.9,0.9"}, env={}).mix_fractions()


class TestTopology:
    def test_default_covers_all_joints(self):
        topo = build_topology(18)
        assert set(topo) == set(range(18))
        assert all(topo[j] for j in topo)

    def test_custom_edges(self):
        topo = build_topology(3, edges=[(0, 1), (1, 2)])
        assert topo[1] == {0, 2}

    def test_nonstandard_j_needs_edges(self):
        with pytest.raises(ConfigError):
            build_topology(25)
        with pytest.raises(ConfigError):
            build_topology(3, edges=[(0, 9)])
