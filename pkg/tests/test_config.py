import math

import numpy as np
import pytest

from invahrs.config import (
    RunConfig,
    apply_settings,
    load_config,
    parse_config_text,
    parse_mask,
    parse_matrix,
)
from invahrs.errors import ConfigError


def test_defaults():
    rc = load_config(env={})
    assert rc.seed == 0 and rc.case == 1 and rc.duration == 30.0
    assert rc.dt == 0.005
    assert rc.filters[0] == "ncf" and len(rc.filters) == 7
    assert rc.rincf2_rate() == pytest.approx(math.pi / 3)


@pytest.mark.parametrize(
    "text, expected",
    [("2", 2 * np.eye(3)), ("1,2,3", np.diag([1.0, 2, 3])), ("1,0,0; 0,2,0; 0,0,3", np.diag([1.0, 2, 3]))],
)
def test_parse_matrix(text, expected):
    np.testing.assert_array_equal(parse_matrix(text, 3), expected)


@pytest.mark.parametrize("text", ["1,2", "a", "1,2,3,4"])
def test_parse_matrix_errors(text):
    with pytest.raises(ConfigError):
        parse_matrix(text, 3, "Q")


def test_parse_mask():
    assert parse_mask("3:3, 1:4") == frozenset({(3, 3), (1, 4)})
    assert parse_mask("") == frozenset()
    with pytest.raises(ConfigError):
        parse_mask("3-3")


def test_parse_config_text():
    text = "# comment\nseed = 3\n\ncase=2  # trailing\nseed = 4\n"
    assert parse_config_text(text) == {"seed": "4", "case": "2"}
    with pytest.raises(ConfigError, match="<config>:1"):
        parse_config_text("nonsense")
    with pytest.raises(ConfigError, match="empty key"):
        parse_config_text(" = 3")


def test_seed_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 1\n")
    assert load_config(p, env={}).seed == 1
    assert load_config(p, env={"AHRS_SEED": "2"}).seed == 2
    assert load_config(p, ["seed=3"], env={"AHRS_SEED": "2"}).seed == 3
    assert load_config(env={"AHRS_SEED": " "}).seed == 0


def test_noise_settings(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("R = 3\ndt = 0.01\nb_e = 9.81, 0, 0\n")
    rc = load_config(p, env={})
    np.testing.assert_array_equal(rc.noise.R, 3 * np.eye(6))
    assert rc.dt == 0.01 and rc.sim_run().dt == 0.01
    np.testing.assert_array_equal(rc.noise.b_e, [9.81, 0, 0])


def test_custom_trajectory_and_noiseless():
    rc = load_config(overrides=["amplitude=0,0,1", "frequency=0,0,0.5", "noiseless=yes"], env={})
    traj = rc.trajectory_case()
    np.testing.assert_array_equal(traj.amplitude, [0, 0, 1])
    assert rc.rincf2_rate() == 1.0
    assert rc.sim_run().cfg.is_noiseless()
    assert not rc.noise.is_noiseless()


def test_filters_and_ncf():
    rc = apply_settings(RunConfig(), {"filters": "RIEKF*, wab", "k_p": "2"})
    assert rc.filters == ("riekf_star", "wab")
    assert rc.ncf.k_p == 2.0 and rc.ncf.k_i == 0.1


@pytest.mark.parametrize(
    "settings",
    [
        {"bogus": "1"},
        {"R": "1,1,1,1,1,-1"},
        {"seed": "1.5"},
        {"case": "4"},
        {"noise_units": "psd"},
        {"noiseless": "maybe"},
        {"filters": "ukf"},
        {"initial_q": "1,0,0"},
        {"duration": "1,2"},
    ],
)
def test_invalid_settings(settings):
    with pytest.raises(ConfigError):
        apply_settings(RunConfig(), settings)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg", env={})


def test_override_syntax():
    with pytest.raises(ConfigError):
        load_config(overrides=["seed"], env={})
