"""Parameter container and config-file loading."""
import dataclasses
import math

import pytest

from gaitforge.model import ModelParams, load_params, params_from_dict


def test_defaults():
    p = ModelParams()
    assert (p.m, p.r, p.g, p.mu) == (5.0, 1.0, 9.81, 0.8)
    assert (p.u_min, p.u_max) == (-30.0, 30.0)
    assert p.q_max == math.pi / 2 and p.q_min == -math.pi / 2
    assert (p.qd_min, p.qd_max) == (-10.0, 10.0)


def test_frozen():
    p = ModelParams()
    with pytest.raises(dataclasses.FrozenInstanceError):
        p.m = 2.0


def test_config_dict_round_trip():
    p = ModelParams(m=3.5, mu=0.6)
    q = params_from_dict(p.to_config_dict())
    assert q == p


def test_with_overrides():
    p = ModelParams().with_overrides({"mass": 2.0, "leg_length": 0.9})
    assert p.m == 2.0 and p.r == 0.9
    assert p.g == 9.81  # untouched fields keep defaults


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown model parameter"):
        ModelParams().with_overrides({"hip_mass": 1.0})
    with pytest.raises(ValueError, match="unknown model parameter"):
        params_from_dict({"mass": 1.0, "massive": 2.0})


@pytest.mark.parametrize(
    "bad",
    [
        {"m": -1.0},
        {"g": 0.0},
        {"mu": -0.1},
        {"u_min": 30.0, "u_max": -30.0},
        {"q_min": 1.0, "q_max": 1.0},
        {"qd_min": math.inf},
    ],
)
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_load_params_toml(tmp_path):
    cfg = tmp_path / "walker.toml"
    cfg.write_text(
        "mass = 4.0\nleg_length = 1.2\nfriction_mu = 0.5\ntorque_max = 20.0\n"
    )
    p = load_params(str(cfg))
    assert (p.m, p.r, p.mu, p.u_max) == (4.0, 1.2, 0.5, 20.0)
    assert p.u_min == -30.0  # unspecified keys default


def test_load_params_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("mass = 4.0\nknee_stiffness = 3.0\n")
    with pytest.raises(ValueError, match="knee_stiffness"):
        load_params(str(cfg))
