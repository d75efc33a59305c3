"""Physical parameters of the planar compass biped and config-file loading.

The model is two straight legs of length ``r`` joined at the hip, each with a
point mass ``m`` at its midpoint, walking on flat ground with friction
coefficient ``mu``.  A single torque actuates the swing coordinate.  Angles are
measured from the upward vertical; the hip sits at ``foot + r*(sin q, cos q)``
for a leg at angle ``q``, so positive angles lean the leg forward (+x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# Config-file keys (flat TOML) -> dataclass field names.
CONFIG_KEYS = {
    "mass": "m",
    "leg_length": "r",
    "gravity": "g",
    "friction_mu": "mu",
    "torque_min": "u_min",
    "torque_max": "u_max",
    "q_min": "q_min",
    "q_max": "q_max",
    "qd_min": "qd_min",
    "qd_max": "qd_max",
}


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and actuator/state box bounds.

    Attributes
    ----------
    m : leg point mass (kg)
    r : leg length (m)
    g : gravitational acceleration (m/s^2)
    mu : ground friction coefficient (-)
    u_min, u_max : hip torque bounds (N m)
    q_min, q_max : joint angle bounds (rad)
    qd_min, qd_max : joint rate bounds (rad/s)
    """

    m: float = 5.0
    r: float = 1.0
    g: float = 9.81
    mu: float = 0.8
    u_min: float = -30.0
    u_max: float = 30.0
    q_min: float = -math.pi / 2
    q_max: float = math.pi / 2
    qd_min: float = -10.0
    qd_max: float = 10.0

    def __post_init__(self) -> None:
        if not (self.m > 0 and self.r > 0 and self.g > 0 and self.mu > 0):
            raise ValueError("m, r, g and mu must all be positive")
        for lo, hi, name in (
            (self.u_min, self.u_max, "torque"),
            (self.q_min, self.q_max, "joint angle"),
            (self.qd_min, self.qd_max, "joint rate"),
        ):
            if not lo < hi:
                raise ValueError(f"{name} bounds must satisfy min < max")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"parameter {f.name} must be finite")

    def to_config_dict(self) -> dict[str, float]:
        """Export as the flat config-key mapping (mass, leg_length, ...)."""
        return {key: float(getattr(self, attr)) for key, attr in CONFIG_KEYS.items()}

    def with_overrides(self, overrides: dict[str, float]) -> "ModelParams":
        """Return a copy with config-key overrides applied.

        Keys use the config-file names; unknown keys raise ValueError.
        """
        updates = {}
        for key, value in overrides.items():
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown model parameter {key!r}")
            updates[CONFIG_KEYS[key]] = float(value)
        return replace(self, **updates)


def load_params(path: str) -> ModelParams:
    """Load ModelParams from a flat TOML file.

    Recognized keys: mass, leg_length, gravity, friction_mu, torque_min,
    torque_max, q_min, q_max, qd_min, qd_max.  Missing keys keep their
    defaults; unknown keys are rejected.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return params_from_dict(raw)


def params_from_dict(raw: dict) -> ModelParams:
    """Build ModelParams from a (possibly partial) config-key dict."""
    for key in raw:
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown model parameter {key!r}")
    return ModelParams().with_overrides({k: float(v) for k, v in raw.items()})
