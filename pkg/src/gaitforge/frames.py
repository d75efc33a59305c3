"""Stick-figure animation frames sampled from a gait at a fixed frame rate.

The walker is drawn as two line segments sharing the hip joint.  All
coordinates are world-frame metres with the stance foot pinned at the
origin; a client looping the step re-anchors the stance foot itself.
"""
from __future__ import annotations

import math

import numpy as np

from .model import ModelParams

FPS = 60.0


def frame_times(t_f: float) -> np.ndarray:
    """Uniform sample times covering one step: ``ceil(t_f*60)+1`` points."""
    if not (t_f > 0.0):
        raise ValueError(f"step duration must be positive, got {t_f}")
    count = int(math.ceil(t_f * FPS)) + 1
    return np.linspace(0.0, t_f, count)


def leg_points(q_st: np.ndarray, q_sw: np.ndarray, p: ModelParams):
    """Hip, stance-foot and swing-foot coordinates for leg angles.

    Angles are measured from the upward vertical, so the hip sits at
    ``r*(sin q_st, cos q_st)`` above the stance foot and the swing foot
    hangs at ``hip - r*(sin q_sw, cos q_sw)``.
    """
    q_st = np.asarray(q_st, dtype=float)
    q_sw = np.asarray(q_sw, dtype=float)
    hip = p.r * np.stack([np.sin(q_st), np.cos(q_st)], axis=-1)
    foot_st = np.zeros_like(hip)
    foot_sw = hip - p.r * np.stack([np.sin(q_sw), np.cos(q_sw)], axis=-1)
    return hip, foot_st, foot_sw


def sample_states(nodes: np.ndarray, states: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of node states onto ``times``."""
    nodes = np.asarray(nodes, dtype=float)
    states = np.asarray(states, dtype=float)
    return np.stack([np.interp(times, nodes, states[:, k]) for k in range(states.shape[1])], axis=1)


def frames_payload(nodes: np.ndarray, states: np.ndarray, t_f: float, p: ModelParams) -> dict:
    """Frame dictionaries for one step, ready for JSON serialization.

    Layout: ``{fps, t_f, frames: [{t, stance: [hip_x, hip_y, foot_x,
    foot_y], swing: [...]}, ...]}``.
    """
    times = frame_times(t_f)
    x = sample_states(nodes, states, times)
    hip, foot_st, foot_sw = leg_points(x[:, 0], x[:, 1], p)
    frames = []
    for i, t in enumerate(times):
        frames.append(
            {
                "t": float(t),
                "stance": [float(hip[i, 0]), float(hip[i, 1]), float(foot_st[i, 0]), float(foot_st[i, 1])],
                "swing": [float(hip[i, 0]), float(hip[i, 1]), float(foot_sw[i, 0]), float(foot_sw[i, 1])],
            }
        )
    return {"fps": FPS, "t_f": float(t_f), "frames": frames}


def frames_for_gait(gait) -> dict:
    """``frames_payload`` pulled off a gait record (``nodes``/``states``/``t_f``)."""
    return frames_payload(gait.nodes, gait.states, gait.t_f, gait.spec.params)
