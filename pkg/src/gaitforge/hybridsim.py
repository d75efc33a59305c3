"""Event-driven simulation of the walking cycle.

Integrates the swing-phase ODE with fixed-step RK4 until the swing foot
strikes the ground ahead of the stance foot, applies the impulsive impact
map and relabels, then repeats.  The guard ignores the scuffing crossing
(foot passing ground level behind or at the stance foot mid-swing), which
the model treats as out-of-plane clearance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import dynamics
from .model import ModelParams


class NoImpact(Exception):
    """No ground strike occurred within the allowed simulation horizon."""


class IntegrationFailure(Exception):
    """Integrator step-size underflow or non-finite state."""


class RolloutError(Exception):
    """A step of a multi-step rollout failed.

    Carries the failing step index, the underlying reason and the steps
    completed so far.
    """

    def __init__(self, step_index: int, reason: str, steps: list["StepTrace"]):
        super().__init__(f"rollout failed at step {step_index}: {reason}")
        self.step_index = step_index
        self.reason = reason
        self.steps = steps


class ControlSignal:
    """Hip torque as a function of time over one step.

    Either zero, constant, or a piecewise-linear interpolation of samples
    on a time grid.  Evaluation outside the domain clamps to the endpoint
    values.
    """

    def __init__(self, times: np.ndarray | None, values: np.ndarray | None, const: float = 0.0):
        self._times = None if times is None else np.asarray(times, dtype=float)
        self._values = None if values is None else np.asarray(values, dtype=float)
        self._const = float(const)
        if (self._times is None) != (self._values is None):
            raise ValueError("times and values must be given together")
        if self._times is not None:
            if self._times.ndim != 1 or self._times.shape != self._values.shape:
                raise ValueError("times and values must be equal-length 1-D arrays")
            if np.any(np.diff(self._times) <= 0):
                raise ValueError("times must be strictly increasing")

    @classmethod
    def zero(cls) -> "ControlSignal":
        return cls(None, None, 0.0)

    @classmethod
    def constant(cls, u: float) -> "ControlSignal":
        return cls(None, None, u)

    @classmethod
    def sampled(cls, times, values) -> "ControlSignal":
        return cls(np.asarray(times, float), np.asarray(values, float))

    def __call__(self, t: float) -> float:
        if self._times is None:
            return self._const
        # np.interp clamps to endpoint values outside the grid.
        return float(np.interp(t, self._times, self._values))


@dataclass(frozen=True)
class IntegratorOptions:
    """Settings for integrate_swing.

    ``direction`` selects the walking direction the impact guard treats as
    forward (+1 walks toward +x); mirrored simulations use -1.
    ``adaptive`` enables step-doubling error control instead of the default
    fixed step (fixed is the reproducible default).
    """

    dt: float = 1e-3
    max_time: float = 5.0
    direction: float = 1.0
    arming_height: float = 1e-6
    forward_margin: float = 1e-3
    bracket_tol: float = 1e-12
    adaptive: bool = False
    adaptive_tol: float = 1e-10
    min_dt: float = 1e-12


@dataclass
class StepTrace:
    """One swing phase ending at ground strike.

    Samples run from step start to the located impact instant; the final
    sample is the refined pre-impact state.
    """

    t: np.ndarray
    states: np.ndarray
    u: np.ndarray
    grf: np.ndarray
    t_f: float
    impact: dynamics.ImpactResult

    def to_csv(self, path_or_file) -> None:
        """Write samples as CSV: t, q_st, q_sw, qd_st, qd_sw, u, F_T, F_N."""
        own = isinstance(path_or_file, (str, bytes))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            writer = csv.writer(fh)
            writer.writerow(["t", "q_st", "q_sw", "qd_st", "qd_sw", "u", "F_T", "F_N"])
            for i in range(len(self.t)):
                writer.writerow(
                    [repr(float(v)) for v in (self.t[i], *self.states[i], self.u[i], *self.grf[i])]
                )
        finally:
            if own:
                fh.close()

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _rk4_step(x: np.ndarray, t: float, h: float, ctrl: ControlSignal, p: ModelParams) -> np.ndarray:
    k1 = dynamics.swing_dynamics(x, ctrl(t), p)
    k2 = dynamics.swing_dynamics(x + 0.5 * h * k1, ctrl(t + 0.5 * h), p)
    k3 = dynamics.swing_dynamics(x + 0.5 * h * k2, ctrl(t + 0.5 * h), p)
    k4 = dynamics.swing_dynamics(x + h * k3, ctrl(t + h), p)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _foot_x_height(x: np.ndarray, p: ModelParams) -> tuple[float, float]:
    pos, _ = dynamics.swing_foot_kinematics(x[:2], p)
    return float(pos[0]), float(pos[1])


def integrate_swing(
    x0,
    ctrl: ControlSignal,
    p: ModelParams,
    opts: IntegratorOptions | None = None,
) -> StepTrace:
    """Integrate the swing phase until the swing foot strikes the ground.

    The strike event is a downward zero crossing of the swing-foot height
    with the foot ahead of the stance foot by more than
    ``opts.forward_margin`` (signed by ``opts.direction``).  The event is
    armed only once the foot has risen above ``opts.arming_height``, so a
    step that begins with the foot on the ground does not trigger at t=0.
    The crossing is refined by bisection to a ``opts.bracket_tol`` bracket.

    Raises NoImpact if no event occurs within ``opts.max_time`` and
    IntegrationFailure on step-size underflow or non-finite states.
    """
    opts = opts or IntegratorOptions()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (4,) or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite state [q_st, q_sw, qd_st, qd_sw]")

    ts = [0.0]
    xs = [x.copy()]
    t = 0.0
    _, h_prev = _foot_x_height(x, p)
    armed = h_prev > opts.arming_height

    while t < opts.max_time:
        dt = min(opts.dt, opts.max_time - t)
        if opts.adaptive:
            x_new, dt = _adaptive_step(x, t, dt, ctrl, p, opts)
        else:
            x_new = _rk4_step(x, t, dt, ctrl, p)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationFailure(f"non-finite state at t={t + dt:.6f}")
        t_new = t + dt
        fx_new, h_new = _foot_x_height(x_new, p)

        if armed and h_prev > 0.0 >= h_new:
            hit, t_star, x_star = _refine_event(x, t, dt, h_prev, ctrl, p, opts)
            if hit:
                ts.append(t_star)
                xs.append(x_star)
                return _finalize_trace(ts, xs, ctrl, p)
        if h_new > opts.arming_height:
            armed = True

        t, x, h_prev = t_new, x_new, h_new
        ts.append(t)
        xs.append(x.copy())

    raise NoImpact(
        f"no ground strike within {opts.max_time:g} s "
        f"(swing-foot height {h_prev:.4f} m at horizon)"
    )


def _adaptive_step(x, t, dt, ctrl, p, opts):
    """Step-doubling RK4: shrink dt until two half steps agree with one full."""
    while True:
        full = _rk4_step(x, t, dt, ctrl, p)
        half = _rk4_step(x, t, 0.5 * dt, ctrl, p)
        half = _rk4_step(half, t + 0.5 * dt, 0.5 * dt, ctrl, p)
        err = float(np.max(np.abs(full - half)))
        if err <= opts.adaptive_tol or dt <= opts.min_dt:
            return half, dt
        dt *= 0.5
        if dt < opts.min_dt:
            raise IntegrationFailure(f"step-size underflow at t={t:.6f}")


def _refine_event(x, t, dt, h_left, ctrl, p, opts):
    """Bisect the bracketing step for the strike instant.

    Height along the step is evaluated by a single RK4 substep from the
    bracket start, consistent with the integrator order.  Returns
    (hit, t_star, x_star); hit is False when the crossing fails the
    forward-placement guard (scuffing).
    """
    lo, hi = 0.0, dt
    while hi - lo > opts.bracket_tol:
        mid = 0.5 * (lo + hi)
        x_mid = _rk4_step(x, t, mid, ctrl, p)
        _, h_mid = _foot_x_height(x_mid, p)
        if h_mid > 0.0:
            lo = mid
        else:
            hi = mid
    t_star = t + hi
    x_star = _rk4_step(x, t, hi, ctrl, p)
    fx, _ = _foot_x_height(x_star, p)
    if opts.direction * fx <= opts.forward_margin:
        return False, 0.0, x
    return True, t_star, x_star


def _finalize_trace(ts, xs, ctrl, p) -> StepTrace:
    t_arr = np.array(ts)
    x_arr = np.array(xs)
    u_arr = np.array([ctrl(tv) for tv in ts])
    F_T, F_N = dynamics.stance_grf_batch(
        x_arr[:, 0], x_arr[:, 1], x_arr[:, 2], x_arr[:, 3], u_arr, p
    )
    grf = np.column_stack([F_T, F_N])
    impact = dynamics.impact_map(x_arr[-1], p)
    return StepTrace(
        t=t_arr, states=x_arr, u=u_arr, grf=grf, t_f=float(t_arr[-1]), impact=impact
    )


def rollout(
    x0,
    ctrl: ControlSignal,
    n_steps: int,
    p: ModelParams,
    opts: IntegratorOptions | None = None,
) -> list[StepTrace]:
    """Chain n_steps swing phases, feeding each impact's state to the next.

    The same per-step control signal is replayed each step with time
    restarting at zero.  Raises RolloutError (with the step index and the
    completed steps attached) on NoImpact, integration failure, or a state
    leaving the model's box bounds.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    steps: list[StepTrace] = []
    x = np.asarray(x0, dtype=float)
    for k in range(n_steps):
        try:
            trace = integrate_swing(x, ctrl, p, opts)
        except (NoImpact, IntegrationFailure) as exc:
            raise RolloutError(k, str(exc), steps) from exc
        bad = _bounds_violation(trace, p)
        if bad is not None:
            raise RolloutError(k, bad, steps + [trace])
        steps.append(trace)
        x = trace.impact.x_plus
    return steps


def _bounds_violation(trace: StepTrace, p: ModelParams) -> str | None:
    q = trace.states[:, :2]
    qd = trace.states[:, 2:]
    if q.min() < p.q_min or q.max() > p.q_max:
        return f"joint angle left [{p.q_min:.3f}, {p.q_max:.3f}]"
    if qd.min() < p.qd_min or qd.max() > p.qd_max:
        return f"joint rate left [{p.qd_min:.3f}, {p.qd_max:.3f}]"
    return None


def periodicity_residual(gait_or_states, p: ModelParams) -> float:
    """Inf-norm gap between the reset-mapped final state and the initial state.

    Accepts a solved gait (anything with a ``states`` attribute) or the raw
    (v, 4) node trajectory of one step; a periodic gait has the impact map
    carry the last state back onto the first.
    """
    states = np.asarray(getattr(gait_or_states, "states", gait_or_states), dtype=float)
    result = dynamics.impact_map(states[-1], p)
    return float(np.max(np.abs(result.x_plus - states[0])))
