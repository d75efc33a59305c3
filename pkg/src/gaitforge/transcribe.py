"""Trapezoidal direct collocation for one periodic walking step.

Builds a finite-dimensional nonlinear program from a gait request: the
decision vector stacks the state trajectory at v collocation nodes, the
hip-torque trajectory, and the free step duration t_f.  Dynamics enter as
trapezoid defect equalities, ground-contact conditions as node-wise
inequalities, and periodicity/step-placement as boundary equalities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .model import ModelParams
from .nlp import NlpProblem


class CostMode(enum.Enum):
    """Running-cost integrand selecting the gait's character."""

    SWING_ANGLE = "swing_angle"
    SWING_RATE_SQUARED = "swing_rate2"
    CONSTANT = "constant"
    TORQUE_SQUARED = "torque2"

    @classmethod
    def from_name(cls, name: str) -> "CostMode":
        key = str(name).strip().lower()
        for mode in cls:
            if key == mode.value or key == mode.name.lower():
                return mode
        raise ValueError(
            f"unknown cost mode {name!r}; choose from "
            + ", ".join(m.value for m in cls)
        )


# Trajectory anchors used to seed cold-start solves: plausible start/end
# states of a forward step, linearly interpolated across the grid.  They
# need not be feasible; the solver moves freely from them.
GUESS_STATE_START = np.array([-0.17, 0.34, 1.44, 0.53])
GUESS_STATE_END = np.array([-0.34, -0.17, 1.66, -3.25])

# Strictness margin (N) turning F_N > 0 into the closed constraint
# F_N >= margin that smooth NLP methods can hold exactly.
NORMAL_FORCE_MARGIN = 1.0

FD_STEP = 1e-7


@dataclass(frozen=True)
class GaitSpec:
    """A gait request: step length, cost character, and discretization."""

    tl: float
    cost_mode: CostMode
    v: int = 25
    t_f_bounds: tuple[float, float] = (0.2, 2.0)
    params: ModelParams = field(default_factory=ModelParams)
    # Tikhonov weight on the torque integral, added to whatever the cost
    # mode selects.  Zero for the real problem; synthesis sweeps it toward
    # zero as a continuation device, because the torque-free costs are
    # linear in u and their bang-bang optima give quasi-Newton methods no
    # curvature to work with until the iterate is already at the vertex.
    u_reg: float = 0.0
    # Minimum downward swing-foot speed at touchdown (m/s).  Without it the
    # optimizer happily lands the foot from below — the foot dips under the
    # walking surface late in the swing and rises back to zero height at
    # t_f — which no touchdown event can detect, so the trajectory cannot
    # be replayed.  Must be positive for a simulable gait; larger values
    # buy event-timing robustness at some cost in J.
    min_landing_descent: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.tl) and self.tl > 0):
            raise ValueError(f"tl must be positive, got {self.tl}")
        if self.v < 5:
            raise ValueError(f"v must be at least 5, got {self.v}")
        lo, hi = self.t_f_bounds
        if not (0 < lo < hi and np.isfinite(hi)):
            raise ValueError(f"t_f_bounds must be positive and ordered, got {self.t_f_bounds}")
        if not (self.u_reg >= 0.0):
            raise ValueError(f"u_reg must be non-negative, got {self.u_reg}")
        if not (self.min_landing_descent >= 0.0):
            raise ValueError(
                f"min_landing_descent must be non-negative, got {self.min_landing_descent}"
            )
        if not isinstance(self.cost_mode, CostMode):
            object.__setattr__(self, "cost_mode", CostMode.from_name(self.cost_mode))


class DecisionLayout:
    """Index map for the flat decision vector z = [x^(1..v), u^(1..v), t_f]."""

    def __init__(self, v: int):
        self.v = v
        self.n = 5 * v + 1
        self.states = slice(0, 4 * v)
        self.inputs = slice(4 * v, 5 * v)
        self.i_tf = 5 * v

    def pack(self, states: np.ndarray, inputs: np.ndarray, t_f: float) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        if states.shape != (self.v, 4) or inputs.shape != (self.v,):
            raise ValueError("trajectory shapes do not match the layout")
        return np.concatenate([states.ravel(), inputs, [float(t_f)]])

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise ValueError(f"expected decision vector of length {self.n}, got {z.shape}")
        states = z[self.states].reshape(self.v, 4)
        inputs = z[self.inputs]
        return states, inputs, float(z[self.i_tf])


def layout(spec: GaitSpec) -> DecisionLayout:
    return DecisionLayout(spec.v)


def initial_guess(spec: GaitSpec, warm=None) -> np.ndarray:
    """Starting decision vector.

    Cold start: states linearly interpolate the guess anchors, inputs are
    zero, t_f sits at the midpoint of its bounds.  A warm start (a solved
    gait, or a (nodes, states, inputs, t_f) tuple) is copied exactly when
    the node counts agree; otherwise states are resampled through the C1
    cubic Hermite reconstruction whose node slopes are the swing dynamics
    (the natural between-node model of a trapezoid solution -- plain
    linear resampling leaves kinks that show up as large defect residuals
    on the finer grid), and inputs are resampled linearly.
    """
    lay = layout(spec)
    if warm is None:
        alpha = np.linspace(0.0, 1.0, spec.v)[:, None]
        states = (1.0 - alpha) * GUESS_STATE_START + alpha * GUESS_STATE_END
        inputs = np.zeros(spec.v)
        t_f = 0.5 * (spec.t_f_bounds[0] + spec.t_f_bounds[1])
        return lay.pack(states, inputs, t_f)

    if isinstance(warm, tuple):
        w_nodes, w_states, w_inputs, w_tf = warm
    else:
        w_nodes, w_states, w_inputs, w_tf = warm.nodes, warm.states, warm.inputs, warm.t_f
    w_nodes = np.asarray(w_nodes, dtype=float)
    w_states = np.asarray(w_states, dtype=float)
    w_inputs = np.asarray(w_inputs, dtype=float)
    if w_states.shape[0] == spec.v:
        return lay.pack(w_states, w_inputs, w_tf)
    slopes = np.column_stack(
        dynamics.swing_accel_batch(
            w_states[:, 0], w_states[:, 1], w_states[:, 2], w_states[:, 3],
            w_inputs, spec.params,
        )
    )
    f_old = np.concatenate([w_states[:, 2:], slopes], axis=1)
    t_new = np.linspace(w_nodes[0], w_nodes[-1], spec.v)
    states = _hermite_eval(w_nodes, w_states, f_old, t_new)
    inputs = np.interp(t_new, w_nodes, w_inputs)
    return lay.pack(states, inputs, w_tf)


def _hermite_eval(t_old, x_old, f_old, t_new):
    """Evaluate the piecewise-cubic Hermite (values x, slopes f) at t_new."""
    idx = np.clip(np.searchsorted(t_old, t_new, side="right") - 1, 0, len(t_old) - 2)
    h = (t_old[idx + 1] - t_old[idx])[:, None]
    s = ((t_new - t_old[idx]) / h[:, 0])[:, None]
    h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
    h10 = s * (1.0 - s) ** 2
    h01 = s**2 * (3.0 - 2.0 * s)
    h11 = s**2 * (s - 1.0)
    return (
        h00 * x_old[idx] + h10 * h * f_old[idx]
        + h01 * x_old[idx + 1] + h11 * h * f_old[idx + 1]
    )


def kinematic_guess(spec: GaitSpec) -> np.ndarray:
    """Fallback starting point from the step-placement geometry.

    The default anchors encode their final angles inconsistently with a
    forward step of positive length, which can strand the solver in a
    rocking-in-place local minimum.  This guess keeps the anchor start
    velocities but puts the angles on the symmetric solution of the
    placement equation, q = asin(TL/2r), traversed start to end, and ends
    with the legs scissoring so the swing foot arrives moving downward
    (the anchor end rates close the legs the other way, which seeds the
    undetectable rising-foot landing).
    """
    arg = spec.tl / (2.0 * spec.params.r)
    if arg >= 1.0:
        raise ValueError(f"step length {spec.tl} exceeds kinematic reach")
    q = float(np.arcsin(arg))
    start = np.array([-q, q, GUESS_STATE_START[2], GUESS_STATE_START[3]])
    end = np.array([q, -q, GUESS_STATE_END[2], -1.0])
    alpha = np.linspace(0.0, 1.0, spec.v)[:, None]
    states = (1.0 - alpha) * start + alpha * end
    t_f = min(max(0.6, spec.t_f_bounds[0]), spec.t_f_bounds[1])
    return layout(spec).pack(states, np.zeros(spec.v), t_f)


def _trapezoid(y: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Trapezoid integral along the last axis with uniform spacing h."""
    return h * (np.sum(y, axis=-1) - 0.5 * (y[..., 0] + y[..., -1]))


def _eval_batch(states, inputs, t_f, spec: GaitSpec, scale_defects: bool = False):
    """Objective, equalities, inequalities for a batch of decision vectors.

    states: (..., v, 4); inputs: (..., v); t_f: (...,).  Returns
    (J (...), c_eq (..., 4(v-1)+6), c_in (..., 3v+1)).

    With ``scale_defects`` the defect rows are divided by the interval h
    (the derivative form of the same constraint).  The assembled NLP uses
    that form: the raw residual shrinks quadratically as h -> 0, which
    rewards the solver for collapsing t_f toward its lower bound early in
    the solve; the scaled residual has the identical zero set (h is
    bounded away from 0) without that incentive.
    """
    p = spec.params
    v = spec.v
    q_st, q_sw = states[..., 0], states[..., 1]
    qd_st, qd_sw = states[..., 2], states[..., 3]

    qdd_st, qdd_sw = dynamics.swing_accel_batch(q_st, q_sw, qd_st, qd_sw, inputs, p)
    f = np.stack([qd_st, qd_sw, qdd_st, qdd_sw], axis=-1)
    h = t_f / (v - 1)
    defects = (
        states[..., 1:, :]
        - states[..., :-1, :]
        - 0.5 * h[..., None, None] * (f[..., 1:, :] + f[..., :-1, :])
    )
    if scale_defects:
        defects = defects / h[..., None, None]
    defects = defects.reshape(defects.shape[:-2] + (4 * (v - 1),))

    px, py = dynamics.swing_foot_position_batch(q_st[..., -1], q_sw[..., -1], p)
    placement = np.stack([px - spec.tl, py], axis=-1)
    x_plus, _, _ = dynamics.impact_relabeled_batch(
        q_st[..., -1], q_sw[..., -1], qd_st[..., -1], qd_sw[..., -1], p
    )
    periodic = states[..., 0, :] - x_plus
    c_eq = np.concatenate([defects, placement, periodic], axis=-1)

    F_T, F_N = dynamics.stance_grf_batch(q_st, q_sw, qd_st, qd_sw, inputs, p)
    contact = np.stack(
        [-F_N + NORMAL_FORCE_MARGIN, F_T - p.mu * F_N, -F_T - p.mu * F_N], axis=-1
    )
    # Touchdown approach: the swing foot must be moving downward at t_f,
    # or the landing is undetectable by a height-crossing event.
    hdot_end = p.r * (
        -np.sin(q_st[..., -1]) * qd_st[..., -1] + np.sin(q_sw[..., -1]) * qd_sw[..., -1]
    )
    descent = hdot_end + spec.min_landing_descent
    c_in = np.concatenate(
        [contact.reshape(contact.shape[:-2] + (3 * v,)), descent[..., None]], axis=-1
    )

    mode = spec.cost_mode
    if mode is CostMode.SWING_ANGLE:
        J = _trapezoid(q_sw, h)
    elif mode is CostMode.SWING_RATE_SQUARED:
        J = _trapezoid(qd_sw**2, h)
    elif mode is CostMode.CONSTANT:
        J = 100.0 * t_f
    else:
        J = _trapezoid(inputs**2, h)
    if spec.u_reg > 0.0:
        J = J + spec.u_reg * _trapezoid(inputs**2, h)
    return J, c_eq, c_in


def defect_constraints(z, spec: GaitSpec) -> np.ndarray:
    """Trapezoid defects x^{k+1} - x^k - (h/2)(f^{k+1} + f^k), flattened."""
    states, inputs, t_f = layout(spec).unpack(z)
    _, c_eq, _ = _eval_batch(states, inputs, np.float64(t_f), spec)
    return c_eq[: 4 * (spec.v - 1)]


def boundary_constraints(z, spec: GaitSpec) -> np.ndarray:
    """Step placement (2) and periodicity through the reset map (4)."""
    states, _, _ = layout(spec).unpack(z)
    pos, _ = dynamics.swing_foot_kinematics(states[-1, :2], spec.params)
    placement = pos - np.array([spec.tl, 0.0])
    reset = dynamics.impact_map(states[-1], spec.params)
    return np.concatenate([placement, states[0] - reset.x_plus])


def path_constraints(z, spec: GaitSpec) -> np.ndarray:
    """Inequalities, c <= 0: node-wise contact conditions (loaded stance
    foot, friction cone) plus the terminal touchdown-descent condition."""
    states, inputs, t_f = layout(spec).unpack(z)
    _, _, c_in = _eval_batch(states, inputs, np.float64(t_f), spec)
    return c_in


def cost(z, spec: GaitSpec) -> float:
    states, inputs, t_f = layout(spec).unpack(z)
    J, _, _ = _eval_batch(states, inputs, np.float64(t_f), spec)
    return float(J)


def bounds(spec: GaitSpec) -> tuple[np.ndarray, np.ndarray]:
    p = spec.params
    state_lo = np.tile([p.q_min, p.q_min, p.qd_min, p.qd_min], spec.v)
    state_hi = np.tile([p.q_max, p.q_max, p.qd_max, p.qd_max], spec.v)
    lb = np.concatenate([state_lo, np.full(spec.v, p.u_min), [spec.t_f_bounds[0]]])
    ub = np.concatenate([state_hi, np.full(spec.v, p.u_max), [spec.t_f_bounds[1]]])
    return lb, ub


def assemble(spec: GaitSpec) -> NlpProblem:
    """Bundle the transcribed gait problem for the solver.

    All evaluation goes through one vectorized kernel; ``eval_stacked``
    accepts a (B, n) block of decision vectors so finite-difference sweeps
    cost a single batched call.  The equality block carries the defects in
    derivative form (divided by h; see _eval_batch) followed by the six
    boundary rows; a solution feasible here is feasible for the plain
    defect form to a strictly tighter tolerance since h < 1.
    """
    lay = layout(spec)
    lb, ub = bounds(spec)
    v = spec.v

    def eval_stacked(Z: np.ndarray):
        Z = np.asarray(Z, dtype=float)
        states = Z[:, : 4 * v].reshape(-1, v, 4)
        inputs = Z[:, 4 * v : 5 * v]
        t_f = Z[:, 5 * v]
        return _eval_batch(states, inputs, t_f, spec, scale_defects=True)

    def objective(z):
        J, _, _ = eval_stacked(np.asarray(z, float)[None, :])
        return float(J[0])

    def c_eq(z):
        _, ceq, _ = eval_stacked(np.asarray(z, float)[None, :])
        return ceq[0]

    def c_in(z):
        _, _, cin = eval_stacked(np.asarray(z, float)[None, :])
        return cin[0]

    return NlpProblem(
        n=lay.n,
        m_eq=4 * (v - 1) + 6,
        m_in=3 * v + 1,
        objective=objective,
        c_eq=c_eq,
        c_in=c_in,
        lb=lb,
        ub=ub,
        fd_step=FD_STEP,
        eval_stacked=eval_stacked,
    )
