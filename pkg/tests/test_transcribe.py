"""Collocation transcription: layout, defects, constraints, costs, guesses."""
import numpy as np
import pytest

from gaitforge import dynamics
from gaitforge.model import ModelParams
from gaitforge.transcribe import (
    GUESS_STATE_END,
    GUESS_STATE_START,
    NORMAL_FORCE_MARGIN,
    CostMode,
    GaitSpec,
    assemble,
    boundary_constraints,
    bounds,
    cost,
    defect_constraints,
    initial_guess,
    kinematic_guess,
    layout,
    path_constraints,
)

import oracles

P = ModelParams()


def spec_for(mode=CostMode.TORQUE_SQUARED, tl=0.5, v=25, **kw):
    return GaitSpec(tl=tl, cost_mode=mode, v=v, params=P, **kw)


def random_z(spec, seed):
    g = oracles.rng(seed)
    lay = layout(spec)
    states = g.uniform(-0.5, 0.5, (spec.v, 4))
    inputs = g.uniform(-5, 5, spec.v)
    return lay.pack(states, inputs, g.uniform(0.4, 1.2))


# --------------------------------------------------------------------------
# spec validation and layout
# --------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError, match="tl must be positive"):
        spec_for(tl=-0.1)
    with pytest.raises(ValueError, match="at least 5"):
        spec_for(v=3)
    with pytest.raises(ValueError, match="t_f_bounds"):
        spec_for(t_f_bounds=(1.0, 0.5))
    with pytest.raises(ValueError, match="u_reg"):
        spec_for(u_reg=-1e-3)
    with pytest.raises(ValueError, match="min_landing_descent"):
        spec_for(min_landing_descent=-0.1)
    # string cost names coerce
    assert spec_for(mode="torque2").cost_mode is CostMode.TORQUE_SQUARED


def test_cost_mode_names():
    assert CostMode.from_name("swing_angle") is CostMode.SWING_ANGLE
    assert CostMode.from_name("swing_rate2") is CostMode.SWING_RATE_SQUARED
    assert CostMode.from_name("constant") is CostMode.CONSTANT
    with pytest.raises(ValueError, match="unknown cost mode"):
        CostMode.from_name("cheapest")


def test_layout_sizes():
    spec = spec_for(v=5)
    assert layout(spec).n == 26
    spec = spec_for(v=25)
    lay = layout(spec)
    assert lay.n == 126
    prob = assemble(spec)
    assert (prob.n, prob.m_eq) == (126, 4 * 24 + 6)
    # contact rows (3 per node) plus the terminal touchdown-descent row
    assert prob.m_in == 3 * 25 + 1


def test_pack_unpack_round_trip():
    spec = spec_for(v=9)
    lay = layout(spec)
    z = random_z(spec, seed=31)
    st, u, tf = lay.unpack(z)
    assert np.array_equal(lay.pack(st, u, tf), z)
    with pytest.raises(ValueError):
        lay.pack(st[:-1], u, tf)
    with pytest.raises(ValueError):
        lay.unpack(z[:-1])


# --------------------------------------------------------------------------
# initial guesses
# --------------------------------------------------------------------------

def test_cold_start_interpolates_anchor_states():
    spec = spec_for(v=5)
    st, u, tf = layout(spec).unpack(initial_guess(spec))
    assert np.allclose(st[0], GUESS_STATE_START)
    assert np.allclose(st[-1], GUESS_STATE_END)
    assert np.allclose(st[2], [-0.255, 0.085, 1.55, -1.36])
    assert np.all(u == 0.0)
    assert tf == pytest.approx(1.1)  # midpoint of the default bounds


def test_warm_start_copies_exactly():
    spec = spec_for(v=7)
    z = random_z(spec, seed=32)
    st, u, tf = layout(spec).unpack(z)
    warm = (np.linspace(0.0, tf, 7), st, u, tf)
    assert np.array_equal(initial_guess(spec, warm=warm), z)


def test_warm_start_resamples_other_grids():
    src = spec_for(v=7)
    st, u, tf = layout(src).unpack(random_z(src, seed=33))
    warm = (np.linspace(0.0, tf, 7), st, u, tf)
    dst = spec_for(v=13)
    st2, u2, tf2 = layout(dst).unpack(initial_guess(dst, warm=warm))
    assert tf2 == tf
    # original nodes are a subset of the doubled grid: values preserved there
    assert np.allclose(st2[::2], st)
    assert np.allclose(u2[::2], u)


def test_kinematic_guess_solves_placement_and_descends():
    spec = spec_for(tl=0.6, v=11)
    st, _, _ = layout(spec).unpack(kinematic_guess(spec))
    pos, _ = dynamics.swing_foot_kinematics(st[-1, :2], P)
    assert pos[0] == pytest.approx(0.6, abs=1e-12)
    assert pos[1] == pytest.approx(0.0, abs=1e-12)
    hdot = P.r * (-np.sin(st[-1, 0]) * st[-1, 2] + np.sin(st[-1, 1]) * st[-1, 3])
    assert hdot < 0.0
    with pytest.raises(ValueError, match="kinematic reach"):
        kinematic_guess(spec_for(tl=2.5))


# --------------------------------------------------------------------------
# constraints
# --------------------------------------------------------------------------

def test_defects_vanish_on_exact_trapezoid_states():
    spec = spec_for(v=12)
    g = oracles.rng(34)
    inputs = g.uniform(-3, 3, spec.v)
    t_f = 0.8
    h = t_f / (spec.v - 1)
    states = np.empty((spec.v, 4))
    states[0] = [-0.2, 0.3, 1.0, -0.5]
    # build states by solving each trapezoid step with fixed-point iteration
    for k in range(spec.v - 1):
        x = states[k]
        fk = dynamics.swing_dynamics(x, inputs[k], P)
        nxt = x + h * fk
        for _ in range(60):
            fn = dynamics.swing_dynamics(nxt, inputs[k + 1], P)
            nxt = x + 0.5 * h * (fk + fn)
        states[k + 1] = nxt
    z = layout(spec).pack(states, inputs, t_f)
    assert np.abs(defect_constraints(z, spec)).max() <= 1e-12


def test_defects_exact_for_linear_system_discretization():
    # For xdot = a x the trapezoid update has a closed form; states built
    # with it must sit exactly on the defect manifold of that same rule.
    a, h, v = -1.7, 0.05, 9
    x = np.empty(v)
    x[0] = 1.0
    for k in range(v - 1):
        x[k + 1] = x[k] * (1 + 0.5 * h * a) / (1 - 0.5 * h * a)
    r = x[1:] - x[:-1] - 0.5 * h * (a * x[1:] + a * x[:-1])
    assert np.abs(r).max() <= 1e-15


def test_boundary_constraints_symmetric_final_state():
    spec = spec_for(tl=0.5, v=6)
    q = np.arcsin(spec.tl / (2 * P.r))
    z = random_z(spec, seed=35)
    st, u, tf = layout(spec).unpack(z)
    st[-1] = [q, -q, 1.0, 0.5]
    z = layout(spec).pack(st, u, tf)
    res = boundary_constraints(z, spec)
    assert np.abs(res[:2]).max() <= 1e-12  # placement holds exactly
    assert res.shape == (6,)
    # periodicity block equals the directly computed mismatch
    reset = dynamics.impact_map(st[-1], P)
    assert np.allclose(res[2:], st[0] - reset.x_plus)


def test_path_constraints_static_stand():
    spec = spec_for(v=5, min_landing_descent=0.25)
    st = np.zeros((5, 4))
    z = layout(spec).pack(st, np.zeros(5), 0.7)
    c = path_constraints(z, spec)
    w = 2 * P.m * P.g
    assert c.shape == (16,)
    assert np.allclose(c[0:15:3], -w + NORMAL_FORCE_MARGIN)
    assert np.allclose(c[1:15:3], -P.mu * w)
    assert np.allclose(c[2:15:3], -P.mu * w)
    # foot at rest is not descending: the touchdown row sits at its margin
    assert c[-1] == pytest.approx(0.25)


def test_fd_jacobian_matches_central_difference_oracle():
    spec = spec_for(v=7)
    prob = assemble(spec)
    z = initial_guess(spec)
    _, _, _, grad, jac_eq, jac_in = prob.derivatives(z)
    J_o = oracles.central_diff_jacobian(prob.c_eq, z, h=1e-6)
    scale = max(1.0, np.abs(J_o).max())
    assert np.abs(jac_eq - J_o).max() <= 1e-5 * scale
    g_o = oracles.central_diff_grad(prob.objective, z, h=1e-6)
    assert np.abs(grad - g_o).max() <= 1e-5 * max(1.0, np.abs(g_o).max())
    Ji_o = oracles.central_diff_jacobian(prob.c_in, z, h=1e-6)
    assert np.abs(jac_in - Ji_o).max() <= 1e-5 * max(1.0, np.abs(Ji_o).max())


def test_constraint_evaluation_deterministic():
    spec = spec_for()
    prob = assemble(spec)
    z = random_z(spec, seed=37)
    a = (prob.objective(z), prob.c_eq(z).tobytes(), prob.c_in(z).tobytes())
    b = (prob.objective(z), prob.c_eq(z).tobytes(), prob.c_in(z).tobytes())
    assert a == b


def test_touchdown_descent_row_tracks_final_state():
    spec = spec_for(v=6, min_landing_descent=0.4)
    z = random_z(spec, seed=38)
    st, u, tf = layout(spec).unpack(z)
    c = path_constraints(z, spec)
    hdot = P.r * (-np.sin(st[-1, 0]) * st[-1, 2] + np.sin(st[-1, 1]) * st[-1, 3])
    assert c[-1] == pytest.approx(hdot + 0.4, rel=1e-12)


# --------------------------------------------------------------------------
# costs
# --------------------------------------------------------------------------

def test_constant_cost_is_duration():
    spec = spec_for(mode=CostMode.CONSTANT, v=9)
    st, u, _ = layout(spec).unpack(random_z(spec, seed=39))
    z = layout(spec).pack(st, u, 0.7)
    assert cost(z, spec) == pytest.approx(70.0, rel=1e-14)


def test_torque_cost_zero_for_unactuated():
    spec = spec_for(mode=CostMode.TORQUE_SQUARED, v=9)
    st, _, tf = layout(spec).unpack(random_z(spec, seed=40))
    z = layout(spec).pack(st, np.zeros(9), tf)
    assert cost(z, spec) == 0.0


def test_running_costs_match_trapezoid_quadrature():
    spec = spec_for(mode=CostMode.SWING_ANGLE, v=13)
    z = random_z(spec, seed=41)
    st, u, tf = layout(spec).unpack(z)
    t = np.linspace(0, tf, 13)
    assert cost(z, spec) == pytest.approx(np.trapezoid(st[:, 1], t), rel=1e-12)

    spec2 = spec_for(mode=CostMode.SWING_RATE_SQUARED, v=13)
    assert cost(z, spec2) == pytest.approx(np.trapezoid(st[:, 3] ** 2, t), rel=1e-12)

    spec3 = spec_for(mode=CostMode.TORQUE_SQUARED, v=13)
    assert cost(z, spec3) == pytest.approx(np.trapezoid(u**2, t), rel=1e-12)


def test_u_reg_adds_torque_integral():
    base = spec_for(mode=CostMode.SWING_ANGLE, v=13)
    reg = spec_for(mode=CostMode.SWING_ANGLE, v=13, u_reg=0.05)
    tq = spec_for(mode=CostMode.TORQUE_SQUARED, v=13)
    z = random_z(base, seed=42)
    assert cost(z, reg) == pytest.approx(cost(z, base) + 0.05 * cost(z, tq), rel=1e-12)


def test_swing_angle_cost_may_be_negative():
    spec = spec_for(mode=CostMode.SWING_ANGLE, v=9)
    st, u, tf = layout(spec).unpack(random_z(spec, seed=43))
    st[:, 1] = -0.3
    z = layout(spec).pack(st, u, tf)
    assert cost(z, spec) < 0.0


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

def test_bounds_box():
    spec = spec_for(v=6, t_f_bounds=(0.3, 1.5))
    lb, ub = bounds(spec)
    assert lb.shape == ub.shape == (31,)
    assert lb[-1] == 0.3 and ub[-1] == 1.5
    assert np.all(lb[24:30] == P.u_min) and np.all(ub[24:30] == P.u_max)
    assert lb[0] == P.q_min and ub[1] == P.q_max
    assert lb[2] == P.qd_min and ub[3] == P.qd_max
