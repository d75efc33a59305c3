"""Closed-form mechanics of the planar compass biped.

States are numpy arrays ordered ``[q_st, q_sw, qd_st, qd_sw]``: stance and
swing leg angles from the upward vertical and their rates.  With the stance
foot pinned at the origin, the hip is at ``r*(sin q_st, cos q_st)`` and the
swing foot at ``hip - r*(sin q_sw, cos q_sw)``.

All public functions are pure; the ``*_batch`` kernels accept arrays of any
broadcastable shape and back both the scalar API and the collocation
transcription, so there is a single evaluation path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ModelParams

STATE_LABELS = ("q_st", "q_sw", "qd_st", "qd_sw")


class SingularImpact(Exception):
    """Impact linear system is numerically singular (degenerate configuration)."""


class GroundForces(NamedTuple):
    """Tangential and normal ground reaction at the stance foot (N)."""

    F_T: float
    F_N: float


@dataclass(frozen=True)
class ImpactResult:
    """Post-impact relabeled state and the impulsive foot reaction (N s)."""

    x_plus: np.ndarray
    impulse_T: float
    impulse_N: float


def swing_terms(q, qd, p: ModelParams):
    """Inertia, Coriolis and gravity terms of the pinned two-link phase.

    Returns (D, C, G) with D symmetric positive definite, C the Coriolis
    matrix in Christoffel convention, and G the gradient of the potential.
    """
    q_st, q_sw = q
    qd_st, qd_sw = qd
    mr2 = p.m * p.r * p.r
    c12 = np.cos(q_st - q_sw)
    s12 = np.sin(q_st - q_sw)
    D = np.array(
        [
            [1.25 * mr2, -0.5 * mr2 * c12],
            [-0.5 * mr2 * c12, 0.25 * mr2],
        ]
    )
    C = np.array(
        [
            [0.0, -0.5 * mr2 * qd_sw * s12],
            [0.5 * mr2 * qd_st * s12, 0.0],
        ]
    )
    mgr = p.m * p.g * p.r
    G = np.array([-1.5 * mgr * np.sin(q_st), 0.5 * mgr * np.sin(q_sw)])
    return D, C, G


def swing_accel_batch(q_st, q_sw, qd_st, qd_sw, u, p: ModelParams):
    """Joint accelerations of the swing phase, elementwise over arrays.

    Solves D*qdd = -C*qd - G + [0, u] with the closed-form 2x2 inverse;
    det D = (m^2 r^4 / 16)(5 - 4 cos^2) is bounded away from zero.
    """
    mr2 = p.m * p.r * p.r
    mgr = p.m * p.g * p.r
    c12 = np.cos(q_st - q_sw)
    s12 = np.sin(q_st - q_sw)
    d11 = 1.25 * mr2
    d12 = -0.5 * mr2 * c12
    d22 = 0.25 * mr2
    det = d11 * d22 - d12 * d12
    b1 = 0.5 * mr2 * s12 * qd_sw * qd_sw + 1.5 * mgr * np.sin(q_st)
    b2 = -0.5 * mr2 * s12 * qd_st * qd_st - 0.5 * mgr * np.sin(q_sw) + u
    qdd_st = (d22 * b1 - d12 * b2) / det
    qdd_sw = (d11 * b2 - d12 * b1) / det
    return qdd_st, qdd_sw


def swing_dynamics(x, u: float, p: ModelParams) -> np.ndarray:
    """State derivative [qd_st, qd_sw, qdd_st, qdd_sw] under hip torque u."""
    x = np.asarray(x, dtype=float)
    qdd_st, qdd_sw = swing_accel_batch(x[0], x[1], x[2], x[3], u, p)
    return np.array([x[2], x[3], qdd_st, qdd_sw])


def extended_terms(q_e, qd_e, p: ModelParams):
    """Inertia, Coriolis and gravity terms in extended coordinates.

    Coordinates are [q_st, q_sw, p_x, p_y] with (p_x, p_y) the stance foot
    position, used by the impact model where the foot is momentarily free.
    """
    q_st, q_sw = q_e[0], q_e[1]
    qd_st, qd_sw = qd_e[0], qd_e[1]
    m, r = p.m, p.r
    c_st, s_st = np.cos(q_st), np.sin(q_st)
    c_sw, s_sw = np.cos(q_sw), np.sin(q_sw)

    Ds, Cs, Gs = swing_terms((q_st, q_sw), (qd_st, qd_sw), p)
    D12 = np.array(
        [
            [1.5 * m * r * c_st, -1.5 * m * r * s_st],
            [-0.5 * m * r * c_sw, 0.5 * m * r * s_sw],
        ]
    )
    De = np.zeros((4, 4))
    De[:2, :2] = Ds
    De[:2, 2:] = D12
    De[2:, :2] = D12.T
    De[2:, 2:] = 2.0 * m * np.eye(2)

    C1 = np.array(
        [
            [-1.5 * m * r * qd_st * s_st, 0.5 * m * r * qd_sw * s_sw],
            [-1.5 * m * r * qd_st * c_st, 0.5 * m * r * qd_sw * c_sw],
        ]
    )
    Ce = np.zeros((4, 4))
    Ce[:2, :2] = Cs
    Ce[2:, :2] = C1

    Ge = np.zeros(4)
    Ge[:2] = Gs
    Ge[3] = 2.0 * m * p.g
    return De, Ce, Ge


def swing_foot_kinematics(q, p: ModelParams):
    """Swing-foot position relative to the stance foot, and its Jacobian.

    Returns (pos, E) with pos = r*(sin q_st - sin q_sw, cos q_st - cos q_sw)
    and E = d pos / d q_e, a 2x4 including identity base-point columns.
    """
    q_st, q_sw = q[0], q[1]
    r = p.r
    pos = np.array(
        [r * (np.sin(q_st) - np.sin(q_sw)), r * (np.cos(q_st) - np.cos(q_sw))]
    )
    E = np.array(
        [
            [r * np.cos(q_st), -r * np.cos(q_sw), 1.0, 0.0],
            [-r * np.sin(q_st), r * np.sin(q_sw), 0.0, 1.0],
        ]
    )
    return pos, E


def _impact_system_batch(q_st, q_sw, qd_st, qd_sw, p: ModelParams):
    """Assemble the 6x6 impact system A*[qd_e_plus, F_T, F_N] = b batched.

    Leading input dimensions broadcast; returns (A, b) with shapes
    (..., 6, 6) and (..., 6).
    """
    q_st, q_sw, qd_st, qd_sw = np.broadcast_arrays(
        np.asarray(q_st, float),
        np.asarray(q_sw, float),
        np.asarray(qd_st, float),
        np.asarray(qd_sw, float),
    )
    shape = q_st.shape
    m, r = p.m, p.r
    c_st, s_st = np.cos(q_st), np.sin(q_st)
    c_sw, s_sw = np.cos(q_sw), np.sin(q_sw)
    mr2 = m * r * r
    c12 = np.cos(q_st - q_sw)

    De = np.zeros(shape + (4, 4))
    De[..., 0, 0] = 1.25 * mr2
    De[..., 0, 1] = -0.5 * mr2 * c12
    De[..., 1, 0] = -0.5 * mr2 * c12
    De[..., 1, 1] = 0.25 * mr2
    De[..., 0, 2] = 1.5 * m * r * c_st
    De[..., 0, 3] = -1.5 * m * r * s_st
    De[..., 1, 2] = -0.5 * m * r * c_sw
    De[..., 1, 3] = 0.5 * m * r * s_sw
    De[..., 2, 0] = De[..., 0, 2]
    De[..., 3, 0] = De[..., 0, 3]
    De[..., 2, 1] = De[..., 1, 2]
    De[..., 3, 1] = De[..., 1, 3]
    De[..., 2, 2] = 2.0 * m
    De[..., 3, 3] = 2.0 * m

    E = np.zeros(shape + (2, 4))
    E[..., 0, 0] = r * c_st
    E[..., 0, 1] = -r * c_sw
    E[..., 0, 2] = 1.0
    E[..., 1, 0] = -r * s_st
    E[..., 1, 1] = r * s_sw
    E[..., 1, 3] = 1.0

    A = np.zeros(shape + (6, 6))
    A[..., :4, :4] = De
    A[..., :4, 4:] = -np.swapaxes(E, -1, -2)
    A[..., 4:, :4] = E

    # Pre-impact stance foot is pinned: qd_e_minus = [qd_st, qd_sw, 0, 0].
    b = np.zeros(shape + (6,))
    b[..., :4] = De[..., :, 0] * qd_st[..., None] + De[..., :, 1] * qd_sw[..., None]
    return A, b


def impact_velocity_batch(q_st, q_sw, qd_st, qd_sw, p: ModelParams):
    """Solve the impact system elementwise.

    Returns (qd_e_plus, F_T, F_N) where qd_e_plus has shape (..., 4) in the
    pre-impact labeling (old stance/swing plus old stance-foot velocity).
    """
    A, b = _impact_system_batch(q_st, q_sw, qd_st, qd_sw, p)
    sol = np.linalg.solve(A, b[..., None])[..., 0]
    return sol[..., :4], sol[..., 4], sol[..., 5]


def impact_relabeled_batch(q_st, q_sw, qd_st, qd_sw, p: ModelParams):
    """Post-impact states in the new stance/swing convention, elementwise.

    The stance and swing roles swap: positions exchange and the solved
    post-impact rates follow their legs into the new labels.
    """
    qd_plus, F_T, F_N = impact_velocity_batch(q_st, q_sw, qd_st, qd_sw, p)
    x_plus = np.stack(
        [
            np.broadcast_to(np.asarray(q_sw, float), qd_plus[..., 0].shape),
            np.broadcast_to(np.asarray(q_st, float), qd_plus[..., 0].shape),
            qd_plus[..., 1],
            qd_plus[..., 0],
        ],
        axis=-1,
    )
    return x_plus, F_T, F_N


def impact_map(x_minus, p: ModelParams, cond_limit: float = 1e12) -> ImpactResult:
    """Instantaneous reset map: pre-impact state to relabeled post-impact state.

    Solves the 6x6 linear system coupling the extended-coordinate momentum
    balance with the swing-foot rest condition, then swaps the leg roles.

    Raises SingularImpact if the system's condition number exceeds
    ``cond_limit`` (degenerate configuration).
    """
    x_minus = np.asarray(x_minus, dtype=float)
    A, b = _impact_system_batch(x_minus[0], x_minus[1], x_minus[2], x_minus[3], p)
    if np.linalg.cond(A) > cond_limit:
        raise SingularImpact(
            f"impact system condition number exceeds {cond_limit:g} "
            f"at q=({x_minus[0]:.4f}, {x_minus[1]:.4f})"
        )
    sol = np.linalg.solve(A, b)
    x_plus = np.array([x_minus[1], x_minus[0], sol[1], sol[0]])
    return ImpactResult(x_plus=x_plus, impulse_T=float(sol[4]), impulse_N=float(sol[5]))


def stance_grf_batch(q_st, q_sw, qd_st, qd_sw, u, p: ModelParams):
    """Stance-foot ground reaction from total-momentum balance, elementwise.

    The reaction equals the rate of change of total linear momentum minus
    gravity; the center of mass is the mean of the two midpoint masses.
    """
    qdd_st, qdd_sw = swing_accel_batch(q_st, q_sw, qd_st, qd_sw, u, p)
    m, r, g = p.m, p.r, p.g
    c_st, s_st = np.cos(q_st), np.sin(q_st)
    c_sw, s_sw = np.cos(q_sw), np.sin(q_sw)
    a_x = 0.75 * r * (c_st * qdd_st - s_st * qd_st * qd_st) - 0.25 * r * (
        c_sw * qdd_sw - s_sw * qd_sw * qd_sw
    )
    a_y = -0.75 * r * (s_st * qdd_st + c_st * qd_st * qd_st) + 0.25 * r * (
        s_sw * qdd_sw + c_sw * qd_sw * qd_sw
    )
    F_T = 2.0 * m * a_x
    F_N = 2.0 * m * (a_y + g)
    return F_T, F_N


def stance_grf(x, u: float, p: ModelParams) -> GroundForces:
    """Ground reaction force at the stance foot for state x under torque u."""
    x = np.asarray(x, dtype=float)
    F_T, F_N = stance_grf_batch(x[0], x[1], x[2], x[3], u, p)
    return GroundForces(F_T=float(F_T), F_N=float(F_N))


def mechanical_energy(x, p: ModelParams):
    """Kinetic and potential energy (J) of the pinned swing phase."""
    x = np.asarray(x, dtype=float)
    D, _, _ = swing_terms(x[:2], x[2:], p)
    ke = 0.5 * x[2:] @ D @ x[2:]
    mgr = p.m * p.g * p.r
    pe = 1.5 * mgr * np.cos(x[0]) - 0.5 * mgr * np.cos(x[1])
    return float(ke), float(pe)


def swing_foot_height_batch(q_st, q_sw, p: ModelParams):
    """Swing-foot height above ground, elementwise."""
    return p.r * (np.cos(q_st) - np.cos(q_sw))


def swing_foot_position_batch(q_st, q_sw, p: ModelParams):
    """Swing-foot (x, y) relative to the stance foot, elementwise."""
    px = p.r * (np.sin(q_st) - np.sin(q_sw))
    py = p.r * (np.cos(q_st) - np.cos(q_sw))
    return px, py


def kinetic_energy_extended(q_e, qd_e, p: ModelParams) -> float:
    """Kinetic energy in extended coordinates (free stance-foot base point)."""
    De, _, _ = extended_terms(np.asarray(q_e, float), np.asarray(qd_e, float), p)
    qd = np.asarray(qd_e, float)
    return float(0.5 * qd @ De @ qd)
