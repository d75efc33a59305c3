"""Cyclic-gait synthesis for a planar compass-gait biped.

The package covers the full pipeline: rigid-body mechanics of the two-link
walker (``dynamics``), hybrid swing/impact simulation (``hybridsim``),
trapezoidal collocation transcription (``transcribe``), an augmented-
Lagrangian NLP solver (``nlp``), verified gait synthesis plus the sweep
catalog (``catalog``), animation frame sampling (``frames``), and the
CLI / HTTP service layer (``cli``, ``service``).
"""

from .model import ModelParams, load_params, params_from_dict
from .dynamics import (
    GroundForces,
    ImpactResult,
    SingularImpact,
    impact_map,
    mechanical_energy,
    stance_grf,
    swing_dynamics,
    swing_foot_kinematics,
)
from .hybridsim import (
    ControlSignal,
    IntegrationFailure,
    IntegratorOptions,
    NoImpact,
    RolloutError,
    StepTrace,
    integrate_swing,
    periodicity_residual,
    rollout,
)
from .transcribe import CostMode, DecisionLayout, GaitSpec, assemble, initial_guess, layout
from .nlp import (
    InvalidStart,
    KktRecord,
    NlpProblem,
    NlpSolution,
    SolveStatus,
    SolverOptions,
    check_kkt,
    solve,
)
from .catalog import (
    CatalogEntry,
    Gait,
    GaitCatalog,
    SynthesisFailed,
    load,
    resimulate,
    save,
    sweep,
    synthesize,
)
from .frames import frames_for_gait, frames_payload

__version__ = "0.1.0"

__all__ = [
    "CatalogEntry",
    "ControlSignal",
    "CostMode",
    "DecisionLayout",
    "Gait",
    "GaitCatalog",
    "GaitSpec",
    "GroundForces",
    "ImpactResult",
    "IntegrationFailure",
    "IntegratorOptions",
    "InvalidStart",
    "KktRecord",
    "ModelParams",
    "NlpProblem",
    "NlpSolution",
    "NoImpact",
    "RolloutError",
    "SingularImpact",
    "SolveStatus",
    "SolverOptions",
    "StepTrace",
    "SynthesisFailed",
    "assemble",
    "check_kkt",
    "frames_for_gait",
    "frames_payload",
    "impact_map",
    "initial_guess",
    "integrate_swing",
    "layout",
    "load",
    "load_params",
    "mechanical_energy",
    "params_from_dict",
    "periodicity_residual",
    "resimulate",
    "rollout",
    "save",
    "solve",
    "stance_grf",
    "swing_dynamics",
    "swing_foot_kinematics",
    "sweep",
    "synthesize",
    "__version__",
]
