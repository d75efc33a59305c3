"""Gait synthesis pipeline and the persisted gait palette.

``synthesize`` turns a gait request into a verified Gait: transcribe,
solve, re-check every constraint from the raw trajectories, then close
the loop by resimulating the optimized control through the hybrid
stepper.  ``sweep`` runs the style grid (step length x cost mode) with
warm starting along each cost lane and collects the results into a
``GaitCatalog`` that serializes to versioned, canonically formatted JSON.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import dynamics, hybridsim
from .model import ModelParams, params_from_dict
from .nlp import NlpSolution, SolveStatus, SolverOptions, solve
from .transcribe import (
    CostMode,
    GaitSpec,
    assemble,
    boundary_constraints,
    defect_constraints,
    initial_guess,
    kinematic_guess,
    layout,
    path_constraints,
)

log = logging.getLogger(__name__)

CATALOG_SCHEMA = "gaitforge-catalog/1"

# Post-solve verification thresholds, applied to raw (unscaled)
# residuals recomputed from the returned trajectories.
DEFECT_TOL = 1e-6
PERIODICITY_TOL = 1e-4
PLACEMENT_TOL = 1e-6
PATH_TOL = 1e-8
RESIM_REL_TOL = 0.02

# Continuation weights for costs that are linear in the torque: solve
# with a small quadratic torque term first (giving the quasi-Newton
# inner iteration real curvature), then drop it.
_U_REG_LADDER = (1e-1, 1e-2)


class SynthesisFailed(Exception):
    """Synthesis did not produce a verified gait.

    Carries the solver outcome and which post-check failed so sweeps can
    record forensically useful entries instead of aborting.
    """

    def __init__(self, status: str, failed_check: str, detail: str,
                 solution: NlpSolution | None = None,
                 gait: "Gait | None" = None):
        super().__init__(f"{failed_check}: {detail}")
        self.status = status
        self.failed_check = failed_check
        self.detail = detail
        self.solution = solution
        # Converged trajectory behind a post-check failure, if any: not a
        # usable gait, but still the best available warm start nearby.
        self.gait = gait

    def violations(self) -> dict[str, float]:
        """Final residual norms for the catalog's failure record."""
        if self.solution is None:
            return {}
        k = self.solution.kkt
        return {
            "eq_violation": float(k.eq_violation),
            "in_violation": float(k.in_violation),
            "stationarity": float(k.stationarity),
        }


@dataclass(frozen=True, eq=False)
class Gait:
    """One verified periodic step.

    ``nodes`` is the collocation time grid (v,), ``states`` the node
    states (v, 4), ``inputs`` the hip torque at nodes (v,) and ``grf``
    the stance-foot ground reaction [F_T, F_N] at nodes (v, 2).
    ``diagnostics`` holds the verification measurements; ``label`` is a
    free-form style tag with no semantics in code.
    """

    spec: GaitSpec
    t_f: float
    nodes: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    grf: np.ndarray
    J_star: float
    diagnostics: dict[str, float]
    label: str | None = None

    def to_dict(self) -> dict:
        d = {
            "tl": float(self.spec.tl),
            "cost_mode": self.spec.cost_mode.value,
            "t_f": float(self.t_f),
            "nodes": [float(t) for t in self.nodes],
            "states": [[float(v) for v in row] for row in self.states],
            "inputs": [float(u) for u in self.inputs],
            "grf": [[float(v) for v in row] for row in self.grf],
            "J_star": float(self.J_star),
            "diagnostics": {k: float(v) for k, v in sorted(self.diagnostics.items())},
        }
        if self.label is not None:
            d["label"] = str(self.label)
        d["status"] = "verified"
        return d


def gait_from_dict(d: dict, params: ModelParams,
                   t_f_bounds: tuple[float, float] = (0.2, 2.0)) -> Gait:
    """Rebuild a Gait from its serialized entry."""
    nodes = np.asarray(d["nodes"], dtype=float)
    spec = GaitSpec(
        tl=float(d["tl"]),
        cost_mode=CostMode.from_name(d["cost_mode"]),
        v=len(nodes),
        t_f_bounds=tuple(t_f_bounds),
        params=params,
    )
    return Gait(
        spec=spec,
        t_f=float(d["t_f"]),
        nodes=nodes,
        states=np.asarray(d["states"], dtype=float),
        inputs=np.asarray(d["inputs"], dtype=float),
        grf=np.asarray(d["grf"], dtype=float),
        J_star=float(d["J_star"]),
        diagnostics={k: float(v) for k, v in d["diagnostics"].items()},
        label=d.get("label"),
    )


def resimulate(gait: Gait) -> tuple[hybridsim.StepTrace, float, float]:
    """Replay the gait's interpolated control through the hybrid stepper.

    Returns (trace, relative impact-time error, relative foot-placement
    error).  The start state is the gait's first node; the control is the
    node torque profile interpolated piecewise-linearly in time.
    """
    p = gait.spec.params
    ctrl = hybridsim.ControlSignal.sampled(gait.nodes, gait.inputs)
    trace = hybridsim.integrate_swing(gait.states[0], ctrl, p)
    time_err = abs(trace.t_f - gait.t_f) / gait.t_f
    pos, _ = dynamics.swing_foot_kinematics(trace.states[-1, :2], p)
    place_err = abs(float(pos[0]) - gait.spec.tl) / gait.spec.tl
    return trace, time_err, place_err


def _default_options(spec: GaitSpec) -> SolverOptions:
    """Solver settings by cost character.

    A quadratic torque term (native or via ``u_reg``) gives the inner
    iteration enough curvature that the defaults converge quickly; the
    torque-linear costs spend nearly all their time in the tangential
    endgame walking a bang-bang valley, so they get a larger endgame
    allowance.
    """
    if spec.cost_mode is CostMode.TORQUE_SQUARED or spec.u_reg > 0.0:
        return SolverOptions()
    return SolverOptions(max_endgames=30)


def _continuation_start(spec: GaitSpec, z0: np.ndarray) -> np.ndarray:
    """March the quadratic-torque weight down toward the real problem."""
    z = z0
    for eps in _U_REG_LADDER:
        reg_spec = replace(spec, u_reg=eps)
        sol = solve(assemble(reg_spec), z, _default_options(reg_spec))
        if sol.status in (SolveStatus.CONVERGED, SolveStatus.MAX_ITER):
            z = sol.z_star
    return z


def _candidate_starts(spec: GaitSpec, warm: Gait | None):
    """Yield starting vectors in decreasing order of expected quality."""
    if warm is not None:
        warm_tuple = (warm.nodes, warm.states, warm.inputs, warm.t_f)
        yield initial_guess(spec, warm=warm_tuple)
    if spec.cost_mode is CostMode.TORQUE_SQUARED:
        yield kinematic_guess(spec)
        yield initial_guess(spec)
    else:
        # Bootstrap through the strongly convex cost, then walk the
        # quadratic-torque weight down; the final solve starts near the
        # real problem's optimum basin.
        t2_spec = replace(spec, cost_mode=CostMode.TORQUE_SQUARED, u_reg=0.0)
        t2 = solve(assemble(t2_spec), kinematic_guess(t2_spec),
                   _default_options(t2_spec))
        yield _continuation_start(spec, t2.z_star)
        yield kinematic_guess(spec)


def _verify(spec: GaitSpec, sol: NlpSolution) -> tuple[Gait, str | None]:
    """Re-derive every guarantee from the raw trajectories.

    Returns the assembled Gait and the name of the first failed check
    (None when fully verified).  Diagnostics are attached either way.
    """
    lay = layout(spec)
    states, inputs, t_f = lay.unpack(sol.z_star)
    nodes = np.linspace(0.0, t_f, spec.v)
    f_t, f_n = dynamics.stance_grf_batch(
        states[:, 0], states[:, 1], states[:, 2], states[:, 3], inputs, spec.params
    )
    grf = np.stack([f_t, f_n], axis=1)

    defect_max = float(np.max(np.abs(defect_constraints(sol.z_star, spec))))
    boundary = boundary_constraints(sol.z_star, spec)
    placement = float(np.max(np.abs(boundary[:2])))
    periodicity = float(hybridsim.periodicity_residual(states, spec.params))
    path_max = float(np.max(path_constraints(sol.z_star, spec)))

    gait = Gait(
        spec=spec,
        t_f=float(t_f),
        nodes=nodes,
        states=states,
        inputs=inputs,
        grf=grf,
        J_star=float(sol.J_star),
        diagnostics={
            "defect_max": defect_max,
            "periodicity_residual": periodicity,
            "placement_error": placement,
            "path_max": path_max,
            "resim_footplace_error": float("nan"),
            "resim_time_error": float("nan"),
            "solver_outer_iterations": float(len(sol.history)),
            "solver_inner_iterations": float(sol.iterations),
        },
    )

    if defect_max > DEFECT_TOL:
        return gait, "defects"
    if placement > PLACEMENT_TOL:
        return gait, "placement"
    if periodicity > PERIODICITY_TOL:
        return gait, "periodicity"
    if path_max > PATH_TOL:
        return gait, "path"

    try:
        _, time_err, place_err = resimulate(gait)
    except (hybridsim.NoImpact, hybridsim.IntegrationFailure) as exc:
        gait.diagnostics["resim_footplace_error"] = float("inf")
        gait.diagnostics["resim_time_error"] = float("inf")
        return gait, "resim_event"
    gait.diagnostics["resim_footplace_error"] = float(place_err)
    gait.diagnostics["resim_time_error"] = float(time_err)
    if time_err > RESIM_REL_TOL:
        return gait, "resim_time"
    if place_err > RESIM_REL_TOL:
        return gait, "resim_footplace"
    return gait, None


_REFINE_V_CAP = 161


def _refine_target_v(v: int, diag: dict[str, float]) -> int:
    """Grid density predicted to bring the replay errors inside the gate.

    Replay error scales like h^2, so aiming the worst measured error at
    half the tolerance needs the node spacing shrunk by
    sqrt(2 * err / tol).  When the replay produced no event at all there
    is no error signal; fall back to doubling.
    """
    worst = max(
        diag.get("resim_time_error", np.inf), diag.get("resim_footplace_error", np.inf)
    )
    if not np.isfinite(worst):
        return 2 * v - 1
    shrink = np.sqrt(2.0 * worst / RESIM_REL_TOL)
    return int(np.ceil((v - 1) * max(shrink, 2.0))) + 1


def _refine(spec: GaitSpec, gait: Gait,
            opts: SolverOptions | None) -> Gait | None:
    """Re-solve on a finer time grid when only closed-loop replay failed.

    Trapezoidal collocation leaves an O(h^2) model error that the swing
    dynamics amplify exponentially over the step, so a solution can
    satisfy every node constraint yet drift past the resimulation gates.
    The rung is chosen from the measured error; one further rung is tried
    if the first lands short, each warm-started from the previous.
    """
    warm = gait
    for _ in range(2):
        v_next = _refine_target_v(warm.spec.v, warm.diagnostics)
        if v_next > _REFINE_V_CAP:
            return None
        fine_spec = replace(spec, v=v_next)
        z0 = initial_guess(
            fine_spec, warm=(warm.nodes, warm.states, warm.inputs, warm.t_f)
        )
        # The resampled start is structurally excellent but carries the
        # coarse grid's O(h^2) defect error, far above the solver's
        # near-feasible fast path; a stiff starting penalty skips the
        # soft-penalty outer rounds that would just wander off and back.
        base = opts or _default_options(fine_spec)
        refine_opts = replace(base, rho0=max(base.rho0, 1e4))
        sol = solve(assemble(fine_spec), z0, refine_opts)
        if sol.status is not SolveStatus.CONVERGED:
            return None
        fine, bad = _verify(fine_spec, sol)
        log.info(
            "refine %s tl=%.3f at v=%d: %s",
            spec.cost_mode.value, spec.tl, fine_spec.v, bad or "verified",
        )
        if bad is None:
            return fine
        if not bad.startswith("resim"):
            return None
        warm = fine
    return None


def synthesize(spec: GaitSpec, warm: Gait | None = None,
               opts: SolverOptions | None = None) -> Gait:
    """Solve a gait request end to end and verify the result.

    A Gait is returned only when the solver converged and the solution
    re-verifies from its raw trajectories, including closed-loop
    resimulation placing the swing foot within 2% of the requested step
    length.  When replay alone fails, the solve is retried on finer time
    grids before giving up (the returned Gait then carries the finer
    grid).  Raises SynthesisFailed otherwise.
    """
    p = spec.params
    if spec.tl >= 2.0 * p.r:
        raise SynthesisFailed(
            "infeasible", "kinematic_reach",
            f"step length {spec.tl} exceeds the kinematic maximum 2r = {2 * p.r}",
        )

    prob = assemble(spec)
    last: NlpSolution | None = None
    failed_gait: Gait | None = None
    failed_check = "solver"
    detail = "no starting point attempted"
    saw_verify_failure = False
    refine_tried = False
    for z0 in _candidate_starts(spec, warm):
        sol = solve(prob, z0, opts or _default_options(spec))
        if sol.status is not SolveStatus.CONVERGED:
            if not saw_verify_failure:
                last = sol
                failed_check = "solver"
                detail = f"solver finished {sol.status.name}"
            continue
        gait, bad = _verify(spec, sol)
        if bad is None:
            return gait
        if bad.startswith("resim") and not refine_tried:
            # Refinement depends only on the converged optimum, and later
            # starting points reconverge to the same one, so a second
            # attempt would redo the same solve.
            refine_tried = True
            refined = _refine(spec, gait, opts)
            if refined is not None:
                return refined
        # A converged solve that failed a post-check is more informative
        # than a later start that merely diverged; keep the first one.
        if not saw_verify_failure:
            saw_verify_failure = True
            last = sol
            failed_check = bad
            detail = f"post-check {bad} failed"
            failed_gait = gait
    raise SynthesisFailed(
        last.status.name.lower() if last is not None else "invalid",
        failed_check, detail, last, gait=failed_gait,
    )


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """One sweep cell: a verified gait or a recorded failure."""

    tl: float
    cost_mode: CostMode
    gait: Gait | None
    status: str            # "verified" or "failed:<check>"
    failure: dict | None = None

    def to_dict(self) -> dict:
        if self.gait is not None:
            return self.gait.to_dict()
        d = {
            "tl": float(self.tl),
            "cost_mode": self.cost_mode.value,
            "diagnostics": {k: float(v) for k, v in sorted((self.failure or {}).items())},
            "status": self.status,
        }
        return d


def _entry_key(tl: float, cost_mode) -> tuple[float, str]:
    mode = cost_mode if isinstance(cost_mode, CostMode) else CostMode.from_name(cost_mode)
    return (round(float(tl), 6), mode.value)


@dataclass(frozen=True, eq=False)
class GaitCatalog:
    """The gait palette: sweep results plus everything needed to redo them."""

    params: ModelParams
    entries: tuple[CatalogEntry, ...]
    grid: dict
    solver_opts: dict = field(default_factory=dict)

    def key_index(self) -> dict[tuple[float, str], CatalogEntry]:
        return {_entry_key(e.tl, e.cost_mode): e for e in self.entries}

    def get(self, tl: float, cost_mode) -> CatalogEntry | None:
        return self.key_index().get(_entry_key(tl, cost_mode))

    def verified(self) -> list[Gait]:
        return [e.gait for e in self.entries if e.gait is not None]

    def label(self, tl: float, cost_mode, text: str) -> "GaitCatalog":
        """Return a copy with the entry's label attached/overwritten."""
        key = _entry_key(tl, cost_mode)
        found = False
        new_entries = []
        for e in self.entries:
            if _entry_key(e.tl, e.cost_mode) == key:
                found = True
                if e.gait is None:
                    raise KeyError(f"entry {key} holds no verified gait to label")
                new_entries.append(replace(e, gait=replace(e.gait, label=str(text))))
            else:
                new_entries.append(e)
        if not found:
            raise KeyError(f"no catalog entry for {key}")
        return replace(self, entries=tuple(new_entries))

    def to_dict(self) -> dict:
        return {
            "schema": CATALOG_SCHEMA,
            "params": self.params.to_config_dict(),
            "solver_opts": self.solver_opts,
            "grid": self.grid,
            "entries": [e.to_dict() for e in self.entries],
        }


def sweep(tl_grid: Sequence[float], cost_modes: Iterable, p: ModelParams,
          v: int = 25, opts: SolverOptions | None = None) -> GaitCatalog:
    """Synthesize the style grid, warm-starting along each cost lane.

    Iteration is cost-major with TL ascending; each solve warm-starts
    from the nearest previously converged TL in the same lane.  Failures
    are recorded per entry and never abort the sweep.
    """
    tls = sorted(float(t) for t in tl_grid)
    modes = [m if isinstance(m, CostMode) else CostMode.from_name(m) for m in cost_modes]
    if tls and not (0.0 < tls[0] and tls[-1] < 2.0 * p.r):
        raise ValueError(
            f"TL grid must lie inside (0, 2r) = (0, {2 * p.r}); got "
            f"[{tls[0]}, {tls[-1]}]"
        )

    entries: list[CatalogEntry] = []
    for mode in modes:
        lane: list[tuple[float, Gait, int]] = []  # (tl, gait, outer iterations)
        cold_iters: int | None = None
        for tl in tls:
            spec = GaitSpec(tl=tl, cost_mode=mode, v=v, params=p)
            warm = min(lane, key=lambda item: abs(item[0] - tl))[1] if lane else None
            try:
                gait = synthesize(spec, warm=warm, opts=opts)
            except SynthesisFailed as exc:
                entries.append(CatalogEntry(
                    tl=tl, cost_mode=mode, gait=None,
                    status=f"failed:{exc.failed_check}",
                    failure=exc.violations(),
                ))
                log.info("sweep %s tl=%.3f failed (%s)", mode.value, tl, exc.failed_check)
                continue
            iters = _solution_iterations(gait)
            if warm is None:
                cold_iters = iters
            else:
                log.info(
                    "sweep %s tl=%.3f warm iterations %s vs lane cold %s",
                    mode.value, tl, iters, cold_iters,
                )
            lane.append((tl, gait, iters))
            entries.append(CatalogEntry(
                tl=tl, cost_mode=mode, gait=gait, status="verified",
            ))
            log.info("sweep %s tl=%.3f verified J=%.6g", mode.value, tl, gait.J_star)

    grid = {
        "tl": [float(t) for t in tls],
        "cost_modes": [m.value for m in modes],
        "v": int(v),
        "t_f_bounds": [0.2, 2.0],
    }
    return GaitCatalog(params=p, entries=tuple(entries), grid=grid)


def _solution_iterations(gait: Gait) -> int:
    """Outer-iteration count recorded during synthesis (0 if not kept)."""
    return int(gait.diagnostics.get("solver_outer_iterations", 0))


def style_labels() -> dict[str, tuple[float, str]]:
    """The shipped style-word fixture: label -> (tl, cost_mode).

    The pairings are implementer-chosen to visually match each word and
    are explicitly non-normative; nothing downstream depends on them.
    """
    import importlib.resources as resources

    raw = json.loads(
        resources.files("gaitforge").joinpath("data/style_labels.json").read_text()
    )
    return {
        name: (float(d["tl"]), str(d["cost_mode"]))
        for name, d in raw["labels"].items()
    }


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    """Serialize one JSON scalar/aggregate deterministically.

    Floats print with up to 17 significant digits (%.17g), enough to
    round-trip IEEE doubles exactly; non-finite floats become null.
    """
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            return "null"
        return f"{value:.17g}"
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_fmt(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} canonically")


def canonical_json(obj) -> str:
    """Deterministic JSON text: fixed key order, %.17g floats, no spaces.

    Every producer (file save, CLI output, HTTP responses) goes through
    this one formatter so identical data yields identical bytes.
    """
    return _fmt(obj)


def save(cat: GaitCatalog, path) -> None:
    """Write the catalog as versioned canonical JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(cat.to_dict()))
        fh.write("\n")


def load(path) -> GaitCatalog:
    """Read a catalog written by ``save``; rejects unknown schema versions."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    schema = raw.get("schema")
    if schema != CATALOG_SCHEMA:
        raise ValueError(
            f"unsupported catalog schema {schema!r} (expected {CATALOG_SCHEMA!r})"
        )
    p = params_from_dict(raw["params"])
    grid = raw.get("grid", {})
    t_f_bounds = tuple(grid.get("t_f_bounds", (0.2, 2.0)))
    entries = []
    for e in raw["entries"]:
        if e["status"] == "verified":
            gait = gait_from_dict(e, p, t_f_bounds)
            entries.append(CatalogEntry(
                tl=float(e["tl"]), cost_mode=gait.spec.cost_mode,
                gait=gait, status="verified",
            ))
        else:
            entries.append(CatalogEntry(
                tl=float(e["tl"]),
                cost_mode=CostMode.from_name(e["cost_mode"]),
                gait=None, status=str(e["status"]),
                failure={k: float(v) for k, v in e.get("diagnostics", {}).items()},
            ))
    return GaitCatalog(
        params=p, entries=tuple(entries), grid=grid,
        solver_opts=raw.get("solver_opts", {}),
    )
