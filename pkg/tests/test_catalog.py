"""Synthesis pipeline, persistence, and the canonical serializer."""

import json

import numpy as np
import pytest

from gaitforge import catalog, dynamics, hybridsim
from gaitforge.model import ModelParams
from gaitforge.transcribe import CostMode, GaitSpec


# ---------------------------------------------------------------------------
# Verified synthesis
# ---------------------------------------------------------------------------


def test_fixture_gait_is_fully_verified(gait_t2_05):
    d = gait_t2_05.diagnostics
    assert d["defect_max"] <= catalog.DEFECT_TOL
    assert d["periodicity_residual"] <= catalog.PERIODICITY_TOL
    assert d["placement_error"] <= catalog.PLACEMENT_TOL
    assert d["path_max"] <= catalog.PATH_TOL
    assert d["resim_time_error"] <= catalog.RESIM_REL_TOL
    assert d["resim_footplace_error"] <= catalog.RESIM_REL_TOL
    assert d["solver_outer_iterations"] >= 1


def test_gait_arrays_are_consistent(gait_t2_05, params):
    g = gait_t2_05
    v = g.spec.v
    assert g.nodes.shape == (v,)
    assert g.states.shape == (v, 4)
    assert g.inputs.shape == (v,)
    assert g.grf.shape == (v, 2)
    assert g.nodes[0] == 0.0
    assert g.nodes[-1] == pytest.approx(g.t_f, abs=1e-12)
    # stored reactions must match the dynamics at the stored trajectory
    f_t, f_n = dynamics.stance_grf_batch(
        g.states[:, 0], g.states[:, 1], g.states[:, 2], g.states[:, 3], g.inputs, params
    )
    np.testing.assert_allclose(g.grf, np.column_stack([f_t, f_n]), atol=1e-12)
    assert np.all(g.grf[:, 1] > 0.0)


def test_resimulate_matches_recorded_diagnostics(gait_t2_05):
    trace, time_err, place_err = catalog.resimulate(gait_t2_05)
    assert time_err == gait_t2_05.diagnostics["resim_time_error"]
    assert place_err == gait_t2_05.diagnostics["resim_footplace_error"]
    assert isinstance(trace, hybridsim.StepTrace)
    assert trace.t_f == pytest.approx(gait_t2_05.t_f, rel=catalog.RESIM_REL_TOL)


def test_repeat_synthesis_is_bit_identical(gait_t2_05, params):
    spec = GaitSpec(tl=0.5, cost_mode=CostMode.TORQUE_SQUARED, params=params)
    again = catalog.synthesize(spec)
    assert np.array_equal(again.states, gait_t2_05.states)
    assert np.array_equal(again.inputs, gait_t2_05.inputs)
    assert np.array_equal(again.nodes, gait_t2_05.nodes)
    assert again.t_f == gait_t2_05.t_f
    assert again.J_star == gait_t2_05.J_star


def test_unreachable_step_length_fails_fast(params):
    spec = GaitSpec(tl=2.5, cost_mode=CostMode.TORQUE_SQUARED, params=params)
    with pytest.raises(catalog.SynthesisFailed) as info:
        catalog.synthesize(spec)
    assert info.value.failed_check == "kinematic_reach"
    assert info.value.violations() == {}


# ---------------------------------------------------------------------------
# Catalog container and persistence
# ---------------------------------------------------------------------------


def small_catalog(gait, params):
    entries = (
        catalog.CatalogEntry(
            tl=0.5, cost_mode=CostMode.TORQUE_SQUARED, gait=gait, status="verified"
        ),
        catalog.CatalogEntry(
            tl=0.7, cost_mode=CostMode.CONSTANT, gait=None, status="failed:solver",
            failure={"eq_violation": 0.25, "in_violation": 0.0, "stationarity": 3e-3},
        ),
    )
    grid = {
        "tl": [0.5, 0.7],
        "cost_modes": ["torque2", "constant"],
        "v": 25,
        "t_f_bounds": [0.2, 2.0],
    }
    return catalog.GaitCatalog(params=params, entries=entries, grid=grid)


def test_lookup_by_key(gait_t2_05, params):
    cat = small_catalog(gait_t2_05, params)
    hit = cat.get(0.5, "torque2")
    assert hit is not None and hit.gait is gait_t2_05
    assert cat.get(0.5, CostMode.TORQUE_SQUARED) is hit
    assert cat.get(0.5000004, "torque2") is hit  # keys round to 1e-6
    assert cat.get(0.5, "constant") is None
    assert [g.spec.tl for g in cat.verified()] == [0.5]


def test_save_load_round_trip_is_exact(tmp_path, gait_t2_05, params):
    cat = small_catalog(gait_t2_05, params)
    path = tmp_path / "cat.json"
    catalog.save(cat, path)
    back = catalog.load(path)

    assert back.params == params
    assert back.grid == cat.grid
    assert len(back.entries) == 2
    g = back.get(0.5, "torque2").gait
    assert np.array_equal(g.states, gait_t2_05.states)
    assert np.array_equal(g.inputs, gait_t2_05.inputs)
    assert np.array_equal(g.nodes, gait_t2_05.nodes)
    assert g.t_f == gait_t2_05.t_f
    assert g.J_star == gait_t2_05.J_star
    assert g.diagnostics == gait_t2_05.diagnostics
    fail = back.get(0.7, "constant")
    assert fail.gait is None
    assert fail.status == "failed:solver"
    assert fail.failure == {"eq_violation": 0.25, "in_violation": 0.0,
                            "stationarity": 3e-3}
    # a second save of the loaded catalog must be byte-identical
    path2 = tmp_path / "cat2.json"
    catalog.save(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema": "gaitforge-catalog/999", "entries": []}))
    with pytest.raises(ValueError, match="schema"):
        catalog.load(path)


def test_label_attaches_without_mutating(gait_t2_05, params):
    cat = small_catalog(gait_t2_05, params)
    tagged = cat.label(0.5, "torque2", "lope")
    assert tagged is not cat
    assert tagged.get(0.5, "torque2").gait.label == "lope"
    assert cat.get(0.5, "torque2").gait.label is None
    # overwrite wins, original still untouched
    again = tagged.label(0.5, "torque2", "stride")
    assert again.get(0.5, "torque2").gait.label == "stride"
    assert tagged.get(0.5, "torque2").gait.label == "lope"


def test_label_errors(gait_t2_05, params):
    cat = small_catalog(gait_t2_05, params)
    with pytest.raises(KeyError):
        cat.label(0.9, "torque2", "x")  # no such entry
    with pytest.raises(KeyError):
        cat.label(0.7, "constant", "x")  # entry holds no gait


def test_style_labels_fixture():
    labels = catalog.style_labels()
    assert labels["lope"] == (0.8, "torque2")
    for name, (tl, mode) in labels.items():
        assert 0.0 < tl < 2.0
        CostMode.from_name(mode)  # every pairing names a real cost


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def test_canonical_json_scalars():
    f = catalog.canonical_json
    assert f(None) == "null"
    assert f(True) == "true"
    assert f(False) == "false"
    assert f(3) == "3"
    assert f("a\"b") == '"a\\"b"'
    assert f(0.1) == "0.10000000000000001"
    assert f(1.0) == "1"
    assert f(float("nan")) == "null"
    assert f(float("inf")) == "null"


def test_canonical_json_aggregates():
    f = catalog.canonical_json
    assert f([1, 2.5, None]) == "[1,2.5,null]"
    assert f({"b": 1, "a": [True]}) == '{"b":1,"a":[true]}'  # insertion order kept
    with pytest.raises(TypeError):
        f({"x": {1, 2}})


def test_canonical_json_round_trips_doubles():
    rng = np.random.default_rng(3)
    values = [float(v) for v in rng.standard_normal(50) * 10.0 ** rng.integers(-8, 8, 50)]
    parsed = json.loads(catalog.canonical_json({"v": values}))
    assert parsed["v"] == values
