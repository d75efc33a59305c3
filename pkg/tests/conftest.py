"""Shared fixtures: default model parameters and one solved reference gait."""

import pytest

from gaitforge import catalog
from gaitforge.model import ModelParams
from gaitforge.transcribe import CostMode, GaitSpec


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def gait_t2_05(params):
    """One verified reference gait (TL=0.5, quadratic torque cost).

    Solved once per session; integration-level suites treat it as a
    known-good artifact rather than re-deriving it per test.
    """
    spec = GaitSpec(tl=0.5, cost_mode=CostMode.TORQUE_SQUARED, params=params)
    return catalog.synthesize(spec)
