"""Shared fixtures: simulated traces for the shipped scenarios.

Simulations are run once per session and shared; the heavyweight ones are
behind session-scoped fixtures so unit-test-only runs stay fast.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from oscilloc import grid_sim
from oscilloc.scenario import builtin_scenario_path, load_scenario


def _run(name, **sim_overrides):
    scn = load_scenario(builtin_scenario_path(name))
    if sim_overrides:
        scn = dataclasses.replace(
            scn, sim=dataclasses.replace(scn.sim, **sim_overrides))
    return scn, grid_sim.run_scenario(scn)


@pytest.fixture(scope="session")
def table1_run():
    return _run("table1_single_vsc")


@pytest.fixture(scope="session")
def case_study_run():
    return _run("case_study")


@pytest.fixture(scope="session")
def lc_resonance_run():
    return _run("lc_resonance")


@pytest.fixture()
def rng():
    return np.random.default_rng(20260825)
