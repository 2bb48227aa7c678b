from __future__ import annotations

import numpy as np
import pytest

from wifidiag import config as cfgmod
from wifidiag import dataset
from wifidiag.core import (
    FaultSpec,
    FaultType,
    Scenario,
    ScenarioKind,
    WindowSchedule,
    build_topology,
    build_traffic_profile,
    sample_severity,
)
from wifidiag.sim import run_window


def make_fault(fault_type: FaultType, target=2, seed=5, second=None, injected_at=60):
    if fault_type == FaultType.NORMAL:
        return FaultSpec(FaultType.NORMAL, None, injected_at)
    severity = sample_severity(fault_type, np.random.default_rng(seed))
    if fault_type == FaultType.HIDDEN_NODE and second is None:
        second = 3 if target != 3 else 4
    return FaultSpec(fault_type, target, injected_at, severity, second)


@pytest.fixture(scope="session")
def h2h_setup():
    scenario = Scenario(ScenarioKind.H2H_APSTA)
    topo = build_topology(scenario, 7, 42)
    traffic = build_traffic_profile(scenario, topo, 42)
    return scenario, topo, traffic, WindowSchedule()


@pytest.fixture(scope="session")
def trace_factory(h2h_setup):
    scenario, topo, traffic, schedule = h2h_setup

    def make(fault_type: FaultType, seed: int = 5, target: int = 2):
        return run_window(scenario, topo, traffic,
                          make_fault(fault_type, target=target, seed=seed),
                          schedule, seed)

    return make


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 72-sample corpus shared by dataset/preprocess/diagnosis tests."""
    cfg = cfgmod.RunConfig()
    cfg.corpus.counts = {"h2h_apsta": 24, "iot_apsta": 24, "iot_adhoc": 24}
    cfg.corpus.base_seed = 4242
    out = tmp_path_factory.mktemp("corpus")
    manifest = dataset.generate_corpus(cfg, out)
    train, test = dataset.split_corpus(manifest, cfg.split.ratio, cfg.split.seed)
    dataset.save_split(out, train, test, cfg.split.ratio, cfg.split.seed, cfg.data_hash())
    return cfg, out, manifest, train, test
