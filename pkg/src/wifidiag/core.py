"""Shared domain model: wireless scenarios, topologies, traffic profiles,
the fault taxonomy, and the observation-window schedule.

All types here are immutable values; they can be shared freely between
concurrent workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

NodeId = int


class ConfigurationError(ValueError):
    """Raised for invalid generator / simulator configuration."""


# --------------------------------------------------------------------------
# Scenarios
# --------------------------------------------------------------------------

class ScenarioKind(str, enum.Enum):
    H2H_APSTA = "h2h_apsta"
    IOT_APSTA = "iot_apsta"
    IOT_ADHOC = "iot_adhoc"


class TopologyMode(str, enum.Enum):
    INFRASTRUCTURE = "infrastructure"
    ADHOC = "adhoc"


class TrafficMode(str, enum.Enum):
    H2H = "h2h"
    IOT = "iot"


@dataclass(frozen=True)
class Scenario:
    """One of the three workload scenarios.

    Human-driven traffic is only ever paired with infrastructure
    topologies; ad hoc deployments carry device-style traffic.
    """

    kind: ScenarioKind

    @property
    def traffic_mode(self) -> TrafficMode:
        return TrafficMode.H2H if self.kind == ScenarioKind.H2H_APSTA else TrafficMode.IOT

    @property
    def topology_mode(self) -> TopologyMode:
        return TopologyMode.ADHOC if self.kind == ScenarioKind.IOT_ADHOC else TopologyMode.INFRASTRUCTURE


ALL_SCENARIOS = tuple(Scenario(k) for k in ScenarioKind)

RSSI_MIN_DBM = -95.0
RSSI_MAX_DBM = -20.0
NORMAL_RSSI_RANGE = (-78.0, -42.0)


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    rssi_dbm: float
    carrier_sense: bool = True

    def key(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeId, ...]
    mode: TopologyMode
    ap: NodeId | None
    links: tuple[Link, ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = set(self.nodes)
        for link in self.links:
            if link.a not in ids or link.b not in ids or link.a == link.b:
                raise ConfigurationError(f"link {link.a}-{link.b} references unknown node")
            if not (RSSI_MIN_DBM <= link.rssi_dbm <= RSSI_MAX_DBM):
                raise ConfigurationError(f"rssi {link.rssi_dbm} out of [-95, -20] dBm")
        if self.mode == TopologyMode.INFRASTRUCTURE:
            if self.ap is None or self.ap not in ids:
                raise ConfigurationError("infrastructure topology requires an AP node")
            for n in self.nodes:
                if n == self.ap:
                    continue
                deg = sum(1 for l in self.links if n in (l.a, l.b))
                to_ap = sum(1 for l in self.links if {l.a, l.b} == {n, self.ap})
                if deg != 1 or to_ap != 1:
                    raise ConfigurationError(f"station {n} must link exactly once to the AP")
        else:
            if self.ap is not None:
                raise ConfigurationError("ad hoc topology must not designate an AP")
            if not self._connected():
                raise ConfigurationError("ad hoc link graph must be connected")

    def _connected(self) -> bool:
        if not self.nodes:
            return False
        adj: dict[NodeId, set[NodeId]] = {n: set() for n in self.nodes}
        for l in self.links:
            adj[l.a].add(l.b)
            adj[l.b].add(l.a)
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for peer in adj[stack.pop()]:
                if peer not in seen:
                    seen.add(peer)
                    stack.append(peer)
        return len(seen) == len(self.nodes)

    def neighbors(self, n: NodeId) -> list[NodeId]:
        out = set()
        for l in self.links:
            if l.a == n:
                out.add(l.b)
            elif l.b == n:
                out.add(l.a)
        return sorted(out)

    def link_between(self, a: NodeId, b: NodeId) -> Link | None:
        for l in self.links:
            if {l.a, l.b} == {a, b}:
                return l
        return None

    def stations(self) -> list[NodeId]:
        return [n for n in self.nodes if n != self.ap]


@dataclass(frozen=True)
class TrafficProfile:
    mode: TrafficMode
    matrix: tuple[tuple[NodeId, NodeId, float], ...]  # (src, dst, mean_offered_load_bps)
    burstiness: float  # Pareto shape for H2H on/off bursts; 0 for IoT
    period_s: float  # IoT reporting period; 1.0 (unused) for H2H

    def __post_init__(self):
        if self.period_s <= 0:
            raise ConfigurationError("period_s must be positive")
        if self.burstiness < 0:
            raise ConfigurationError("burstiness must be non-negative")
        if self.mode == TrafficMode.H2H and not (1.0 < self.burstiness <= 2.0):
            raise ConfigurationError("H2H burst shape must lie in (1, 2]")
        for src, dst, load in self.matrix:
            if src == dst:
                raise ConfigurationError("traffic matrix must not contain self-pairs")
            if load < 0:
                raise ConfigurationError("offered loads must be non-negative")

    def flows(self) -> list[tuple[NodeId, NodeId]]:
        return [(src, dst) for src, dst, _ in self.matrix]

    def mean_load(self, src: NodeId, dst: NodeId) -> float:
        for s, d, load in self.matrix:
            if (s, d) == (src, dst):
                return load
        raise KeyError((src, dst))


# --------------------------------------------------------------------------
# Fault taxonomy
# --------------------------------------------------------------------------

class FaultType(str, enum.Enum):
    NODE_CRASH = "node_crash"
    POOR_LINK_QUALITY = "poor_link_quality"
    APP_CRASH = "app_crash"
    APP_SLOWDOWN = "app_slowdown"
    TRAFFIC_OVERLOAD = "traffic_overload"
    HIDDEN_NODE = "hidden_node"
    RATE_ADAPTATION_FAILURE = "rate_adaptation_failure"
    PROBE_FAILURE = "probe_failure"
    BEACON_LOSS = "beacon_loss"
    BUFFER_BLOAT = "buffer_bloat"
    QUEUE_OVERFLOW = "queue_overflow"
    NORMAL = "normal"


class FaultCategory(str, enum.Enum):
    HARDWARE = "hardware"
    SOFTWARE = "software"
    MAC = "mac"
    ASSOCIATION = "association"
    CONGESTION = "congestion"
    NONE = "none"


class Phenomenon(str, enum.Enum):
    DISCONNECT = "disconnect"
    LAG = "lag"
    NONE = "none"


# Fault type -> (category, dominant phenomenon).
FAULT_TABLE: dict[FaultType, tuple[FaultCategory, Phenomenon]] = {
    FaultType.NODE_CRASH: (FaultCategory.HARDWARE, Phenomenon.DISCONNECT),
    FaultType.POOR_LINK_QUALITY: (FaultCategory.HARDWARE, Phenomenon.LAG),
    FaultType.APP_CRASH: (FaultCategory.SOFTWARE, Phenomenon.DISCONNECT),
    FaultType.APP_SLOWDOWN: (FaultCategory.SOFTWARE, Phenomenon.LAG),
    FaultType.TRAFFIC_OVERLOAD: (FaultCategory.SOFTWARE, Phenomenon.LAG),
    FaultType.HIDDEN_NODE: (FaultCategory.MAC, Phenomenon.LAG),
    FaultType.RATE_ADAPTATION_FAILURE: (FaultCategory.MAC, Phenomenon.LAG),
    FaultType.PROBE_FAILURE: (FaultCategory.ASSOCIATION, Phenomenon.DISCONNECT),
    FaultType.BEACON_LOSS: (FaultCategory.ASSOCIATION, Phenomenon.DISCONNECT),
    FaultType.BUFFER_BLOAT: (FaultCategory.CONGESTION, Phenomenon.LAG),
    FaultType.QUEUE_OVERFLOW: (FaultCategory.CONGESTION, Phenomenon.LAG),
    FaultType.NORMAL: (FaultCategory.NONE, Phenomenon.NONE),
}

INJECTABLE_FAULTS = tuple(f for f in FaultType if f != FaultType.NORMAL)


def fault_category(fault: FaultType) -> FaultCategory:
    return FAULT_TABLE[fault][0]


def fault_phenomenon(fault: FaultType) -> Phenomenon:
    return FAULT_TABLE[fault][1]


def fault_table_to_dict() -> dict[str, dict[str, str]]:
    """Serializable view of the fault taxonomy table."""
    return {
        f.value: {"category": cat.value, "phenomenon": ph.value}
        for f, (cat, ph) in FAULT_TABLE.items()
    }


def fault_table_from_dict(data: dict[str, dict[str, str]]) -> dict[FaultType, tuple[FaultCategory, Phenomenon]]:
    return {
        FaultType(name): (FaultCategory(entry["category"]), Phenomenon(entry["phenomenon"]))
        for name, entry in data.items()
    }


# --------------------------------------------------------------------------
# Window schedule and fault specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSchedule:
    """Observation window layout: normal warm-up, then fault until the end."""

    duration_s: int = 180
    injection_at_s: int = 60
    tick_s: float = 1.0

    def __post_init__(self):
        if not (0 < self.injection_at_s < self.duration_s):
            raise ConfigurationError("injection must fall strictly inside the window")
        for bound in (self.duration_s, self.injection_at_s):
            ticks = bound / self.tick_s
            if abs(ticks - round(ticks)) > 1e-9:
                raise ConfigurationError("tick_s must divide duration and injection time")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s / self.tick_s))

    @property
    def injection_tick(self) -> int:
        return int(round(self.injection_at_s / self.tick_s))


# Per-fault severity parameter schemas.  The first entry of each tuple is the
# fault's primary scalar: doubling it must never shrink the fault's dominant
# symptom.  Ranges are calibration defaults, overridable through RunConfig.
SEVERITY_SCHEMAS: dict[FaultType, dict[str, tuple[float, float]]] = {
    FaultType.NODE_CRASH: {},
    FaultType.POOR_LINK_QUALITY: {"rssi_drop_db": (15.0, 25.0), "loss_floor": (0.05, 0.2)},
    FaultType.APP_CRASH: {},
    FaultType.APP_SLOWDOWN: {"latency_multiplier": (3.0, 10.0)},
    FaultType.TRAFFIC_OVERLOAD: {"load_multiplier": (2.0, 4.0)},
    FaultType.HIDDEN_NODE: {"airtime_boost": (4.0, 10.0)},
    FaultType.RATE_ADAPTATION_FAILURE: {"rate_penalty": (3.3, 10.0), "retx_boost": (0.1, 0.3)},
    FaultType.PROBE_FAILURE: {"reassoc_delay_ticks": (10.0, 30.0)},
    FaultType.BEACON_LOSS: {"outage_ticks": (10.0, 20.0)},
    FaultType.BUFFER_BLOAT: {"excess_load_frac": (0.15, 0.3)},
    FaultType.QUEUE_OVERFLOW: {"burst_multiplier": (1.5, 2.5)},
    FaultType.NORMAL: {},
}

PRIMARY_SEVERITY: dict[FaultType, str | None] = {
    fault: (next(iter(schema)) if schema else None) for fault, schema in SEVERITY_SCHEMAS.items()
}


@dataclass(frozen=True)
class FaultSpec:
    fault: FaultType
    target: NodeId | None
    injected_at_s: int
    severity: dict[str, float] = field(default_factory=dict)
    second_node: NodeId | None = None  # second hidden transmitter

    def __post_init__(self):
        if self.fault == FaultType.NORMAL:
            if self.target is not None or self.second_node is not None:
                raise ConfigurationError("normal windows carry no target node")
        else:
            if self.target is None:
                raise ConfigurationError(f"{self.fault.value} requires a target node")
        if self.second_node is not None and self.fault != FaultType.HIDDEN_NODE:
            raise ConfigurationError("second_node only applies to hidden-node faults")
        schema = SEVERITY_SCHEMAS[self.fault]
        unknown = set(self.severity) - set(schema)
        if unknown:
            raise ConfigurationError(f"unknown severity parameters for {self.fault.value}: {sorted(unknown)}")


def sample_severity(fault: FaultType, rng: np.random.Generator,
                    schemas: dict[FaultType, dict[str, tuple[float, float]]] | None = None) -> dict[str, float]:
    """Draw one value per registered severity parameter, in schema order."""
    schema = (schemas or SEVERITY_SCHEMAS)[fault]
    out = {}
    for name, (lo, hi) in schema.items():
        v = float(rng.uniform(lo, hi))
        if name.endswith("_ticks"):
            v = float(int(round(v)))
        out[name] = v
    return out


# --------------------------------------------------------------------------
# Channel model (shared by topology/traffic builders and the simulator)
# --------------------------------------------------------------------------

PKT_SIZE_BYTES = 1200
MAC_EFFICIENCY = 0.65
PHY_NOMINAL_BPS = {TrafficMode.H2H: 24e6, TrafficMode.IOT: 9e6}


def phy_rate_factor(rssi_dbm: float) -> float:
    """Fraction of the nominal PHY rate achievable at a given signal level."""
    return min(1.0, max(0.15, (rssi_dbm + 88.0) / 30.0))


def channel_base_loss(rssi_dbm: float) -> float:
    """Residual frame loss of the channel; non-increasing in RSSI."""
    return 0.004 + 0.5 / (1.0 + math.exp((rssi_dbm + 88.0) / 3.5))


def link_capacity_bps(rssi_dbm: float, traffic_mode: TrafficMode) -> float:
    return PHY_NOMINAL_BPS[traffic_mode] * phy_rate_factor(rssi_dbm) * MAC_EFFICIENCY


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

def build_topology(scenario: Scenario, n_nodes: int, rng_seed: int) -> Topology:
    """Deterministically lay out a small wireless network for one scenario.

    Infrastructure scenarios get a star around node 0 (the AP, before any
    later anonymization); ad hoc scenarios get a random connected graph.
    """
    if n_nodes < 3:
        raise ConfigurationError("a scenario needs at least 3 nodes")
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0x70]))
    lo, hi = NORMAL_RSSI_RANGE
    nodes = tuple(range(n_nodes))
    links: list[Link] = []
    if scenario.topology_mode == TopologyMode.INFRASTRUCTURE:
        ap: NodeId | None = 0
        for sta in range(1, n_nodes):
            links.append(Link(0, sta, float(np.round(rng.uniform(lo, hi), 2))))
    else:
        ap = None
        for i in range(1, n_nodes):
            parent = int(rng.integers(0, i))
            links.append(Link(parent, i, float(np.round(rng.uniform(lo, hi), 2))))
        for a in range(n_nodes):
            for b in range(a + 1, n_nodes):
                if any(l.key() == (a, b) for l in links):
                    continue
                if rng.random() < 0.25:
                    links.append(Link(a, b, float(np.round(rng.uniform(lo, hi), 2))))
    return Topology(nodes=nodes, mode=scenario.topology_mode, ap=ap, links=tuple(links))


def build_traffic_profile(scenario: Scenario, topology: Topology, rng_seed: int) -> TrafficProfile:
    """Draw a heterogeneous traffic matrix for the scenario's topology.

    Mean loads come from a log-normal spread around a per-mode base rate and
    are then rescaled so that total mean medium utilization lands in a
    realistic band, keeping windows comparable across seeds.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0x7F]))
    mode = scenario.traffic_mode
    entries: list[tuple[NodeId, NodeId, float]] = []

    def lognorm() -> float:
        return float(np.clip(rng.lognormal(mean=0.0, sigma=1.0), 0.2, 4.0))

    if scenario.topology_mode == TopologyMode.INFRASTRUCTURE:
        ap = topology.ap
        assert ap is not None
        for sta in topology.stations():
            if mode == TrafficMode.H2H:
                entries.append((ap, sta, 450e3 * lognorm()))   # download
                entries.append((sta, ap, 200e3 * lognorm()))   # upload
            else:
                entries.append((sta, ap, 80e3 * lognorm()))    # periodic reports
    else:
        for link in sorted(topology.links, key=lambda l: l.key()):
            a, b = link.key()
            entries.append((b, a, 80e3 * lognorm()))           # report toward lower id

    # Rescale total demand to a target mean utilization of the medium.
    util_target = rng.uniform(0.30, 0.45) if mode == TrafficMode.H2H else rng.uniform(0.10, 0.20)
    demand = 0.0
    for src, dst, load in entries:
        link = topology.link_between(src, dst)
        assert link is not None
        demand += load / link_capacity_bps(link.rssi_dbm, mode)
    scale = util_target / demand if demand > 0 else 1.0
    entries = [(src, dst, float(np.round(load * scale, 1))) for src, dst, load in entries]

    if mode == TrafficMode.H2H:
        burstiness = float(np.round(rng.uniform(1.2, 2.0), 3))
        period_s = 1.0
    else:
        burstiness = 0.0
        period_s = float(int(rng.integers(2, 7)))
    return TrafficProfile(mode=mode, matrix=tuple(entries), burstiness=burstiness, period_s=period_s)
