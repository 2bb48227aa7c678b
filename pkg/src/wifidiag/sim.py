"""Tick-based fluid-flow network dynamics with controlled fault injection.

One observation window runs strictly sequentially and deterministically from
its seed; independent windows share no mutable state and can run in
parallel.  Per tick the engine: samples offered load from the traffic
generators, shares medium capacity proportionally to offered load, pushes
excess through per-node egress queues (queueing delay and overflow drops),
applies channel and collision loss, and finally overlays the active fault's
effects once the injection tick has passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ConfigurationError,
    FaultSpec,
    FaultType,
    Link,
    NodeId,
    Scenario,
    Topology,
    TrafficMode,
    TrafficProfile,
    WindowSchedule,
    channel_base_loss,
    link_capacity_bps,
    phy_rate_factor,
    PHY_NOMINAL_BPS,
    MAC_EFFICIENCY,
    PKT_SIZE_BYTES,
)


class FaultError(ValueError):
    """Raised when a fault spec cannot be applied to the given topology."""


@dataclass
class SimParams:
    """Calibration knobs for the dynamics engine."""

    pkt_size_bytes: int = PKT_SIZE_BYTES
    util_cap: float = 0.95            # medium utilization before proportional throttling
    queue_cap_pkts: int = 150
    queue_delay_cap_ms: float = 3000.0
    proc_latency_ms: float = 1.5
    latency_noise_sigma: float = 0.25
    jitter_frac: float = 0.15
    rssi_wander_db: float = 0.5
    retx_base: float = 0.012
    retx_loss_gain: float = 0.5
    cpu_base: float = 0.12
    cpu_ap_extra: float = 0.08
    cpu_load_gain: float = 0.55
    cpu_noise: float = 0.05
    mem_base: float = 0.30
    mem_noise: float = 0.02
    h2h_floor: float = 0.35           # always-on fraction of an H2H flow's mean load
    h2h_burst_clamp: float = 8.0
    iot_keepalive_frac: float = 0.25
    overload_capacity_factor: float = 0.15  # overload demand exceeds capacity by 1 + f*mult
    overload_cpu_boost: float = 0.35
    slowdown_cpu_boost: float = 0.22        # a degraded app burns cycles
    bufferbloat_cap_mult: float = 20.0
    bufferbloat_backoff_frac: float = 0.6   # queue fill level that makes the source back off
    queueoverflow_cap_mult: float = 0.1
    queueoverflow_duty_ticks: int = 10
    queueoverflow_burst_ticks: int = 3
    probe_cycle_ticks: int = 45
    beacon_miss_ticks: int = 5
    hidden_collision_cap: float = 0.6

    @property
    def pkt_bits(self) -> float:
        return self.pkt_size_bytes * 8.0


@dataclass
class LinkState:
    rssi_dbm: float
    base_loss: float
    capacity_bps: float
    phy_rate_bps: float
    carrier_sense: bool = True


@dataclass
class NodeState:
    alive: bool = True
    associated: bool = True
    app_running: bool = True
    app_latency_multiplier: float = 1.0
    queue_len_pkts: int = 0
    queue_cap_pkts: int = 150
    cpu_pct: float = 0.0
    mem_pct: float = 0.0


@dataclass
class FlowState:
    src: NodeId
    dst: NodeId
    offered_bps: float = 0.0
    delivered_bps: float = 0.0
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss: float = 0.0
    retx_rate: float = 0.0


@dataclass
class WorldState:
    t_s: int
    nodes: dict[NodeId, NodeState]
    links: dict[tuple[NodeId, NodeId], LinkState]
    flows: dict[tuple[NodeId, NodeId], FlowState]


@dataclass
class RawTrace:
    scenario: Scenario
    topology: Topology
    traffic: TrafficProfile
    fault: FaultSpec
    schedule: WindowSchedule
    seed: int
    snapshots: list[WorldState] = field(default_factory=list)

    @property
    def flow_keys(self) -> list[tuple[NodeId, NodeId]]:
        return sorted(self.traffic.flows())


def _spawn_rngs(seed: int) -> dict[str, np.random.Generator]:
    return {
        name: np.random.default_rng(np.random.SeedSequence([int(seed), salt]))
        for name, salt in (("traffic", 1), ("noise", 2), ("fault", 3))
    }


class _TrafficGenerator:
    """Per-flow offered-load process; one draw pattern per tick regardless of
    fault state so pre-injection dynamics stay aligned across fault types."""

    def __init__(self, traffic: TrafficProfile, flow_keys: list[tuple[NodeId, NodeId]],
                 rng: np.random.Generator, params: SimParams):
        self.traffic = traffic
        self.flow_keys = flow_keys
        self.rng = rng
        self.params = params
        self.means = {(s, d): traffic.mean_load(s, d) for s, d in flow_keys}
        if traffic.mode == TrafficMode.IOT:
            period = int(traffic.period_s)
            self.phases = {k: int(rng.integers(0, period)) for k in flow_keys}
        else:
            self.phases = {}
            alpha = traffic.burstiness
            self.pareto_mean = alpha / (alpha - 1.0)

    def offered(self, t: int) -> dict[tuple[NodeId, NodeId], float]:
        out = {}
        p = self.params
        if self.traffic.mode == TrafficMode.H2H:
            alpha = self.traffic.burstiness
            for k in self.flow_keys:
                burst = 1.0 + self.rng.pareto(alpha)
                burst = min(burst, p.h2h_burst_clamp) / self.pareto_mean
                out[k] = self.means[k] * (p.h2h_floor + (1.0 - p.h2h_floor) * burst)
        else:
            period = int(self.traffic.period_s)
            for k in self.flow_keys:
                size_noise = min(0.25, max(-0.25, 0.08 * float(self.rng.standard_normal())))
                mean = self.means[k]
                if (t + self.phases[k]) % period == 0:
                    report = mean * (1.0 - p.iot_keepalive_frac) * period
                    out[k] = mean * p.iot_keepalive_frac + report * (1.0 + size_noise)
                else:
                    out[k] = mean * p.iot_keepalive_frac
        return out


class _FaultRuntime:
    """Schedule-level fault state derived once at injection time."""

    def __init__(self, fault: FaultSpec, topology: Topology, schedule: WindowSchedule,
                 rng: np.random.Generator, params: SimParams):
        self.fault = fault
        self.params = params
        self.down_intervals: dict[NodeId, list[tuple[int, int]]] = {}
        self.hidden_links: tuple[tuple[NodeId, NodeId], tuple[NodeId, NodeId]] | None = None
        self.hidden_receiver: NodeId | None = None
        self.co_sufferers: dict[NodeId, dict[str, float]] = {}
        t0 = schedule.injection_tick
        end = schedule.n_ticks
        kind = fault.fault
        if kind == FaultType.NORMAL:
            return
        # fault effects propagate to one or two bystanders with mild,
        # warning-threshold-safe symptoms that blur node attribution
        others = [n for n in topology.nodes if n != fault.target and n != topology.ap]
        n_co = min(len(others), 1 + int(rng.random() < 0.5))
        picks = rng.choice(len(others), size=n_co, replace=False)
        for rank, i in enumerate(sorted(int(x) for x in picks)):
            # only the primary bystander shows system-level symptoms; the
            # rest degrade at the traffic level only
            self.co_sufferers[others[i]] = {
                "loss": float(rng.uniform(0.02, 0.06)),
                "jitter": float(rng.uniform(2.0, 5.0)),
                "rssi": float(rng.uniform(3.0, 8.0)),
                "cpu": float(rng.uniform(0.05, 0.30)) if rank == 0 else 0.0,
                "mem": float(rng.uniform(0.04, 0.22)) if rank == 0 else 0.0,
                "rate": float(rng.uniform(0.3, 0.65)) if rng.random() < 0.5
                        else float(rng.uniform(1.6, 3.0)),
            }
        if fault.target not in topology.nodes:
            raise FaultError(f"fault target {fault.target} not in topology")
        if kind == FaultType.PROBE_FAILURE:
            delay = int(fault.severity.get("reassoc_delay_ticks", 20))
            intervals = []
            t = t0
            while t < end:
                intervals.append((t, min(t + delay, end)))
                t += params.probe_cycle_ticks
            self.down_intervals[fault.target] = intervals
        elif kind == FaultType.BEACON_LOSS:
            outage = int(fault.severity.get("outage_ticks", 15))
            intervals = []
            t = t0 + params.beacon_miss_ticks
            while t < end:
                intervals.append((t, min(t + outage, end)))
                t += params.beacon_miss_ticks + outage
            self.down_intervals[fault.target] = intervals
        elif kind == FaultType.HIDDEN_NODE:
            if fault.second_node is None:
                raise FaultError("hidden-node fault requires a second transmitter")
            recv = _shared_receiver(topology, fault.target, fault.second_node)
            if recv is None:
                raise FaultError("hidden-node transmitters share no receiver")
            self.hidden_receiver = recv
            self.hidden_links = (
                _link_key(fault.target, recv),
                _link_key(fault.second_node, recv),
            )

    def node_down(self, node: NodeId, t: int) -> bool:
        for start, stop in self.down_intervals.get(node, []):
            if start <= t < stop:
                return True
        return False


def _link_key(a: NodeId, b: NodeId) -> tuple[NodeId, NodeId]:
    return (a, b) if a < b else (b, a)


def _shared_receiver(topology: Topology, first: NodeId, second: NodeId) -> NodeId | None:
    common = set(topology.neighbors(first)) & set(topology.neighbors(second))
    common -= {first, second}
    return min(common) if common else None


def hidden_node_candidates(topology: Topology, target: NodeId) -> list[NodeId]:
    """Nodes that could act as the second hidden transmitter for `target`."""
    out = []
    for other in topology.nodes:
        if other == target:
            continue
        if _shared_receiver(topology, target, other) is not None:
            out.append(other)
    return out


class WindowSim:
    """Deterministic simulator for a single observation window."""

    def __init__(self, scenario: Scenario, topology: Topology, traffic: TrafficProfile,
                 fault: FaultSpec, schedule: WindowSchedule, rng_seed: int,
                 params: SimParams | None = None):
        self.scenario = scenario
        self.topology = topology
        self.traffic = traffic
        self.fault = fault
        self.schedule = schedule
        self.seed = int(rng_seed)
        self.params = params or SimParams()
        self.rngs = _spawn_rngs(self.seed)
        self.flow_keys = sorted(traffic.flows())
        self.gen = _TrafficGenerator(traffic, self.flow_keys, self.rngs["traffic"], self.params)
        self.runtime = _FaultRuntime(fault, topology, schedule, self.rngs["fault"], self.params)
        self._wander = {l.key(): 0.0 for l in topology.links}
        self._mem_walk = {n: 0.0 for n in topology.nodes}
        self._fault_caps: dict[NodeId, int] = {}

    # -- initial state ------------------------------------------------------

    def initial_world(self) -> WorldState:
        p = self.params
        links = {}
        for l in self.topology.links:
            phy = PHY_NOMINAL_BPS[self.traffic.mode] * phy_rate_factor(l.rssi_dbm)
            links[l.key()] = LinkState(
                rssi_dbm=l.rssi_dbm,
                base_loss=channel_base_loss(l.rssi_dbm),
                capacity_bps=phy * MAC_EFFICIENCY,
                phy_rate_bps=phy,
                carrier_sense=l.carrier_sense,
            )
        nodes = {n: NodeState(queue_cap_pkts=p.queue_cap_pkts) for n in self.topology.nodes}
        flows = {k: FlowState(src=k[0], dst=k[1]) for k in self.flow_keys}
        return WorldState(t_s=-1, nodes=nodes, links=links, flows=flows)

    # -- per-tick helpers ----------------------------------------------------

    def _active(self, t: int) -> bool:
        return self.fault.fault != FaultType.NORMAL and t >= self.schedule.injection_tick

    def _node_status(self, n: NodeId, t: int) -> tuple[bool, bool, bool]:
        """(alive, associated, app_running) for node n at tick t."""
        alive, associated, app = True, True, True
        if self._active(t) and n == self.fault.target:
            kind = self.fault.fault
            if kind == FaultType.NODE_CRASH:
                alive = associated = app = False
            elif kind == FaultType.APP_CRASH:
                app = False
        if self.runtime.node_down(n, t):
            associated = False
        return alive, associated, app

    def _link_tick(self, key: tuple[NodeId, NodeId], prev: LinkState, base: Link, t: int) -> LinkState:
        p = self.params
        wander = 0.8 * self._wander[key] + float(self.rngs["noise"].normal(0.0, p.rssi_wander_db))
        self._wander[key] = wander
        rssi = base.rssi_dbm + wander
        base_loss = channel_base_loss(rssi)
        carrier = True
        rate_factor = 1.0
        if self._active(t):
            kind = self.fault.fault
            target = self.fault.target
            for co, eff in self.runtime.co_sufferers.items():
                if co in key and target not in key:
                    rssi -= eff["rssi"]
            if kind == FaultType.POOR_LINK_QUALITY and target in key:
                rssi -= self.fault.severity["rssi_drop_db"]
                base_loss = max(self.fault.severity["loss_floor"], 2.0 * base_loss)
            elif kind == FaultType.RATE_ADAPTATION_FAILURE and target in key:
                rate_factor = 1.0 / self.fault.severity["rate_penalty"]
            elif kind == FaultType.HIDDEN_NODE and self.runtime.hidden_links and key in self.runtime.hidden_links:
                carrier = False
        rssi = max(rssi, -95.0)
        phy = PHY_NOMINAL_BPS[self.traffic.mode] * phy_rate_factor(rssi) * rate_factor
        return LinkState(
            rssi_dbm=rssi,
            base_loss=base_loss,
            capacity_bps=phy * MAC_EFFICIENCY,
            phy_rate_bps=phy,
            carrier_sense=carrier,
        )

    def _shape_offered(self, offered: dict[tuple[NodeId, NodeId], float],
                       links: dict[tuple[NodeId, NodeId], LinkState],
                       world: WorldState, t: int) -> dict[tuple[NodeId, NodeId], float]:
        """Apply load-altering fault effects to the generated offered loads."""
        if not self._active(t):
            return offered
        kind = self.fault.fault
        target = self.fault.target
        p = self.params
        out = dict(offered)
        for co, eff in self.runtime.co_sufferers.items():
            for k in self.flow_keys:
                if co in k and target not in k:
                    out[k] = out[k] * eff["rate"]
        egress = [k for k in self.flow_keys if k[0] == target]
        if kind == FaultType.APP_CRASH or kind == FaultType.NODE_CRASH:
            for k in egress:
                out[k] = 0.0
        elif kind == FaultType.TRAFFIC_OVERLOAD and egress:
            mult = self.fault.severity["load_multiplier"]
            for k in egress:
                cap = links[_link_key(*k)].capacity_bps
                out[k] = max(offered[k] * mult, cap * (1.0 + p.overload_capacity_factor * mult))
        elif kind == FaultType.BUFFER_BLOAT and egress:
            excess = self.fault.severity["excess_load_frac"]
            qcap = self._fault_caps.get(target, p.queue_cap_pkts)
            qlen = world.nodes[target].queue_len_pkts
            for k in egress:
                cap = links[_link_key(*k)].capacity_bps / len(egress)
                if qlen < p.bufferbloat_backoff_frac * qcap:
                    out[k] = cap * (1.0 + excess)
                else:
                    out[k] = cap * 0.3
        elif kind == FaultType.QUEUE_OVERFLOW and egress:
            mult = self.fault.severity["burst_multiplier"]
            phase = (t - self.schedule.injection_tick) % p.queueoverflow_duty_ticks
            for k in egress:
                cap = links[_link_key(*k)].capacity_bps / len(egress)
                out[k] = cap * mult if phase < p.queueoverflow_burst_ticks else offered[k] * 0.5
        return out

    def _queue_cap(self, n: NodeId, t: int) -> int:
        p = self.params
        if self._active(t) and n == self.fault.target:
            if self.fault.fault == FaultType.BUFFER_BLOAT:
                cap = int(p.queue_cap_pkts * p.bufferbloat_cap_mult)
            elif self.fault.fault == FaultType.QUEUE_OVERFLOW:
                cap = max(1, int(p.queue_cap_pkts * p.queueoverflow_cap_mult))
            else:
                cap = p.queue_cap_pkts
            self._fault_caps[n] = cap
            return cap
        return p.queue_cap_pkts

    # -- the tick ------------------------------------------------------------

    def step(self, world: WorldState, t: int) -> WorldState:
        if not (0 <= t < self.schedule.n_ticks):
            raise ConfigurationError(f"tick {t} outside window")
        p = self.params
        noise = self.rngs["noise"]
        base_links = {l.key(): l for l in self.topology.links}
        links = {key: self._link_tick(key, world.links[key], base_links[key], t)
                 for key in sorted(world.links)}

        status = {n: self._node_status(n, t) for n in self.topology.nodes}
        offered = self.gen.offered(t)
        offered = self._shape_offered(offered, links, world, t)

        # Flow is up only while both endpoints are alive and associated.
        def flow_up(k):
            sa, sassoc, _ = status[k[0]]
            da, dassoc, _ = status[k[1]]
            return sa and da and sassoc and dassoc

        # Medium demand and proportional sharing.
        caps = {k: links[_link_key(*k)].capacity_bps for k in self.flow_keys}
        demand = sum(offered[k] / caps[k] for k in self.flow_keys if flow_up(k))
        scale = min(1.0, p.util_cap / demand) if demand > p.util_cap else 1.0

        # Per-node egress queues.
        nodes: dict[NodeId, NodeState] = {}
        q_delay: dict[NodeId, float] = {}
        ovf_frac: dict[NodeId, float] = {}
        airtime: dict[NodeId, float] = {n: 0.0 for n in self.topology.nodes}
        service: dict[tuple[NodeId, NodeId], float] = {}
        retx_est: dict[tuple[NodeId, NodeId], float] = {}
        for k in self.flow_keys:
            service[k] = offered[k] * scale if flow_up(k) else 0.0
            lk = _link_key(*k)
            r = p.retx_base + p.retx_loss_gain * links[lk].base_loss
            if self._active(t):
                if self.fault.fault == FaultType.RATE_ADAPTATION_FAILURE and self.fault.target in k:
                    r += self.fault.severity["retx_boost"]
                if self.runtime.hidden_links and lk in self.runtime.hidden_links:
                    r += 0.5
            retx_est[k] = r
            share = service[k] / caps[k] * (1.0 + 2.5 * retx_est[k])
            airtime[k[0]] += share
            airtime[k[1]] += share

        headroom = max(0.0, p.util_cap - demand)
        for n in sorted(self.topology.nodes):
            alive, associated, app = status[n]
            qcap = self._queue_cap(n, t)
            inflow_pps = sum(offered[k] for k in self.flow_keys if k[0] == n and flow_up(k)) / p.pkt_bits
            service_pps = sum(service[k] for k in self.flow_keys if k[0] == n) / p.pkt_bits
            if not alive:
                qlen = 0.0
            else:
                qlen = world.nodes[n].queue_len_pkts + (inflow_pps - service_pps) * self.schedule.tick_s
                if qlen > 0 and headroom > 0:
                    # a backlogged node spends idle airtime draining its queue
                    links_n = [links[lk].capacity_bps for lk in links if n in lk]
                    drain_pps = headroom * max(links_n) / p.pkt_bits if links_n else 0.0
                    qlen -= drain_pps * self.schedule.tick_s
                qlen = max(0.0, qlen)
            dropped = max(0.0, qlen - qcap)
            qlen = min(qlen, qcap)
            arrived = inflow_pps * self.schedule.tick_s
            ovf_frac[n] = min(1.0, dropped / arrived) if arrived > 0 else 0.0
            q_delay[n] = min(p.queue_delay_cap_ms, 1000.0 * qlen / service_pps) if service_pps > 1e-9 else (
                p.queue_delay_cap_ms if qlen > 0 else 0.0)

            cpu_noise = float(noise.normal(0.0, p.cpu_noise))
            self._mem_walk[n] = min(0.12, max(-0.12, 0.95 * self._mem_walk[n] + float(noise.normal(0.0, p.mem_noise))))
            overload = (self._active(t) and n == self.fault.target
                        and self.fault.fault == FaultType.TRAFFIC_OVERLOAD)
            slowdown = (self._active(t) and n == self.fault.target
                        and self.fault.fault == FaultType.APP_SLOWDOWN)
            co_eff = self.runtime.co_sufferers.get(n) if self._active(t) else None
            cpu = p.cpu_base + (p.cpu_ap_extra if n == self.topology.ap else 0.0) \
                + p.cpu_load_gain * min(airtime[n], 1.5) + (p.overload_cpu_boost if overload else 0.0) \
                + (p.slowdown_cpu_boost if slowdown else 0.0) \
                + (co_eff["cpu"] if co_eff else 0.0) + cpu_noise
            mem = p.mem_base + self._mem_walk[n] + (0.12 if overload else 0.0) \
                + (co_eff["mem"] if co_eff else 0.0) + 0.3 * min(1.0, qlen / 1000.0)
            mult = 1.0
            if self._active(t) and n == self.fault.target and self.fault.fault == FaultType.APP_SLOWDOWN:
                mult = self.fault.severity["latency_multiplier"]
            nodes[n] = NodeState(
                alive=alive,
                associated=associated and alive,
                app_running=app and alive,
                app_latency_multiplier=mult,
                queue_len_pkts=int(round(qlen)) if alive else 0,
                queue_cap_pkts=qcap,
                cpu_pct=min(0.99, max(0.02, cpu)) if alive else 0.0,
                mem_pct=min(0.99, max(0.05, mem)) if alive else 0.0,
            )

        # Hidden-node collision overlap at the shared receiver.
        collision: dict[tuple[NodeId, NodeId], float] = {k: 0.0 for k in self.flow_keys}
        if self._active(t) and self.runtime.hidden_links:
            boost = self.fault.severity["airtime_boost"]
            la, lb = self.runtime.hidden_links
            def boosted_airtime(link_key):
                a = sum(offered[k] / caps[k] for k in self.flow_keys if _link_key(*k) == link_key and flow_up(k))
                return min(0.95, a * boost)
            at_a, at_b = boosted_airtime(la), boosted_airtime(lb)
            for k in self.flow_keys:
                lk = _link_key(*k)
                if lk == la:
                    collision[k] = min(p.hidden_collision_cap, at_b)
                elif lk == lb:
                    collision[k] = min(p.hidden_collision_cap, at_a)

        # Per-flow delivery, latency, loss.
        flows: dict[tuple[NodeId, NodeId], FlowState] = {}
        for k in self.flow_keys:
            src, dst = k
            link = links[_link_key(*k)]
            lat_noise = float(noise.normal(0.0, p.latency_noise_sigma))
            jit_noise = abs(float(noise.normal(0.0, 1.0)))
            if not flow_up(k):
                src_crashed = not status[src][0]
                flows[k] = FlowState(src=src, dst=dst,
                                     offered_bps=0.0 if src_crashed else offered[k],
                                     delivered_bps=0.0, latency_ms=0.0, jitter_ms=0.0,
                                     loss=1.0, retx_rate=0.0)
                continue
            if offered[k] <= 0.0:
                flows[k] = FlowState(src=src, dst=dst)
                continue
            ch_loss = link.base_loss
            co_hits = [eff for co, eff in self.runtime.co_sufferers.items()
                       if co in k and self.fault.target not in k] if self._active(t) else []
            for eff in co_hits:
                ch_loss = min(0.095, ch_loss + eff["loss"])
            retx = p.retx_base + p.retx_loss_gain * (ch_loss + collision[k]) + 0.8 * collision[k]
            if self._active(t) and self.fault.fault == FaultType.RATE_ADAPTATION_FAILURE \
                    and self.fault.target in k:
                retx += self.fault.severity["retx_boost"]
            retx = min(0.9, max(0.0, retx))
            loss = min(1.0, max(0.0, ch_loss + collision[k] + ovf_frac[src]))
            delivered = max(0.0, service[k] * (1.0 - loss))
            pkt_ms = 1000.0 * p.pkt_bits / link.capacity_bps
            contention_ms = p.proc_latency_ms * 1.2 * min(demand, 3.0)
            base_ms = p.proc_latency_ms + pkt_ms + contention_ms + q_delay[src]
            app_mult = max(nodes[src].app_latency_multiplier, nodes[dst].app_latency_multiplier)
            retry_pen = 1.0 + 3.0 * ch_loss if self._active(t) and self.fault.fault == FaultType.POOR_LINK_QUALITY \
                and self.fault.target in k else 1.0
            lat = base_ms * app_mult * retry_pen * (1.0 + 1.5 * retx) * math.exp(lat_noise)
            jitter = jit_noise * p.jitter_frac * lat + 1.5 * lat * loss
            if collision[k] > 0:
                jitter += 2.0 * lat * collision[k]
            for eff in co_hits:
                jitter *= eff["jitter"]
            flows[k] = FlowState(src=src, dst=dst, offered_bps=offered[k],
                                 delivered_bps=min(delivered, offered[k]),
                                 latency_ms=lat, jitter_ms=jitter,
                                 loss=loss, retx_rate=retx)
        return WorldState(t_s=t, nodes=nodes, links=links, flows=flows)

    def run(self) -> RawTrace:
        trace = RawTrace(scenario=self.scenario, topology=self.topology, traffic=self.traffic,
                         fault=self.fault, schedule=self.schedule, seed=self.seed)
        world = self.initial_world()
        for t in range(self.schedule.n_ticks):
            world = self.step(world, t)
            trace.snapshots.append(world)
        return trace


def step(world: WorldState, traffic: TrafficProfile, fault: FaultSpec, t_s: int,
         sim: WindowSim) -> WorldState:
    """Advance one tick.  The WindowSim instance carries the seeded generator
    state; traffic/fault must match the ones the sim was built with."""
    if traffic is not sim.traffic and traffic != sim.traffic:
        raise ConfigurationError("traffic profile does not match simulator state")
    if fault is not sim.fault and fault != sim.fault:
        raise ConfigurationError("fault spec does not match simulator state")
    return sim.step(world, t_s)


def apply_fault(world: WorldState, fault: FaultSpec, sim: WindowSim) -> WorldState:
    """Apply a fault's persistent node-state effects to a world snapshot.

    Normal specs leave the world unchanged.  Dynamics-level effects (loss,
    load shaping, collisions) are realized tick by tick inside `step`.
    """
    if fault.fault == FaultType.NORMAL:
        return world
    if fault.target not in world.nodes:
        raise FaultError(f"fault target {fault.target} not in topology")
    nodes = dict(world.nodes)
    target = fault.target
    st = replace(nodes[target])
    if fault.fault == FaultType.NODE_CRASH:
        st.alive = False
        st.associated = False
        st.app_running = False
    elif fault.fault == FaultType.APP_CRASH:
        st.app_running = False
    elif fault.fault == FaultType.APP_SLOWDOWN:
        st.app_latency_multiplier = fault.severity["latency_multiplier"]
    elif fault.fault == FaultType.BUFFER_BLOAT:
        st.queue_cap_pkts = int(st.queue_cap_pkts * sim.params.bufferbloat_cap_mult)
    elif fault.fault == FaultType.QUEUE_OVERFLOW:
        st.queue_cap_pkts = max(1, int(st.queue_cap_pkts * sim.params.queueoverflow_cap_mult))
    nodes[target] = st
    return WorldState(t_s=world.t_s, nodes=nodes, links=dict(world.links), flows=dict(world.flows))


def run_window(scenario: Scenario, topology: Topology, traffic: TrafficProfile,
               fault: FaultSpec, schedule: WindowSchedule, rng_seed: int,
               params: SimParams | None = None) -> RawTrace:
    """Simulate one full observation window; deterministic per seed."""
    return WindowSim(scenario, topology, traffic, fault, schedule, rng_seed, params).run()
