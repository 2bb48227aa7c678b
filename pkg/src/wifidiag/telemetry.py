"""Turns a raw simulation trace into the four observation modalities.

The streams are temporally aligned: every record's timestamp falls inside
the same observation window, so a bundle's modalities describe one network
state.  An optional corruption pass removes modalities at a configurable
rate to mirror incomplete real-world collection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, NodeId, TrafficMode
from .sim import RawTrace

MODALITIES = ("flow", "packet", "warning", "monitor")

PACKET_SEGMENT_TICKS = 10
MONITOR_CADENCE_TICKS = 5
HEADER_BYTES = 54.0


class Side(str, enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"


class WarningKind(str, enum.Enum):
    CONNECTIVITY_DEGRADATION = "connectivity_degradation"
    PACKET_LOSS = "packet_loss"
    EXCESSIVE_DELAY = "excessive_delay"
    PROCESS_DOWN = "process_down"
    RESOURCE_ANOMALY = "resource_anomaly"
    REASSOCIATION = "reassociation"


@dataclass(frozen=True)
class FlowRecord:
    t_s: int
    src: NodeId
    dst: NodeId
    side: Side
    throughput_bps: float
    latency_ms: float
    jitter_ms: float
    loss: float


@dataclass(frozen=True)
class PacketFlowFeatures:
    t_s: int  # segment start
    src: NodeId
    dst: NodeId
    mean_pkt_size_bytes: float
    mean_iat_ms: float
    mean_fwd_rate_pps: float
    mean_bwd_rate_pps: float
    retx_fraction: float
    mean_hdr_overhead: float


@dataclass(frozen=True)
class WarningEvent:
    t_s: int
    node: NodeId  # the node the warning concerns
    kind: WarningKind
    severity: float


@dataclass(frozen=True)
class MonitorRecord:
    t_s: int
    node: NodeId
    cpu_pct: float
    mem_pct: float
    app_process_up: bool
    tx_bytes: int
    rx_bytes: int
    rssi_dbm: float


@dataclass
class TelemetryBundle:
    flow: list[FlowRecord] | None = None
    packet: list[PacketFlowFeatures] | None = None
    warning: list[WarningEvent] | None = None
    monitor: list[MonitorRecord] | None = None

    def present(self) -> list[str]:
        return [m for m in MODALITIES if getattr(self, m) is not None]

    def validate(self, duration_s: int) -> None:
        streams = self.present()
        if not streams:
            raise ConfigurationError("a bundle must retain at least one stream")
        for m in streams:
            for rec in getattr(self, m):
                if not (0 <= rec.t_s < duration_s):
                    raise ConfigurationError(f"{m} record at t={rec.t_s} outside window")


@dataclass(frozen=True)
class WarningRuleConfig:
    silence_ticks: int = 5
    loss_window_ticks: int = 5
    loss_threshold: float = 0.1
    delay_factor: float = 3.0
    resource_threshold: float = 0.9

    def __post_init__(self):
        if min(self.silence_ticks, self.loss_window_ticks) <= 0:
            raise ConfigurationError("warning windows must be positive")
        if min(self.loss_threshold, self.delay_factor, self.resource_threshold) <= 0:
            raise ConfigurationError("warning thresholds must be positive")


def _r(x: float, nd: int) -> float:
    return round(float(x), nd)


# --------------------------------------------------------------------------
# Emitters
# --------------------------------------------------------------------------

def emit_flow(trace: RawTrace) -> list[FlowRecord]:
    """Sender- and receiver-side measurements, one pair per flow per tick.

    A crashed endpoint stops measuring, so its side's records cease while
    the surviving side keeps reporting (zeros, once delivery stops).
    """
    out: list[FlowRecord] = []
    for snap in trace.snapshots:
        for key in trace.flow_keys:
            fl = snap.flows[key]
            lat = _r(fl.latency_ms, 3)
            jit = _r(fl.jitter_ms, 3)
            loss = _r(fl.loss, 6)
            if snap.nodes[fl.src].alive:
                out.append(FlowRecord(snap.t_s, fl.src, fl.dst, Side.SENDER,
                                      _r(fl.offered_bps, 1), lat, jit, loss))
            if snap.nodes[fl.dst].alive:
                out.append(FlowRecord(snap.t_s, fl.src, fl.dst, Side.RECEIVER,
                                      _r(fl.delivered_bps, 1), lat, jit, loss))
    return out


def _flow_pkt_size(trace: RawTrace, key: tuple[NodeId, NodeId]) -> float:
    base = 1100.0 if trace.traffic.mode == TrafficMode.H2H else 320.0
    wiggle = ((key[0] * 31 + key[1] * 7) % 17) / 17.0  # stable per-flow offset
    return base * (0.9 + 0.2 * wiggle)


def emit_packet_features(trace: RawTrace, segment_ticks: int = PACKET_SEGMENT_TICKS) -> list[PacketFlowFeatures]:
    """Averaged per-flow statistics over fixed tick segments.

    Only window means survive; there are deliberately no min/max/variance
    fields, keeping the feature count comparable across modalities.
    """
    n_ticks = len(trace.snapshots)
    out: list[PacketFlowFeatures] = []
    for key in trace.flow_keys:
        size = _flow_pkt_size(trace, key)
        bwd_ratio = 0.45 if trace.traffic.mode == TrafficMode.H2H else 0.1
        series = [trace.snapshots[t].flows[key] for t in range(n_ticks)]
        for seg_start in range(0, n_ticks, segment_ticks):
            seg = series[seg_start:seg_start + segment_ticks]
            fwd_bps = float(np.mean([f.offered_bps for f in seg]))
            ack_bps = float(np.mean([f.delivered_bps for f in seg]))
            fwd_pps = fwd_bps / (size * 8.0)
            retx = float(np.mean([f.retx_rate for f in seg]))
            tick_iats = [min(1e5, (size * 8.0) * 1000.0 / f.offered_bps)
                         for f in seg if f.offered_bps > 0]
            iat = float(np.mean(tick_iats)) if tick_iats else 0.0
            out.append(PacketFlowFeatures(
                t_s=seg_start, src=key[0], dst=key[1],
                mean_pkt_size_bytes=_r(size, 1),
                mean_iat_ms=_r(min(iat, 1e5), 3),
                mean_fwd_rate_pps=_r(fwd_pps, 3),
                mean_bwd_rate_pps=_r(ack_bps * bwd_ratio / (size * 8.0), 3),
                retx_fraction=_r(retx, 6),
                mean_hdr_overhead=_r(HEADER_BYTES / size, 6),
            ))
    return out


def emit_warnings(trace: RawTrace, rules: WarningRuleConfig | None = None) -> list[WarningEvent]:
    """Rule-based runtime warnings; each event names the node it concerns.

    Link-level rules (silence, loss, delay) attribute the event to the
    flow's source, which is where a watchdog on the receiving side would
    point; node-local rules (process, resources, reassociation) fire on the
    node itself.
    """
    rules = rules or WarningRuleConfig()
    n_ticks = len(trace.snapshots)
    inj = trace.schedule.injection_tick
    out: list[WarningEvent] = []

    delivered = {k: np.array([s.flows[k].delivered_bps for s in trace.snapshots]) for k in trace.flow_keys}
    loss = {k: np.array([s.flows[k].loss for s in trace.snapshots]) for k in trace.flow_keys}
    latency = {k: np.array([s.flows[k].latency_ms for s in trace.snapshots]) for k in trace.flow_keys}

    # Baseline latency per node, from its egress flows during the warm-up.
    base_lat: dict[NodeId, float] = {}
    for n in trace.topology.nodes:
        vals = np.concatenate([latency[k][:inj] for k in trace.flow_keys if k[0] == n]) \
            if any(k[0] == n for k in trace.flow_keys) else np.array([])
        vals = vals[vals > 0]
        base_lat[n] = float(np.median(vals)) if vals.size else 0.0

    w = rules.loss_window_ticks
    for k in trace.flow_keys:
        src = k[0]
        d, l, lat = delivered[k], loss[k], latency[k]
        # consecutive-zero-delivery run length ending at each tick
        run = np.zeros(n_ticks, dtype=int)
        acc = 0
        for t in range(n_ticks):
            acc = acc + 1 if d[t] == 0.0 else 0
            run[t] = acc
        for t in np.nonzero(run >= rules.silence_ticks)[0]:
            out.append(WarningEvent(int(t), src, WarningKind.CONNECTIVITY_DEGRADATION,
                                    _r(min(1.0, run[t] / 20.0), 4)))
        cs = np.concatenate([[0.0], np.cumsum(l)])
        wloss = (cs[w:] - cs[:-w]) / w  # rolling mean ending at tick w-1..n-1
        cd = np.concatenate([[0.0], np.cumsum(d > 0)])
        wany = (cd[w:] - cd[:-w]) > 0
        for i in np.nonzero((wloss > rules.loss_threshold) & wany)[0]:
            t = int(i + w - 1)
            out.append(WarningEvent(t, src, WarningKind.PACKET_LOSS,
                                    _r(min(1.0, (float(wloss[i]) - rules.loss_threshold) / 0.4), 4)))
        if base_lat[src] > 0:
            for t in np.nonzero(lat > rules.delay_factor * base_lat[src])[0]:
                ratio = float(lat[t]) / base_lat[src]
                out.append(WarningEvent(int(t), src, WarningKind.EXCESSIVE_DELAY,
                                        _r(min(1.0, (ratio - rules.delay_factor) / 7.0), 4)))

    for n in sorted(trace.topology.nodes):
        prev_assoc, prev_alive = True, True
        for t in range(n_ticks):
            st = trace.snapshots[t].nodes[n]
            if st.alive and not st.app_running:
                out.append(WarningEvent(t, n, WarningKind.PROCESS_DOWN, 1.0))
            if st.alive and max(st.cpu_pct, st.mem_pct) > rules.resource_threshold:
                sev = (max(st.cpu_pct, st.mem_pct) - rules.resource_threshold) / (1.0 - rules.resource_threshold)
                out.append(WarningEvent(t, n, WarningKind.RESOURCE_ANOMALY, _r(min(1.0, sev), 4)))
            if t > 0 and st.associated and not prev_assoc and prev_alive:
                out.append(WarningEvent(t, n, WarningKind.REASSOCIATION, 0.5))
            prev_assoc, prev_alive = st.associated, st.alive

    out.sort(key=lambda e: (e.t_s, e.node, e.kind.value))
    return out


def emit_monitor(trace: RawTrace, cadence: int = MONITOR_CADENCE_TICKS) -> list[MonitorRecord]:
    """Periodic per-node runtime snapshots; crashed nodes stop reporting."""
    out: list[MonitorRecord] = []
    n_ticks = len(trace.snapshots)
    nodes = sorted(trace.topology.nodes)
    tx = {n: 0.0 for n in nodes}
    rx = {n: 0.0 for n in nodes}
    for t in range(n_ticks):
        snap = trace.snapshots[t]
        for k in trace.flow_keys:
            fl = snap.flows[k]
            # interface counters track frames on the air, not application demand
            tx[k[0]] += fl.delivered_bps / (8.0 * max(1e-9, 1.0 - fl.loss))                 if fl.loss < 1.0 else 0.0
            rx[k[1]] += fl.delivered_bps / 8.0
        if t % cadence != 0:
            continue
        for n in nodes:
            st = snap.nodes[n]
            if not st.alive:
                tx[n] = rx[n] = 0.0
                continue
            link_rssi = [snap.links[lk].rssi_dbm for lk in snap.links if n in lk]
            out.append(MonitorRecord(
                t_s=t, node=n,
                cpu_pct=_r(st.cpu_pct, 4),
                mem_pct=_r(st.mem_pct, 4),
                app_process_up=st.app_running,
                tx_bytes=int(tx[n]),
                rx_bytes=int(rx[n]),
                rssi_dbm=_r(sum(link_rssi) / len(link_rssi) if link_rssi else -95.0, 2),
            ))
            tx[n] = rx[n] = 0.0
    return out


def build_bundle(trace: RawTrace, rules: WarningRuleConfig | None = None) -> TelemetryBundle:
    bundle = TelemetryBundle(
        flow=emit_flow(trace),
        packet=emit_packet_features(trace),
        warning=emit_warnings(trace, rules),
        monitor=emit_monitor(trace),
    )
    bundle.validate(trace.schedule.duration_s)
    return bundle


def drop_modalities(bundle: TelemetryBundle, rate: float, rng: np.random.Generator) -> TelemetryBundle:
    """With probability `rate`, drop one uniformly chosen modality.

    Never removes the final stream; rates above 0.5 are rejected because the
    corruption is meant to stay a minority condition.
    """
    if not (0.0 <= rate <= 0.5):
        raise ConfigurationError("modality drop rate must lie in [0, 0.5]")
    new = replace(bundle)
    if rate == 0.0:
        return new
    if rng.random() < rate:
        present = new.present()
        if len(present) > 1:
            victim = present[int(rng.integers(0, len(present)))]
            setattr(new, victim, None)
    return new
