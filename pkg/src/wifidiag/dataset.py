"""Sample assembly, labeling, anonymization, persistence and splitting.

On disk a corpus is one directory per sample, each modality in its own
line-delimited JSON file, with a manifest at the corpus root:

    corpus/
      manifest.json
      split.json                 (written by the split stage)
      samples/<id>/flow.jsonl
      samples/<id>/packet.jsonl
      samples/<id>/warning.jsonl
      samples/<id>/monitor.jsonl
      samples/<id>/labels.json
      samples/<id>/meta.json     (scenario, seed, recorded permutation)

Generation is deterministic from the config's base seed: regenerating with
the same config produces byte-identical files.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .core import (
    ConfigurationError,
    FaultSpec,
    FaultType,
    INJECTABLE_FAULTS,
    NodeId,
    Scenario,
    ScenarioKind,
    build_topology,
    build_traffic_profile,
    sample_severity,
)
from .sim import WindowSim, hidden_node_candidates
from .telemetry import (
    FlowRecord,
    MODALITIES,
    MonitorRecord,
    PacketFlowFeatures,
    Side,
    TelemetryBundle,
    WarningEvent,
    WarningKind,
    build_bundle,
    drop_modalities,
)

SCENARIO_ORDER = (ScenarioKind.H2H_APSTA, ScenarioKind.IOT_APSTA, ScenarioKind.IOT_ADHOC)

# Faults whose effect lives in the target's egress traffic; such targets
# must source at least one flow.
_NEEDS_EGRESS = {FaultType.APP_CRASH, FaultType.TRAFFIC_OVERLOAD,
                 FaultType.BUFFER_BLOAT, FaultType.QUEUE_OVERFLOW}


class LabelError(ValueError):
    """Raised when a sample's labels are internally inconsistent."""


@dataclass(frozen=True)
class Labels:
    fault_present: bool
    fault_type: FaultType
    fault_node: NodeId | None

    def __post_init__(self):
        ok = self.fault_present == (self.fault_type != FaultType.NORMAL) == (self.fault_node is not None)
        if not ok:
            raise LabelError(f"inconsistent labels: present={self.fault_present}, "
                             f"type={self.fault_type.value}, node={self.fault_node}")


@dataclass
class Sample:
    id: str
    scenario: Scenario
    seed: int
    bundle: TelemetryBundle
    labels: Labels
    node_permutation: list[int]
    n_nodes: int

    def validate(self, duration_s: int) -> None:
        self.bundle.validate(duration_s)
        if self.labels.fault_node is not None and not (0 <= self.labels.fault_node < self.n_nodes):
            raise LabelError(f"fault node {self.labels.fault_node} outside topology")


@dataclass
class CorpusManifest:
    config_hash: str
    data_hash: str
    base_seed: int
    n_nodes: int
    duration_s: int
    scenario_counts: dict[str, int]
    fault_counts: dict[str, int]
    modality_complete: int
    modality_incomplete: int
    samples: list[dict] = field(default_factory=list)
    split: dict[str, list[str]] | None = None

    def to_dict(self) -> dict:
        out = {
            "config_hash": self.config_hash,
            "data_hash": self.data_hash,
            "base_seed": self.base_seed,
            "n_nodes": self.n_nodes,
            "duration_s": self.duration_s,
            "scenario_counts": self.scenario_counts,
            "fault_counts": self.fault_counts,
            "modality_complete": self.modality_complete,
            "modality_incomplete": self.modality_incomplete,
            "samples": self.samples,
        }
        if self.split is not None:
            out["split"] = self.split
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusManifest":
        return cls(**data)


# --------------------------------------------------------------------------
# Anonymization
# --------------------------------------------------------------------------

def _permute_bundle(bundle: TelemetryBundle, perm: list[int]) -> TelemetryBundle:
    p = lambda n: perm[n]
    out = TelemetryBundle()
    if bundle.flow is not None:
        out.flow = [FlowRecord(r.t_s, p(r.src), p(r.dst), r.side, r.throughput_bps,
                               r.latency_ms, r.jitter_ms, r.loss) for r in bundle.flow]
    if bundle.packet is not None:
        out.packet = [PacketFlowFeatures(r.t_s, p(r.src), p(r.dst), r.mean_pkt_size_bytes,
                                         r.mean_iat_ms, r.mean_fwd_rate_pps, r.mean_bwd_rate_pps,
                                         r.retx_fraction, r.mean_hdr_overhead) for r in bundle.packet]
    if bundle.warning is not None:
        out.warning = [WarningEvent(r.t_s, p(r.node), r.kind, r.severity) for r in bundle.warning]
    if bundle.monitor is not None:
        out.monitor = [MonitorRecord(r.t_s, p(r.node), r.cpu_pct, r.mem_pct, r.app_process_up,
                                     r.tx_bytes, r.rx_bytes, r.rssi_dbm) for r in bundle.monitor]
    return out


def anonymize(sample: Sample, rng: np.random.Generator) -> Sample:
    """Relabel every node id through one random permutation, recorded on the
    sample; labels and streams stay mutually consistent."""
    perm = [int(x) for x in rng.permutation(sample.n_nodes)]
    return apply_permutation(sample, perm)


def apply_permutation(sample: Sample, perm: list[int]) -> Sample:
    if sorted(perm) != list(range(sample.n_nodes)):
        raise ConfigurationError("node permutation must cover all node ids")
    combined = [perm[p] for p in sample.node_permutation] if sample.node_permutation else list(perm)
    labels = sample.labels
    if labels.fault_node is not None:
        labels = Labels(labels.fault_present, labels.fault_type, perm[labels.fault_node])
    return Sample(
        id=sample.id,
        scenario=sample.scenario,
        seed=sample.seed,
        bundle=_permute_bundle(sample.bundle, perm),
        labels=labels,
        node_permutation=combined,
        n_nodes=sample.n_nodes,
    )


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _drop_one(bundle: TelemetryBundle, rng: np.random.Generator) -> TelemetryBundle:
    """Unconditionally remove one uniformly chosen modality (quota path)."""
    from dataclasses import replace as _replace
    new = _replace(bundle)
    present = new.present()
    if len(present) > 1:
        victim = present[int(rng.integers(0, len(present)))]
        setattr(new, victim, None)
    return new


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


_FLOW_FIELDS = ("t_s", "src", "dst", "side", "throughput_bps", "latency_ms", "jitter_ms", "loss")
_PACKET_FIELDS = ("t_s", "src", "dst", "mean_pkt_size_bytes", "mean_iat_ms", "mean_fwd_rate_pps",
                  "mean_bwd_rate_pps", "retx_fraction", "mean_hdr_overhead")
_WARNING_FIELDS = ("t_s", "node", "kind", "severity")
_MONITOR_FIELDS = ("t_s", "node", "cpu_pct", "mem_pct", "app_process_up", "tx_bytes", "rx_bytes", "rssi_dbm")


def save_sample(sample: Sample, corpus_dir: Path) -> None:
    sdir = corpus_dir / "samples" / sample.id
    try:
        sdir.mkdir(parents=True, exist_ok=True)
        b = sample.bundle
        if b.flow is not None:
            _write_jsonl(sdir / "flow.jsonl",
                         ({"t_s": r.t_s, "src": r.src, "dst": r.dst, "side": r.side.value,
                           "throughput_bps": r.throughput_bps, "latency_ms": r.latency_ms,
                           "jitter_ms": r.jitter_ms, "loss": r.loss} for r in b.flow))
        if b.packet is not None:
            _write_jsonl(sdir / "packet.jsonl",
                         ({f: getattr(r, f) for f in _PACKET_FIELDS} for r in b.packet))
        if b.warning is not None:
            _write_jsonl(sdir / "warning.jsonl",
                         ({"t_s": r.t_s, "node": r.node, "kind": r.kind.value,
                           "severity": r.severity} for r in b.warning))
        if b.monitor is not None:
            _write_jsonl(sdir / "monitor.jsonl",
                         ({f: getattr(r, f) for f in _MONITOR_FIELDS} for r in b.monitor))
        (sdir / "labels.json").write_text(_dump_line({
            "fault_present": sample.labels.fault_present,
            "fault_type": sample.labels.fault_type.value,
            "fault_node": sample.labels.fault_node,
        }) + "\n")
        (sdir / "meta.json").write_text(_dump_line({
            "id": sample.id,
            "scenario": sample.scenario.kind.value,
            "seed": sample.seed,
            "n_nodes": sample.n_nodes,
            "node_permutation": sample.node_permutation,
        }) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing sample {sample.id}: {exc}") from exc


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w") as fh:
        for row in rows:
            fh.write(_dump_line(row) + "\n")


def load_sample(corpus_dir: Path, sample_id: str) -> Sample:
    sdir = Path(corpus_dir) / "samples" / sample_id
    meta = json.loads((sdir / "meta.json").read_text())
    raw_labels = json.loads((sdir / "labels.json").read_text())
    labels = Labels(
        fault_present=raw_labels["fault_present"],
        fault_type=FaultType(raw_labels["fault_type"]),
        fault_node=raw_labels["fault_node"],
    )
    bundle = TelemetryBundle()
    if (sdir / "flow.jsonl").exists():
        bundle.flow = [FlowRecord(r["t_s"], r["src"], r["dst"], Side(r["side"]), r["throughput_bps"],
                                  r["latency_ms"], r["jitter_ms"], r["loss"])
                       for r in _read_jsonl(sdir / "flow.jsonl")]
    if (sdir / "packet.jsonl").exists():
        bundle.packet = [PacketFlowFeatures(**r) for r in _read_jsonl(sdir / "packet.jsonl")]
    if (sdir / "warning.jsonl").exists():
        bundle.warning = [WarningEvent(r["t_s"], r["node"], WarningKind(r["kind"]), r["severity"])
                          for r in _read_jsonl(sdir / "warning.jsonl")]
    if (sdir / "monitor.jsonl").exists():
        bundle.monitor = [MonitorRecord(**r) for r in _read_jsonl(sdir / "monitor.jsonl")]
    return Sample(
        id=meta["id"],
        scenario=Scenario(ScenarioKind(meta["scenario"])),
        seed=meta["seed"],
        bundle=bundle,
        labels=labels,
        node_permutation=meta["node_permutation"],
        n_nodes=meta["n_nodes"],
    )


def _read_jsonl(path: Path) -> list[dict]:
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_manifest(corpus_dir: Path) -> CorpusManifest:
    return CorpusManifest.from_dict(json.loads((Path(corpus_dir) / "manifest.json").read_text()))


def iter_samples(corpus_dir: Path, ids: list[str] | None = None):
    manifest = load_manifest(corpus_dir)
    for entry in manifest.samples:
        if ids is not None and entry["id"] not in ids:
            continue
        yield load_sample(corpus_dir, entry["id"])


# --------------------------------------------------------------------------
# Corpus generation
# --------------------------------------------------------------------------

def _fault_plan(count: int, normal_fraction: float, type_offset: int) -> list[FaultType]:
    """Deterministic per-scenario fault assignment: an exact normal share,
    the remainder round-robin over the 11 fault types starting at a
    rotating offset so the corpus-wide spread stays within one sample."""
    n_normal = int(round(count * normal_fraction))
    plan = [FaultType.NORMAL] * n_normal
    for i in range(count - n_normal):
        plan.append(INJECTABLE_FAULTS[(i + type_offset) % len(INJECTABLE_FAULTS)])
    return plan


def _eligible_targets(fault: FaultType, topology, traffic) -> list[NodeId]:
    sources = {src for src, _ in traffic.flows()}
    touched = {n for k in traffic.flows() for n in k}
    out = []
    for n in topology.nodes:
        if topology.ap is not None and n == topology.ap:
            continue
        if fault in _NEEDS_EGRESS and n not in sources:
            continue
        if fault == FaultType.HIDDEN_NODE and not hidden_node_candidates(topology, n):
            continue
        if n not in touched:
            continue
        out.append(n)
    return out


def generate_sample(cfg: RunConfig, scenario: Scenario, fault_type: FaultType,
                    sample_id: str, seed: int, force_drop: bool | None = None) -> Sample:
    """Build one fully labeled, anonymized sample from its seed.

    `force_drop` overrides the per-sample coin for modality corruption so a
    corpus can pin its overall incompleteness fraction exactly; the dropped
    modality itself is still chosen by the sample's own generator.
    """
    schedule = cfg.schedule.to_schedule()
    topology = build_topology(scenario, cfg.corpus.n_nodes, seed)
    traffic = build_traffic_profile(scenario, topology, seed)
    setup_rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    if fault_type == FaultType.NORMAL:
        fault = FaultSpec(FaultType.NORMAL, None, schedule.injection_at_s)
    else:
        eligible = _eligible_targets(fault_type, topology, traffic)
        if not eligible:
            raise ConfigurationError(f"no eligible target for {fault_type.value} in {sample_id}")
        target = int(setup_rng.choice(eligible))
        second = None
        if fault_type == FaultType.HIDDEN_NODE:
            second = int(setup_rng.choice(hidden_node_candidates(topology, target)))
        severity = sample_severity(fault_type, setup_rng, cfg.severity_schemas())
        fault = FaultSpec(fault_type, target, schedule.injection_at_s, severity, second)
    trace = WindowSim(scenario, topology, traffic, fault, schedule, seed, cfg.sim).run()
    bundle = build_bundle(trace, cfg.warnings)
    drop_rng = np.random.default_rng(np.random.SeedSequence([seed, 102]))
    if force_drop is None:
        bundle = drop_modalities(bundle, cfg.corpus.missing_rate, drop_rng)
    elif force_drop:
        bundle = drop_modalities(bundle, 0.5, drop_rng) if drop_rng.random() < 0 else             _drop_one(bundle, drop_rng)
    labels = Labels(
        fault_present=fault_type != FaultType.NORMAL,
        fault_type=fault_type,
        fault_node=fault.target,
    )
    sample = Sample(id=sample_id, scenario=scenario, seed=seed, bundle=bundle,
                    labels=labels, node_permutation=list(range(cfg.corpus.n_nodes)),
                    n_nodes=cfg.corpus.n_nodes)
    anon_rng = np.random.default_rng(np.random.SeedSequence([seed, 103]))
    sample = anonymize(sample, anon_rng)
    sample.validate(schedule.duration_s)
    return sample


def _generate_and_save(args) -> dict:
    cfg, kind_value, fault_value, sample_id, seed, out_dir, force_drop = args
    scenario = Scenario(ScenarioKind(kind_value))
    fault_type = FaultType(fault_value)
    sample = generate_sample(cfg, scenario, fault_type, sample_id, seed, force_drop)
    save_sample(sample, Path(out_dir))
    return {
        "id": sample_id,
        "scenario": kind_value,
        "seed": seed,
        "fault_type": fault_value,
        "fault_node": sample.labels.fault_node,
        "modalities": sample.bundle.present(),
    }


def generate_corpus(cfg: RunConfig, out_dir: Path, progress: bool = False,
                    workers: int | None = None) -> CorpusManifest:
    """Generate and persist the whole corpus; deterministic from base_seed.

    Samples are independent given their seeds, so generation fans out over a
    worker pool; the manifest is assembled in sample order regardless of
    completion order.
    """
    import os
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = cfg.corpus.base_seed
    scenario_counts: dict[str, int] = {}
    fault_counts: dict[str, int] = {f.value: 0 for f in FaultType}
    jobs: list[tuple] = []
    index = 0
    type_offset = 0
    for kind in SCENARIO_ORDER:
        count = cfg.corpus.counts.get(kind.value, 0)
        if count <= 0:
            raise ConfigurationError(f"per-scenario count for {kind.value} must be positive")
        plan = _fault_plan(count, cfg.corpus.normal_fraction, type_offset)
        type_offset += count - int(round(count * cfg.corpus.normal_fraction))
        scenario_counts[kind.value] = count
        for fault_type in plan:
            jobs.append([cfg, kind.value, fault_type.value,
                         f"{kind.value}-{index:05d}", base_seed + index, str(out_dir), False])
            index += 1
    # pin the corpus-level incompleteness fraction to the configured rate
    quota_rng = np.random.default_rng(np.random.SeedSequence([base_seed, 104]))
    n_incomplete = int(round(cfg.corpus.missing_rate * len(jobs)))
    for i in quota_rng.choice(len(jobs), size=n_incomplete, replace=False):
        jobs[i][6] = True
    jobs = [tuple(j) for j in jobs]
    if workers is None:
        workers = min(8, os.cpu_count() or 1, max(1, len(jobs) // 8))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_generate_and_save, jobs, chunksize=8))
    else:
        entries = [_generate_and_save(job) for job in jobs]
    complete = incomplete = 0
    for i, entry in enumerate(entries):
        fault_counts[entry["fault_type"]] += 1
        if len(entry["modalities"]) == len(MODALITIES):
            complete += 1
        else:
            incomplete += 1
        if progress and (i + 1) % 200 == 0:
            print(f"  generated {i + 1} samples")
    manifest = CorpusManifest(
        config_hash=cfg.hash(),
        data_hash=cfg.data_hash(),
        base_seed=base_seed,
        n_nodes=cfg.corpus.n_nodes,
        duration_s=cfg.schedule.duration_s,
        scenario_counts=scenario_counts,
        fault_counts=fault_counts,
        modality_complete=complete,
        modality_incomplete=incomplete,
        samples=entries,
    )
    (out_dir / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True) + "\n")
    return manifest


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

def split_corpus(manifest: CorpusManifest, ratio: float, rng_seed: int) -> tuple[list[str], list[str]]:
    """Stratified train/test split by fault type; within every stratum the
    train share is the rounded ratio, so each stays within one sample of
    the target proportion."""
    if not (0.0 < ratio < 1.0):
        raise ConfigurationError("split ratio must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 201]))
    strata: dict[str, list[str]] = {}
    for entry in manifest.samples:
        strata.setdefault(entry["fault_type"], []).append(entry["id"])
    train: list[str] = []
    test: list[str] = []
    for fault_name in sorted(strata):
        ids = sorted(strata[fault_name])
        order = rng.permutation(len(ids))
        n_train = int(round(ratio * len(ids)))
        for pos, idx in enumerate(order):
            (train if pos < n_train else test).append(ids[idx])
    return sorted(train), sorted(test)


def save_split(corpus_dir: Path, train: list[str], test: list[str], ratio: float,
               seed: int, data_hash: str) -> None:
    payload = {
        "data_hash": data_hash,
        "ratio": ratio,
        "seed": seed,
        "stratified_by": "fault_type",
        "train": train,
        "test": test,
    }
    (Path(corpus_dir) / "split.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_split(corpus_dir: Path) -> dict:
    path = Path(corpus_dir) / "split.json"
    if not path.exists():
        raise FileNotFoundError(f"missing split file {path}; run the split stage first")
    return json.loads(path.read_text())
