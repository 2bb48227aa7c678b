"""Run configuration: one structured file that pins every default the
pipeline depends on, with strict parsing and a stable content hash.

Every stage embeds the resolved hash in its outputs so downstream stages
can refuse to mix artifacts produced under different settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .core import ConfigurationError, SEVERITY_SCHEMAS, WindowSchedule
from .reasoning import FeatureMappingConfig
from .sim import SimParams
from .telemetry import MODALITIES, WarningRuleConfig


@dataclass
class CorpusSection:
    counts: dict[str, int] = field(default_factory=lambda: {
        "h2h_apsta": 400, "iot_apsta": 400, "iot_adhoc": 400})
    normal_fraction: float = 0.5
    missing_rate: float = 0.1
    base_seed: int = 20250810
    n_nodes: int = 7


@dataclass
class ScheduleSection:
    duration_s: int = 180
    injection_at_s: int = 60
    tick_s: float = 1.0

    def to_schedule(self) -> WindowSchedule:
        return WindowSchedule(self.duration_s, self.injection_at_s, self.tick_s)


@dataclass
class SplitSection:
    ratio: float = 0.8
    seed: int = 7


@dataclass
class PreprocessSection:
    sequence_length: int | None = None  # None: corpus mean rounded to a multiple of 10
    export_modalities: list[str] = field(default_factory=lambda: ["packet"])


@dataclass
class LogRegParams:
    learning_rate: float = 0.05
    epochs: int = 2400
    l2: float = 1e-4


@dataclass
class KnnParams:
    k: int = 5


@dataclass
class TreeParams:
    max_depth: int = 12
    min_samples_leaf: int = 2


@dataclass
class MlpParams:
    hidden_units: int = 64
    learning_rate: float = 0.01
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 13


@dataclass
class BaselinesSection:
    logreg: LogRegParams = field(default_factory=LogRegParams)
    knn: KnnParams = field(default_factory=KnnParams)
    dtree: TreeParams = field(default_factory=TreeParams)
    mlp: MlpParams = field(default_factory=MlpParams)


@dataclass
class EndpointSection:
    base_url: str = "mock"          # "mock" keeps everything offline
    model: str = "mock-analyst-1"
    auth_env: str = "WIFIDIAG_LLM_TOKEN"
    timeout_s: float = 30.0
    max_inflight: int = 4
    max_retries: int = 2
    rate_per_s: float = 8.0


@dataclass
class LlmSection:
    endpoint: EndpointSection = field(default_factory=EndpointSection)
    subset_fraction: float = 0.1
    mock_noise: float = 0.1
    seed: int = 11
    modalities: list[list[str]] = field(default_factory=lambda: [["warning"], ["flow"]])


@dataclass
class BenchSection:
    methods: list[str] = field(default_factory=lambda: ["logreg", "knn", "dtree", "mlp"])
    modality_sets: list[list[str]] = field(default_factory=lambda: [
        ["flow"], ["packet"], ["warning"], ["monitor"],
        ["flow", "packet"], ["flow", "warning"], ["packet", "warning"],
        ["flow", "packet", "warning"]])
    tasks: list[str] = field(default_factory=lambda: ["detection", "classification", "localization"])


@dataclass
class RunConfig:
    corpus: CorpusSection = field(default_factory=CorpusSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    sim: SimParams = field(default_factory=SimParams)
    severity: dict[str, dict[str, list[float]]] = field(default_factory=lambda: {
        fault.value: {name: [lo, hi] for name, (lo, hi) in schema.items()}
        for fault, schema in SEVERITY_SCHEMAS.items() if schema})
    warnings: WarningRuleConfig = field(default_factory=WarningRuleConfig)
    split: SplitSection = field(default_factory=SplitSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    baselines: BaselinesSection = field(default_factory=BaselinesSection)
    llm: LlmSection = field(default_factory=LlmSection)
    bench: BenchSection = field(default_factory=BenchSection)
    features: FeatureMappingConfig = field(default_factory=FeatureMappingConfig)

    def severity_schemas(self) -> dict:
        """Severity ranges in the form core.sample_severity expects."""
        from .core import FaultType
        out = {f: {} for f in FaultType}
        for fault_name, params in self.severity.items():
            out[FaultType(fault_name)] = {k: (float(lo), float(hi)) for k, (lo, hi) in params.items()}
        return out

    def to_dict(self) -> dict:
        return _to_plain(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def data_hash(self) -> str:
        """Hash of the sections that determine the generated data and its
        partition; stages gate on this so that output-only settings (which
        sequences to export, which methods to run) stay interchangeable."""
        d = self.to_dict()
        blob = json.dumps({k: d[k] for k in ("corpus", "schedule", "sim", "severity",
                                             "warnings", "split")},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if isinstance(obj, FeatureMappingConfig):
            return obj.to_dict()
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_dict(cls: type, data: dict, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        target = _FIELD_TYPES.get((cls, name))
        if target is not None:
            kwargs[name] = _from_dict(target, value, f"{path}.{name}")
        elif (cls, name) == (RunConfig, "features"):
            kwargs[name] = FeatureMappingConfig.from_dict(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_FIELD_TYPES: dict[tuple[type, str], type] = {
    (RunConfig, "corpus"): CorpusSection,
    (RunConfig, "schedule"): ScheduleSection,
    (RunConfig, "sim"): SimParams,
    (RunConfig, "warnings"): WarningRuleConfig,
    (RunConfig, "split"): SplitSection,
    (RunConfig, "preprocess"): PreprocessSection,
    (RunConfig, "baselines"): BaselinesSection,
    (RunConfig, "llm"): LlmSection,
    (RunConfig, "bench"): BenchSection,
    (BaselinesSection, "logreg"): LogRegParams,
    (BaselinesSection, "knn"): KnnParams,
    (BaselinesSection, "dtree"): TreeParams,
    (BaselinesSection, "mlp"): MlpParams,
    (LlmSection, "endpoint"): EndpointSection,
}


def config_from_dict(data: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, data, "config")
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if not (0.0 <= cfg.corpus.normal_fraction <= 1.0):
        raise ConfigurationError("normal_fraction must lie in [0, 1]")
    if not (0.0 <= cfg.corpus.missing_rate <= 0.5):
        raise ConfigurationError("missing_rate must lie in [0, 0.5]")
    if cfg.corpus.n_nodes < 3:
        raise ConfigurationError("n_nodes must be at least 3")
    for name, count in cfg.corpus.counts.items():
        if count <= 0:
            raise ConfigurationError(f"per-scenario count for {name} must be positive")
    if not (0.0 < cfg.split.ratio < 1.0):
        raise ConfigurationError("split ratio must lie in (0, 1)")
    cfg.schedule.to_schedule()
    for mods in cfg.bench.modality_sets + cfg.llm.modalities:
        if not mods or any(m not in MODALITIES for m in mods):
            raise ConfigurationError(f"invalid modality set {mods}")


def load_config(path: str | Path | None) -> RunConfig:
    """Load a config file; a missing path yields pure defaults."""
    if path is None:
        return RunConfig()
    raw = json.loads(Path(path).read_text())
    return config_from_dict(raw)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
