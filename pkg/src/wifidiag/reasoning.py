"""Operational-feature representation and reasoning-consistency scoring.

Network conditions are summarized as a fixed vector of ten named
operational features.  Ground-truth vectors are binary and built by a
rule-based union of warning-event mappings and fault-condition mappings;
model-generated vectors are continuous scores in [0, 1] that get binarized
against per-dimension thresholds before set-style comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FaultType
from .telemetry import WarningEvent, WarningKind

OPERATIONAL_FEATURES: tuple[str, ...] = (
    "connectivity_loss",
    "signal_degradation",
    "elevated_packet_loss",
    "elevated_latency",
    "elevated_jitter",
    "throughput_degradation",
    "excessive_retransmissions",
    "queue_saturation",
    "application_failure",
    "resource_exhaustion",
)


@dataclass(frozen=True)
class OperationalFeatureSpace:
    names: tuple[str, ...] = OPERATIONAL_FEATURES

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("operational feature names must be unique")

    @property
    def d(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


# Warning kind -> operational features it evidences.
DEFAULT_WARNING_MAP: dict[str, tuple[str, ...]] = {
    WarningKind.CONNECTIVITY_DEGRADATION.value: ("connectivity_loss",),
    WarningKind.PACKET_LOSS.value: ("elevated_packet_loss",),
    WarningKind.EXCESSIVE_DELAY.value: ("elevated_latency",),
    WarningKind.PROCESS_DOWN.value: ("application_failure",),
    WarningKind.RESOURCE_ANOMALY.value: ("resource_exhaustion",),
    WarningKind.REASSOCIATION.value: ("connectivity_loss",),
}

# Fault condition -> operational features it implies.
DEFAULT_FAULT_MAP: dict[str, tuple[str, ...]] = {
    FaultType.NODE_CRASH.value: ("connectivity_loss", "throughput_degradation"),
    FaultType.POOR_LINK_QUALITY.value: (
        "signal_degradation", "elevated_packet_loss", "elevated_jitter", "throughput_degradation"),
    FaultType.APP_CRASH.value: ("application_failure", "throughput_degradation"),
    FaultType.APP_SLOWDOWN.value: ("application_failure", "elevated_latency"),
    FaultType.TRAFFIC_OVERLOAD.value: ("resource_exhaustion", "elevated_latency", "elevated_packet_loss"),
    FaultType.HIDDEN_NODE.value: ("elevated_packet_loss", "excessive_retransmissions", "elevated_latency"),
    FaultType.RATE_ADAPTATION_FAILURE.value: ("throughput_degradation", "excessive_retransmissions"),
    FaultType.PROBE_FAILURE.value: ("connectivity_loss",),
    FaultType.BEACON_LOSS.value: ("connectivity_loss",),
    FaultType.BUFFER_BLOAT.value: ("elevated_latency", "queue_saturation"),
    FaultType.QUEUE_OVERFLOW.value: ("elevated_packet_loss", "queue_saturation"),
    FaultType.NORMAL.value: (),
}


@dataclass(frozen=True)
class FeatureMappingConfig:
    """The feature-space definition plus both rule tables, swappable via config."""

    space: OperationalFeatureSpace = field(default_factory=OperationalFeatureSpace)
    warning_map: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_WARNING_MAP))
    fault_map: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_FAULT_MAP))

    def __post_init__(self):
        known = set(self.space.names)
        for table in (self.warning_map, self.fault_map):
            for key, feats in table.items():
                unknown = set(feats) - known
                if unknown:
                    raise ValueError(f"mapping for {key} names unknown features {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "features": list(self.space.names),
            "warning_map": {k: list(v) for k, v in self.warning_map.items()},
            "fault_map": {k: list(v) for k, v in self.fault_map.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMappingConfig":
        return cls(
            space=OperationalFeatureSpace(tuple(data["features"])),
            warning_map={k: tuple(v) for k, v in data["warning_map"].items()},
            fault_map={k: tuple(v) for k, v in data["fault_map"].items()},
        )


def build_ground_truth(warnings: list[WarningEvent], fault: FaultType,
                       mapping: FeatureMappingConfig | None = None) -> np.ndarray:
    """Binary ground-truth feature vector: union of the warning-derived and
    fault-derived activations (activating a feature twice is idempotent)."""
    mapping = mapping or FeatureMappingConfig()
    vec = np.zeros(mapping.space.d, dtype=np.int8)
    for ev in warnings:
        for feat in mapping.warning_map.get(ev.kind.value, ()):
            vec[mapping.space.index(feat)] = 1
    for feat in mapping.fault_map.get(fault.value, ()):
        vec[mapping.space.index(feat)] = 1
    return vec


def binarize(e_llm: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Threshold continuous scores dimension-wise; the comparison is inclusive."""
    e_llm = np.asarray(e_llm, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if e_llm.shape != tau.shape:
        raise ValueError(f"dimension mismatch: scores {e_llm.shape} vs thresholds {tau.shape}")
    return (e_llm >= tau).astype(np.int8)


def explanation_scores(e_pred: np.ndarray, e_truth: np.ndarray) -> tuple[float, float, float]:
    """Explanation precision / recall / F1 over activated feature sets.

    Edge rules: two empty sets agree perfectly; if exactly one side is
    empty, the undefined ratio counts as 0 and the F1 is 0.
    """
    e_pred = np.asarray(e_pred).astype(bool)
    e_truth = np.asarray(e_truth).astype(bool)
    if e_pred.shape != e_truth.shape:
        raise ValueError(f"dimension mismatch: {e_pred.shape} vs {e_truth.shape}")
    n_pred = int(e_pred.sum())
    n_truth = int(e_truth.sum())
    if n_pred == 0 and n_truth == 0:
        return 1.0, 1.0, 1.0
    inter = int((e_pred & e_truth).sum())
    ep = inter / n_pred if n_pred else 0.0
    er = inter / n_truth if n_truth else 0.0
    ef1 = 2.0 * ep * er / (ep + er) if ep + er > 0 else 0.0
    return ep, er, ef1


def micro_explanation_f1(preds: np.ndarray, truths: np.ndarray) -> float:
    """Micro-averaged explanation F1, pooled over samples and dimensions."""
    preds = np.asarray(preds).astype(bool)
    truths = np.asarray(truths).astype(bool)
    if preds.shape != truths.shape:
        raise ValueError("prediction/truth shape mismatch")
    tp = int((preds & truths).sum())
    fp = int((preds & ~truths).sum())
    fn = int((~preds & truths).sum())
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def threshold_candidates(values: np.ndarray) -> list[float]:
    """Candidate thresholds for one dimension: zero, every observed score,
    and one value above the maximum (when headroom exists) so the
    all-negative predictor stays reachable.  F1 is piecewise-constant
    between observed scores, so nothing else can matter."""
    vals = sorted({float(v) for v in values})
    cands = sorted(set([0.0] + vals))
    top = cands[-1]
    if top < 1.0:
        cands.append(min(1.0, (top + 1.0) / 2.0) if top < 1.0 else 1.0)
    return cands


def _binary_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def calibrate_thresholds(pairs: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Pick one threshold per dimension from training pairs.

    Stage 1 maximizes each dimension's own binary F1 over its candidate set
    (ties resolved toward the largest threshold).  Stage 2 sweeps the
    coordinates, replacing a threshold only when the change strictly
    improves the pooled micro explanation F1, until a full pass makes no
    change.
    """
    if not pairs:
        raise ValueError("calibration requires at least one (scores, truth) pair")
    scores = np.asarray([p[0] for p in pairs], dtype=float)
    truths = np.asarray([p[1] for p in pairs]).astype(bool)
    if scores.shape != truths.shape:
        raise ValueError("scores/truth shape mismatch")
    n, d = scores.shape
    cands = [threshold_candidates(scores[:, i]) for i in range(d)]

    tau = np.zeros(d)
    for i in range(d):
        best_f1, best_tau = -1.0, 0.0
        for c in cands[i]:
            f1 = _binary_f1(scores[:, i] >= c, truths[:, i])
            if f1 > best_f1 or (f1 == best_f1 and c > best_tau):
                best_f1, best_tau = f1, c
        tau[i] = best_tau

    def objective(t: np.ndarray) -> float:
        return micro_explanation_f1(scores >= t[None, :], truths)

    current = objective(tau)
    for _ in range(32):
        changed = False
        for i in range(d):
            best_obj, best_tau = current, tau[i]
            for c in cands[i]:
                if c == tau[i]:
                    continue
                trial = tau.copy()
                trial[i] = c
                obj = objective(trial)
                if obj > best_obj or (obj == best_obj and obj > current and c > best_tau):
                    best_obj, best_tau = obj, c
            if best_obj > current:
                tau[i] = best_tau
                current = best_obj
                changed = True
        if not changed:
            break
    return tau
