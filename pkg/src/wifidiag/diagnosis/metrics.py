"""Task labels and classification metrics.

Detection reports positive-class precision/recall; the multi-class tasks
report macro averages over the classes present in the test labels.  In
every record the F1 is the harmonic mean of the record's own precision and
recall.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..core import FaultType
from ..dataset import Labels


class Task(str, enum.Enum):
    DETECTION = "detection"
    CLASSIFICATION = "classification"
    LOCALIZATION = "localization"


# Stable class indexing for fault types (12 classes including normal).
CLASS_ORDER: list[FaultType] = list(FaultType)
FAULT_CLASS: dict[FaultType, int] = {f: i for i, f in enumerate(CLASS_ORDER)}


def label_for(labels: Labels, task: Task) -> int | None:
    """Task label for one sample; localization is undefined on normal
    samples, which the caller must drop from that task's set."""
    if task == Task.DETECTION:
        return int(labels.fault_present)
    if task == Task.CLASSIFICATION:
        return FAULT_CLASS[labels.fault_type]
    return labels.fault_node if labels.fault_present else None


@dataclass(frozen=True)
class ResultsRecord:
    method: str
    modalities: tuple[str, ...]
    task: Task
    accuracy: float
    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall", "f1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        expect = _harmonic(self.precision, self.recall)
        if abs(self.f1 - expect) > 1e-9:
            raise ValueError("f1 must be the harmonic mean of precision and recall")

    def to_dict(self) -> dict:
        return {"method": self.method, "modalities": list(self.modalities),
                "task": self.task.value, "accuracy": self.accuracy,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsRecord":
        return cls(method=d["method"], modalities=tuple(d["modalities"]), task=Task(d["task"]),
                   accuracy=d["accuracy"], precision=d["precision"], recall=d["recall"], f1=d["f1"])


def _harmonic(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def evaluate(y_true, y_pred, task: Task, method: str = "", modalities: tuple[str, ...] = ()) -> ResultsRecord:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("predictions and labels must align and be non-empty")
    accuracy = float((y_true == y_pred).mean())
    if task == Task.DETECTION:
        tp = int(((y_pred == 1) & (y_true == 1)).sum())
        fp = int(((y_pred == 1) & (y_true != 1)).sum())
        fn = int(((y_pred != 1) & (y_true == 1)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
    else:
        precisions, recalls = [], []
        for cls in sorted(np.unique(y_true)):
            tp = int(((y_pred == cls) & (y_true == cls)).sum())
            fp = int(((y_pred == cls) & (y_true != cls)).sum())
            fn = int(((y_pred != cls) & (y_true == cls)).sum())
            precisions.append(tp / (tp + fp) if tp + fp else 0.0)
            recalls.append(tp / (tp + fn) if tp + fn else 0.0)
        precision = float(np.mean(precisions))
        recall = float(np.mean(recalls))
    precision = round(precision, 10)
    recall = round(recall, 10)
    return ResultsRecord(
        method=method, modalities=tuple(modalities), task=task,
        accuracy=round(accuracy, 10), precision=precision, recall=recall,
        f1=round(_harmonic(precision, recall), 10),
    )
