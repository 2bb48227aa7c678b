"""Benchmark runner: iterates the (method, modality set, task) grid on the
shared split and renders the results tables.

Grid cells are independent and individually seeded, so the full run is
deterministic and repeatable record-for-record.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..core import ConfigurationError
from ..preprocess import MODALITY_FEATURES
from ..telemetry import MODALITIES
from .baselines import train_baseline
from .metrics import ResultsRecord, Task, evaluate


class FeatureTable:
    """The preprocessed all-modality feature matrix with column bookkeeping."""

    def __init__(self, ids: list[str], matrix: np.ndarray, columns: list[str]):
        if matrix.shape != (len(ids), len(columns)):
            raise ConfigurationError("feature matrix shape mismatch")
        self.ids = list(ids)
        self.matrix = matrix
        self.columns = list(columns)
        self._row = {sid: i for i, sid in enumerate(ids)}
        self._col = {c: i for i, c in enumerate(columns)}

    @classmethod
    def from_csv(cls, path: Path) -> "FeatureTable":
        with Path(path).open() as fh:
            header = fh.readline().strip().split(",")
            ids, rows = [], []
            for line in fh:
                parts = line.rstrip("\n").split(",")
                ids.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
        return cls(ids, np.array(rows), header[1:])

    def select(self, ids: list[str], modalities: list[str]) -> np.ndarray:
        cols = [self._col[c] for c in modality_columns(self.columns, modalities)]
        rows = [self._row[sid] for sid in ids]
        return self.matrix[np.ix_(rows, cols)]


def modality_columns(columns: list[str], modalities: list[str]) -> list[str]:
    """Columns of the fused view for a modality subset: the per-node blocks
    of each selected modality plus its presence-mask column."""
    feats = {f for m in modalities for f in MODALITY_FEATURES[m]}
    out = [c for c in columns if ":" in c and c.split(":", 1)[1] in feats and c.startswith("n")]
    out.extend(f"mask:{m}" for m in modalities if f"mask:{m}" in columns)
    return out


def _cell_seed(method: str, modalities: tuple[str, ...], task: str, base: int = 0) -> int:
    blob = f"{method}|{','.join(modalities)}|{task}|{base}"
    return int(hashlib.sha256(blob.encode()).hexdigest()[:8], 16)


def run_benchmark(table: FeatureTable, labels: dict[str, dict], train_ids: list[str],
                  test_ids: list[str], methods: list[str], modality_sets: list[list[str]],
                  tasks: list[Task], baseline_params: dict[str, dict] | None = None) -> list[ResultsRecord]:
    """Train and evaluate every grid cell on the shared split."""
    baseline_params = baseline_params or {}
    records: list[ResultsRecord] = []
    for method in methods:
        for mods in modality_sets:
            mods = sorted(mods, key=MODALITIES.index)
            for task in tasks:
                tr_ids, tr_y = _task_labels(labels, train_ids, task)
                te_ids, te_y = _task_labels(labels, test_ids, task)
                if not tr_ids or not te_ids:
                    raise ConfigurationError(f"no data for task {task.value}")
                X_tr = table.select(tr_ids, mods)
                X_te = table.select(te_ids, mods)
                hyper = dict(baseline_params.get(method, {}))
                if method == "mlp":
                    hyper.setdefault("seed", 13)
                    hyper["seed"] = (hyper["seed"] + _cell_seed(method, tuple(mods), task.value)) % (2 ** 31)
                model = train_baseline(method, X_tr, np.array(tr_y), hyper)
                pred = model.predict(X_te)
                records.append(evaluate(np.array(te_y), pred, task, method=method,
                                        modalities=tuple(mods)))
    records.sort(key=lambda r: (r.method, r.modalities, r.task.value))
    return records


def _task_labels(labels: dict[str, dict], ids: list[str], task: Task) -> tuple[list[str], list[int]]:
    from .metrics import FAULT_CLASS
    from ..core import FaultType
    out_ids, out_y = [], []
    for sid in ids:
        entry = labels[sid]
        fault = FaultType(entry["fault_type"])
        if task == Task.DETECTION:
            out_ids.append(sid)
            out_y.append(int(fault != FaultType.NORMAL))
        elif task == Task.CLASSIFICATION:
            out_ids.append(sid)
            out_y.append(FAULT_CLASS[fault])
        else:
            if fault != FaultType.NORMAL:
                out_ids.append(sid)
                out_y.append(int(entry["fault_node"]))
    return out_ids, out_y


# --------------------------------------------------------------------------
# Results persistence and report rendering
# --------------------------------------------------------------------------

def save_results(records: list[ResultsRecord], path: Path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), separators=(",", ":"), sort_keys=True) + "\n")


def load_results(path: Path) -> list[ResultsRecord]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(ResultsRecord.from_dict(json.loads(line)))
    return out


def fusion_deltas(records: list[ResultsRecord]) -> dict[tuple[str, tuple[str, ...]], dict[Task, float]]:
    """F1 delta of every fused modality set against the method's best single
    modality on the same task."""
    singles: dict[tuple[str, Task], float] = {}
    for r in records:
        if len(r.modalities) == 1:
            key = (r.method, r.task)
            singles[key] = max(singles.get(key, 0.0), r.f1)
    out: dict[tuple[str, tuple[str, ...]], dict[Task, float]] = {}
    for r in records:
        if len(r.modalities) > 1 and (r.method, r.task) in singles:
            out.setdefault((r.method, r.modalities), {})[r.task] = r.f1 - singles[(r.method, r.task)]
    return out


def _triplet(by_task: dict[Task, float], fmt: str = "{:.2f}") -> str:
    parts = []
    for task in (Task.DETECTION, Task.CLASSIFICATION, Task.LOCALIZATION):
        parts.append(fmt.format(by_task[task]) if task in by_task else "-")
    return " / ".join(parts)


def render_report(records: list[ResultsRecord], reasoning_summary: dict | None = None,
                  header_note: str = "") -> str:
    """Markdown report: single-modality triplets, fusion deltas, and the
    optional reasoning-consistency table."""
    lines = ["# Diagnosis benchmark report", ""]
    if header_note:
        lines += [header_note, ""]
    lines += ["Metrics: F1 per task triplet (detection / classification / localization).",
              "Detection uses positive-class F1; multi-class tasks use macro averaging.", ""]

    singles: dict[str, dict[tuple[str, ...], dict[Task, float]]] = {}
    for r in records:
        if len(r.modalities) == 1:
            singles.setdefault(r.method, {}).setdefault(r.modalities, {})[r.task] = r.f1
    if singles:
        mod_sets = sorted({mods for per in singles.values() for mods in per},
                          key=lambda ms: MODALITIES.index(ms[0]))
        head = "| method | " + " | ".join(f"{ms[0]} (D/C/L)" for ms in mod_sets) + " |"
        lines += ["## Single-modality performance", "", head,
                  "|" + "---|" * (len(mod_sets) + 1)]
        for method in sorted(singles):
            cells = [_triplet(singles[method].get(ms, {})) for ms in mod_sets]
            lines.append("| " + method + " | " + " | ".join(cells) + " |")
        lines.append("")

    deltas = fusion_deltas(records)
    if deltas:
        fused_sets = sorted({mods for _, mods in deltas}, key=lambda ms: (len(ms), ms))
        head = "| method | " + " | ".join("+".join(ms) for ms in fused_sets) + " |"
        lines += ["## Fusion gains over best single modality (D/C/L deltas)", "", head,
                  "|" + "---|" * (len(fused_sets) + 1)]
        methods = sorted({m for m, _ in deltas})
        for method in methods:
            cells = []
            for ms in fused_sets:
                by_task = deltas.get((method, ms))
                cells.append(_triplet(by_task, "{:+.2f}") if by_task else "-")
            lines.append("| " + method + " | " + " | ".join(cells) + " |")
        lines.append("")

    if reasoning_summary:
        lines += ["## Reasoning consistency (mean EF1)", "",
                  "| modality set | calibrated on train | calibrated on eval |",
                  "|---|---|---|"]
        for name, entry in sorted(reasoning_summary.items()):
            lines.append(f"| {name} | {entry['ef1_train_tau']:.3f} | {entry['ef1_eval_tau']:.3f} |")
        lines.append("")
    return "\n".join(lines)
