"""Acceptance gate: every release criterion, each printing one PASS line.

The corpus-level criteria share one seed-pinned 1,200-sample corpus built
through the CLI exactly as an operator would; the determinism criterion
regenerates it from scratch and compares bytes.
"""

import hashlib
import itertools
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from wifidiag import dataset, llmclient, preprocess, reasoning
from wifidiag.cli import main as cli_main
from wifidiag.config import RunConfig
from wifidiag.core import (
    FaultType,
    Phenomenon,
    Scenario,
    ScenarioKind,
    WindowSchedule,
    build_topology,
    build_traffic_profile,
    fault_phenomenon,
    PRIMARY_SEVERITY,
)
from wifidiag.diagnosis import Task, evaluate, train_baseline
from wifidiag.diagnosis.baselines import _one_hot, mlp_init, mlp_loss_and_grads, numeric_gradient
from wifidiag.diagnosis.benchmark import load_results
from wifidiag.diagnosis.metrics import FAULT_CLASS
from wifidiag.sim import WindowSim, run_window

from conftest import make_fault

ACCEPT_DIR = Path("/tmp/wifidiag_acceptance")


def report(name: str) -> None:
    print(f"[PASS] {name}")


@pytest.fixture(scope="session")
def corpus():
    """The seed-pinned benchmark corpus, built once through the CLI."""
    root = ACCEPT_DIR / "corpus"
    cfg = RunConfig()
    cfg.preprocess.export_modalities = []
    marker = root / "results" / "results.jsonl"
    if not marker.exists():
        shutil.rmtree(root, ignore_errors=True)
        cfg_path = ACCEPT_DIR / "config.json"
        ACCEPT_DIR.mkdir(parents=True, exist_ok=True)
        from wifidiag.config import save_config
        save_config(cfg, cfg_path)
        assert cli_main(["generate", "--config", str(cfg_path), "--out", str(root), "--quiet"]) == 0
        assert cli_main(["split", "--corpus", str(root), "--config", str(cfg_path)]) == 0
        assert cli_main(["preprocess", "--corpus", str(root), "--out", str(root / "prep"),
                         "--config", str(cfg_path)]) == 0
        assert cli_main(["bench", "--corpus", str(root), "--prep", str(root / "prep"),
                         "--out", str(root / "results"), "--config", str(cfg_path),
                         "--methods", "logreg",
                         "--modalities", "flow,packet,warning,monitor"]) == 0
    return cfg, root


class TestMetricCorrectness:
    def test_explanation_metric_unit_examples(self):
        d = 10
        a = np.zeros(d); a[[0, 3, 7]] = 1
        b = np.zeros(d); b[[3, 7, 9]] = 1
        ep, er, ef1 = reasoning.explanation_scores(a, b)
        assert (ep, er) == (pytest.approx(2 / 3), pytest.approx(2 / 3))
        assert ef1 == pytest.approx(2 / 3)
        assert reasoning.explanation_scores(np.zeros(d), np.zeros(d)) == (1.0, 1.0, 1.0)
        assert reasoning.explanation_scores(np.zeros(d), b) == (0.0, 0.0, 0.0)
        assert reasoning.explanation_scores(a, np.zeros(d)) == (0.0, 0.0, 0.0)
        same = reasoning.explanation_scores(a, a)
        assert same == (1.0, 1.0, 1.0)
        disjoint = np.zeros(d); disjoint[[1, 2]] = 1
        assert reasoning.explanation_scores(a, disjoint) == (0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            reasoning.explanation_scores(np.zeros(3), np.zeros(4))
        report("metric correctness: explanation precision/recall/F1 incl. edge rules")

    def test_f1_confusion_example_to_1e9(self):
        y_true = [1] * 8 + [0] * 2 + [1] * 4 + [0] * 6
        y_pred = [1] * 8 + [1] * 2 + [0] * 4 + [0] * 6
        rec = evaluate(y_true, y_pred, Task.DETECTION)
        assert abs(rec.precision - 0.8) < 1e-9
        assert abs(rec.recall - 2 / 3) < 1e-9
        assert abs(rec.f1 - 8 / 11) < 1e-9
        report("metric correctness: confusion example P=0.8 R=0.667 F1=0.727 at 1e-9")


class TestCalibrationOptimality:
    def test_matches_joint_brute_force_on_small_instances(self):
        rng = np.random.default_rng(20250810)
        for trial in range(300):
            n = int(rng.integers(1, 7))
            d = int(rng.integers(1, 3))
            if trial % 3 == 0:
                scores = np.round(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(n, d)), 3)
            else:
                scores = np.round(rng.random((n, d)), 2)
            truths = rng.integers(0, 2, (n, d)).astype(bool)
            if trial % 5 == 0:
                truths[:] = False
            tau = reasoning.calibrate_thresholds(list(zip(scores, truths)))
            ours = scores >= tau[None, :]
            best = -1.0
            optimal = []
            cands = [reasoning.threshold_candidates(scores[:, i]) for i in range(d)]
            for combo in itertools.product(*cands):
                preds = scores >= np.array(combo)[None, :]
                obj = reasoning.micro_explanation_f1(preds, truths)
                if obj > best + 1e-12:
                    best, optimal = obj, [preds]
                elif abs(obj - best) <= 1e-12:
                    optimal.append(preds)
            ours_obj = reasoning.micro_explanation_f1(ours, truths)
            assert ours_obj == pytest.approx(best, abs=1e-12), trial
            assert any(np.array_equal(ours, p) for p in optimal), trial
        report("calibration optimality: matches joint brute force on 300 small instances")


class TestCorpusShape:
    def test_normal_missing_and_fault_spread(self, corpus):
        _, root = corpus
        manifest = dataset.load_manifest(root)
        n = sum(manifest.scenario_counts.values())
        assert n == 1200
        normal_frac = manifest.fault_counts["normal"] / n
        assert abs(normal_frac - 0.5) <= 0.02
        missing_frac = manifest.modality_incomplete / n
        assert abs(missing_frac - 0.10) <= 0.02
        counts = [v for k, v in manifest.fault_counts.items() if k != "normal"]
        assert max(counts) - min(counts) <= 1
        report(f"corpus shape: normal {normal_frac:.3f}, missing {missing_frac:.3f}, "
               f"fault spread {min(counts)}-{max(counts)}")


class TestDeterminism:
    def test_regeneration_and_rerun_byte_identical(self, corpus):
        cfg, root = corpus
        again = ACCEPT_DIR / "corpus_again"
        shutil.rmtree(again, ignore_errors=True)
        cfg_path = ACCEPT_DIR / "config.json"
        assert cli_main(["generate", "--config", str(cfg_path), "--out", str(again), "--quiet"]) == 0
        assert cli_main(["split", "--corpus", str(again), "--config", str(cfg_path)]) == 0
        assert cli_main(["preprocess", "--corpus", str(again), "--out", str(again / "prep"),
                         "--config", str(cfg_path)]) == 0
        assert cli_main(["bench", "--corpus", str(again), "--prep", str(again / "prep"),
                         "--out", str(again / "results"), "--config", str(cfg_path),
                         "--methods", "logreg",
                         "--modalities", "flow,packet,warning,monitor"]) == 0
        h = lambda p: hashlib.sha256(Path(p).read_bytes()).hexdigest()
        assert h(root / "manifest.json") == h(again / "manifest.json")
        assert h(root / "results" / "results.jsonl") == h(again / "results" / "results.jsonl")
        shutil.rmtree(again)
        report("determinism: regenerated manifest and rerun results byte-identical")


class TestFaultPhenomenology:
    SEEDS = list(range(41, 61))

    @pytest.fixture(scope="class")
    def h2h(self):
        scenario = Scenario(ScenarioKind.H2H_APSTA)
        topo = build_topology(scenario, 7, 42)
        traffic = build_traffic_profile(scenario, topo, 42)
        return scenario, topo, traffic, WindowSchedule()

    def _trace(self, h2h, fault_type, seed, target=2):
        scenario, topo, traffic, schedule = h2h
        return run_window(scenario, topo, traffic,
                          make_fault(fault_type, target=target, seed=seed), schedule, seed)

    @staticmethod
    def _series(trace, key, field, lo, hi):
        return np.array([getattr(trace.snapshots[t].flows[key], field) for t in range(lo, hi)])

    def test_node_crash_zero_delivery(self, h2h):
        for seed in self.SEEDS:
            trace = self._trace(h2h, FaultType.NODE_CRASH, seed)
            for key in trace.flow_keys:
                if 2 not in key:
                    continue
                assert np.all(self._series(trace, key, "delivered_bps", 60, 180) == 0.0)
        report("phenomenology: node crash zero delivery on 20 seeds")

    def test_bufferbloat_latency_with_bounded_loss(self, h2h):
        for seed in self.SEEDS:
            trace = self._trace(h2h, FaultType.BUFFER_BLOAT, seed)
            key = next(k for k in trace.flow_keys if k[0] == 2)
            pre = np.median(self._series(trace, key, "latency_ms", 0, 60))
            post = np.median(self._series(trace, key, "latency_ms", 60, 180))
            pre_loss = max(np.mean(self._series(trace, key, "loss", 0, 60)), 1e-9)
            post_loss = np.mean(self._series(trace, key, "loss", 60, 180))
            assert post >= 3.0 * pre, seed
            assert post_loss <= 2.0 * pre_loss, seed
        report("phenomenology: bufferbloat >=3x latency with <=2x loss on 20 seeds")

    def test_queue_overflow_loss(self, h2h):
        for seed in self.SEEDS:
            overflow = self._trace(h2h, FaultType.QUEUE_OVERFLOW, seed)
            bloat = self._trace(h2h, FaultType.BUFFER_BLOAT, seed)
            key = next(k for k in overflow.flow_keys if k[0] == 2)
            pre_loss = max(np.mean(self._series(overflow, key, "loss", 0, 60)), 1e-9)
            post_loss = np.mean(self._series(overflow, key, "loss", 60, 180))
            assert post_loss >= 2.0 * pre_loss, seed
            assert np.median(self._series(overflow, key, "latency_ms", 60, 180)) < \
                np.median(self._series(bloat, key, "latency_ms", 60, 180)), seed
        report("phenomenology: queue overflow >=2x loss, latency below bufferbloat, 20 seeds")

    def test_app_crash_process_down(self, h2h):
        from wifidiag.telemetry import WarningKind, emit_warnings
        for seed in self.SEEDS:
            trace = self._trace(h2h, FaultType.APP_CRASH, seed)
            events = emit_warnings(trace)
            assert any(e.kind == WarningKind.PROCESS_DOWN and e.node == 2 for e in events), seed
        report("phenomenology: app crash raises ProcessDown on 20 seeds")

    def test_disconnect_vs_lag_classes(self, h2h):
        from test_sim import check_phenomenon
        for fault_type in FaultType:
            if fault_type == FaultType.NORMAL:
                continue
            for seed in self.SEEDS:
                trace = self._trace(h2h, fault_type, seed)
                assert check_phenomenon(trace, fault_type, 2), (fault_type.value, seed)
        report("phenomenology: disconnect/lag invariants hold for 11 faults x 20 seeds")

    def test_monotone_severity(self, h2h):
        """Doubling the primary severity scalar never shrinks the fault's
        dominant symptom (latency, loss, or outage fraction)."""
        scenario, topo, traffic, schedule = h2h
        symptom = {
            FaultType.POOR_LINK_QUALITY: ("loss", "mean"),
            FaultType.APP_SLOWDOWN: ("latency_ms", "median"),
            FaultType.TRAFFIC_OVERLOAD: ("loss", "mean"),
            FaultType.HIDDEN_NODE: ("loss", "mean"),
            FaultType.RATE_ADAPTATION_FAILURE: ("latency_ms", "median"),
            FaultType.PROBE_FAILURE: ("outage", "mean"),
            FaultType.BEACON_LOSS: ("outage", "mean"),
            FaultType.BUFFER_BLOAT: ("latency_ms", "median"),
            FaultType.QUEUE_OVERFLOW: ("loss", "mean"),
        }
        for fault_type, (field, stat) in symptom.items():
            name = PRIMARY_SEVERITY[fault_type]
            for seed in (43, 47, 53):
                base = make_fault(fault_type, target=2, seed=seed)
                lo_val = base.severity[name]
                hi = dict(base.severity)
                hi[name] = lo_val * 2.0
                doubled = type(base)(base.fault, base.target, base.injected_at_s, hi,
                                     base.second_node)
                lo_m = self._symptom(scenario, topo, traffic, schedule, base, seed, field, stat)
                hi_m = self._symptom(scenario, topo, traffic, schedule, doubled, seed, field, stat)
                assert hi_m >= lo_m - 1e-9, (fault_type.value, seed)
        report("phenomenology: doubling primary severity never shrinks the symptom")

    def _symptom(self, scenario, topo, traffic, schedule, fault, seed, field, stat):
        trace = run_window(scenario, topo, traffic, fault, schedule, seed)
        keys = [k for k in trace.flow_keys if fault.target in k]
        if field == "outage":
            vals = [np.mean(self._series(trace, k, "delivered_bps", 60, 180) == 0.0) for k in keys]
            return max(vals)
        agg = np.median if stat == "median" else np.mean
        return max(agg(self._series(trace, k, field, 60, 180)) for k in keys)


class TestTaskAndModalityOrdering:
    def test_logreg_task_ordering_per_modality(self, corpus):
        _, root = corpus
        records = load_results(root / "results" / "results.jsonl")
        for mod in ("flow", "packet", "warning", "monitor"):
            by_task = {r.task: r.f1 for r in records
                       if r.method == "logreg" and r.modalities == (mod,)}
            d, c, l = by_task[Task.DETECTION], by_task[Task.CLASSIFICATION], by_task[Task.LOCALIZATION]
            assert d >= c + 0.03, (mod, d, c)
            assert c >= l + 0.03, (mod, c, l)
            print(f"  logreg {mod}: D={d:.3f} C={c:.3f} L={l:.3f}")
        report("task ordering: detection >= classification >= localization (gap >= 0.03) "
               "for every single modality")

    def test_warning_beats_flow_classification(self, corpus):
        _, root = corpus
        records = load_results(root / "results" / "results.jsonl")
        get = lambda mod: next(r.f1 for r in records if r.method == "logreg"
                               and r.modalities == (mod,) and r.task == Task.CLASSIFICATION)
        warning, flow = get("warning"), get("flow")
        assert warning >= flow + 0.10, (warning, flow)
        report(f"modality ordering: warning classification {warning:.3f} >= flow {flow:.3f} + 0.10")


class TestOperationalFeatureStrength:
    def test_decision_tree_on_ground_truth_features(self, corpus):
        cfg, root = corpus
        split = dataset.load_split(root)
        mapping = cfg.features
        X, y = {}, {}
        for sample in dataset.iter_samples(root):
            X[sample.id] = reasoning.build_ground_truth(sample.bundle.warning or [],
                                                        sample.labels.fault_type, mapping)
            y[sample.id] = FAULT_CLASS[sample.labels.fault_type]
        X_tr = np.array([X[i] for i in split["train"]])
        y_tr = np.array([y[i] for i in split["train"]])
        X_te = np.array([X[i] for i in split["test"]])
        y_te = np.array([y[i] for i in split["test"]])
        model = train_baseline("dtree", X_tr, y_tr, {"max_depth": 12})
        rec = evaluate(y_te, model.predict(X_te), Task.CLASSIFICATION)
        assert rec.f1 >= 0.78, rec.f1
        report(f"operational features: decision tree on ground truth reaches F1 {rec.f1:.3f} >= 0.78")


class TestMockLlmTrack:
    @pytest.fixture(scope="class")
    def reasoning_outputs(self, corpus):
        _, root = corpus
        cfg_path = ACCEPT_DIR / "config.json"
        llm_dir = root / "llm"
        if not (llm_dir / "meta.json").exists():
            assert cli_main(["llm-extract", "--corpus", str(root), "--prep", str(root / "prep"),
                             "--out", str(llm_dir), "--config", str(cfg_path)]) == 0
        out = root / "reasoning"
        if not (out / "summary.json").exists():
            assert cli_main(["reason-eval", "--corpus", str(root), "--llm", str(llm_dir),
                             "--out", str(out), "--config", str(cfg_path)]) == 0
        return root, json.loads((out / "summary.json").read_text()), out

    def test_warning_track_dominates_flow_track(self, reasoning_outputs):
        _, summary, _ = reasoning_outputs
        warning = summary["modality_sets"]["warning"]["ef1_train_tau"]
        flow = summary["modality_sets"]["flow"]["ef1_train_tau"]
        assert warning >= flow, (warning, flow)
        report(f"mock-LLM reasoning: EF1 warning {warning:.3f} >= flow {flow:.3f}")

    def test_distilled_classifier_beats_random(self, reasoning_outputs):
        _, _, out = reasoning_outputs
        records = load_results(out / "distill_results.jsonl")
        for rec in records:
            assert rec.f1 > 1.0 / 12.0, rec
        best = max(r.f1 for r in records)
        report(f"mock-LLM distillation: classification F1 {best:.3f} beats 1/12 random baseline")


class TestPreprocessingInvariants:
    def test_min_max_and_clamping(self):
        lo, hi = np.array([10.0]), np.array([20.0])
        assert preprocess.minmax_scale(np.array([15.0]), lo, hi)[0] == 0.5
        assert preprocess.minmax_scale(np.array([25.0]), lo, hi)[0] == 1.0
        assert preprocess.minmax_scale(np.array([-5.0]), lo, hi)[0] == 0.0
        assert preprocess.minmax_scale(np.array([7.0]), np.array([7.0]), np.array([7.0]))[0] == 0.5
        report("preprocessing: min-max range, clamping, constant-feature rule")

    def test_discretization_boundary_table(self):
        table = [(0.0, 0), (0.999, 0), (1.0, 1), (1.999, 1), (2.0, 2), (2.5, 2),
                 (2.999, 2), (3.0, 3), (50.0, 3)]
        for z, level in table:
            assert preprocess.deviation_level(10 + z, 10.0, 1.0) == level
            assert preprocess.deviation_level(10 - z, 10.0, 1.0) == -level
        assert preprocess.deviation_level(5.0, 5.0, 0.0) == 0
        assert preprocess.deviation_level(5.5, 5.0, 0.0) == 3
        report("preprocessing: discretization boundary table incl. zero-variance rule")

    def test_permutation_equivariance_oracle(self, corpus):
        _, root = corpus
        split = dataset.load_split(root)
        norm = preprocess.fit_normalizer(
            dataset.iter_samples(root, split["train"][:60]), 180)
        sample = next(dataset.iter_samples(root, [split["test"][0]]))
        perm = [3, 0, 6, 2, 5, 1, 4]
        base = preprocess.aggregate_features(sample, norm, 180)
        moved = preprocess.aggregate_features(dataset.apply_permutation(sample, perm), norm, 180)
        f = len(preprocess.ALL_FEATURES)
        for node in range(7):
            np.testing.assert_allclose(moved.vector[perm[node] * f:(perm[node] + 1) * f],
                                       base.vector[node * f:(node + 1) * f], atol=1e-12)
        report("preprocessing: node permutation commutes with feature aggregation")

    def test_mlp_gradient_against_finite_differences(self):
        rng = np.random.default_rng(31)
        for instance in range(3):
            X = rng.normal(size=(10, 6))
            Y = _one_hot(rng.integers(0, 4, 10), [0, 1, 2, 3])
            params = mlp_init(6, 5, 4, seed=instance)
            _, grads = mlp_loss_and_grads(params, X, Y, l2=0.02)
            for key in params:
                flat = params[key].reshape(-1)
                picks = rng.choice(flat.size, size=min(5, flat.size), replace=False)
                for flat_idx in picks:
                    index = np.unravel_index(flat_idx, params[key].shape)
                    numeric = numeric_gradient(params, X, Y, 0.02, key, index)
                    analytic = grads[key][index]
                    denom = max(abs(numeric), abs(analytic), 1e-8)
                    assert abs(numeric - analytic) / denom < 1e-4
        report("preprocessing: MLP analytic gradients match finite differences (<1e-4)")


class TestPipelineSmoke:
    def test_small_end_to_end_pipeline(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "corpus": {"counts": {"h2h_apsta": 68, "iot_apsta": 66, "iot_adhoc": 66},
                       "base_seed": 31415},
            "preprocess": {"export_modalities": []},
            "llm": {"subset_fraction": 0.3},
        }))
        root = tmp_path / "smoke"
        assert cli_main(["generate", "--config", str(cfg_path), "--out", str(root), "--quiet"]) == 0
        assert cli_main(["split", "--corpus", str(root), "--config", str(cfg_path)]) == 0
        assert cli_main(["preprocess", "--corpus", str(root), "--out", str(root / "prep"),
                         "--config", str(cfg_path)]) == 0
        assert cli_main(["bench", "--corpus", str(root), "--prep", str(root / "prep"),
                         "--out", str(root / "results"), "--config", str(cfg_path),
                         "--methods", "logreg,dtree", "--modalities", "warning,flow+warning"]) == 0
        assert cli_main(["llm-extract", "--corpus", str(root), "--prep", str(root / "prep"),
                         "--out", str(root / "llm"), "--config", str(cfg_path)]) == 0
        assert cli_main(["reason-eval", "--corpus", str(root), "--llm", str(root / "llm"),
                         "--out", str(root / "reasoning"), "--config", str(cfg_path)]) == 0
        assert cli_main(["report",
                         "--results", str(root / "results" / "results.jsonl"),
                         str(root / "reasoning" / "distill_results.jsonl"),
                         "--reasoning", str(root / "reasoning" / "summary.json"),
                         "--out", str(root / "report.md")]) == 0
        text = (root / "report.md").read_text()
        assert "Single-modality performance" in text
        assert "Fusion gains" in text
        report("pipeline smoke: 200-sample corpus through every stage incl. report")
