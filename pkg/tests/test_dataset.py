import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from wifidiag import config as cfgmod
from wifidiag import dataset
from wifidiag.core import ConfigurationError, FaultType, Scenario, ScenarioKind
from wifidiag.dataset import LabelError, Labels, anonymize, apply_permutation


class TestLabels:
    def test_consistent_labels_accepted(self):
        Labels(True, FaultType.NODE_CRASH, 3)
        Labels(False, FaultType.NORMAL, None)

    @pytest.mark.parametrize("present,fault,node", [
        (True, FaultType.NORMAL, None),
        (False, FaultType.NODE_CRASH, 3),
        (True, FaultType.NODE_CRASH, None),
        (False, FaultType.NORMAL, 2),
    ])
    def test_inconsistent_labels_rejected(self, present, fault, node):
        with pytest.raises(LabelError):
            Labels(present, fault, node)


class TestAnonymize:
    def test_identity_permutation_changes_nothing(self, small_corpus):
        _, out, manifest, _, _ = small_corpus
        sample = dataset.load_sample(out, manifest.samples[0]["id"])
        same = apply_permutation(sample, list(range(sample.n_nodes)))
        assert same.bundle.flow == sample.bundle.flow
        assert same.labels == sample.labels

    def test_round_trip_inverse(self, small_corpus):
        _, out, manifest, _, _ = small_corpus
        sample = dataset.load_sample(out, manifest.samples[1]["id"])
        perm = [3, 0, 1, 2, 6, 5, 4]
        inverse = [perm.index(i) for i in range(7)]
        back = apply_permutation(apply_permutation(sample, perm), inverse)
        assert back.bundle.flow == sample.bundle.flow
        assert back.bundle.warning == sample.bundle.warning
        assert back.labels == sample.labels

    def test_fault_signature_follows_permutation(self, small_corpus):
        _, out, manifest, _, _ = small_corpus
        entry = next(e for e in manifest.samples if e["fault_type"] == "node_crash")
        sample = dataset.load_sample(out, entry["id"])
        target = sample.labels.fault_node
        perm = [(i + 2) % 7 for i in range(7)]
        moved = apply_permutation(sample, perm)
        assert moved.labels.fault_node == perm[target]
        # the crashed node's monitor silence must follow the relabeling
        post = [r.node for r in moved.bundle.monitor if r.t_s >= 60]
        assert perm[target] not in post

    def test_recorded_permutation_composes(self, small_corpus):
        _, out, manifest, _, _ = small_corpus
        sample = dataset.load_sample(out, manifest.samples[2]["id"])
        rng = np.random.default_rng(5)
        again = anonymize(sample, rng)
        assert sorted(again.node_permutation) == list(range(7))


class TestGeneration:
    def test_counts_and_even_fault_spread(self, small_corpus):
        _, _, manifest, _, _ = small_corpus
        assert sum(manifest.scenario_counts.values()) == 72
        assert manifest.fault_counts["normal"] == 36
        fault_counts = [v for k, v in manifest.fault_counts.items() if k != "normal"]
        assert max(fault_counts) - min(fault_counts) <= 1

    def test_zero_scenario_count_rejected(self, tmp_path):
        cfg = cfgmod.RunConfig()
        cfg.corpus.counts = {"h2h_apsta": 0, "iot_apsta": 4, "iot_adhoc": 4}
        with pytest.raises(ConfigurationError):
            dataset.generate_corpus(cfg, tmp_path / "c")

    def test_sample_seeds_follow_index(self, small_corpus):
        cfg, _, manifest, _, _ = small_corpus
        for i, entry in enumerate(manifest.samples):
            assert entry["seed"] == cfg.corpus.base_seed + i

    def test_export_import_round_trip(self, small_corpus, tmp_path):
        _, out, manifest, _, _ = small_corpus
        sample = dataset.load_sample(out, manifest.samples[5]["id"])
        dataset.save_sample(sample, tmp_path)
        again = dataset.load_sample(tmp_path, sample.id)
        assert again.bundle.flow == sample.bundle.flow
        assert again.bundle.packet == sample.bundle.packet
        assert again.bundle.warning == sample.bundle.warning
        assert again.bundle.monitor == sample.bundle.monitor
        assert again.labels == sample.labels
        assert again.node_permutation == sample.node_permutation
        assert (again.id, again.seed, again.scenario) == (sample.id, sample.seed, sample.scenario)

    def test_regeneration_is_byte_identical(self, small_corpus, tmp_path):
        cfg, out, manifest, _, _ = small_corpus
        out2 = tmp_path / "again"
        dataset.generate_corpus(cfg, out2)
        h = lambda p: hashlib.sha256(Path(p).read_bytes()).hexdigest()
        assert h(out / "manifest.json") == h(out2 / "manifest.json")
        for entry in manifest.samples[:6]:
            sdir1 = out / "samples" / entry["id"]
            sdir2 = out2 / "samples" / entry["id"]
            for f in sorted(p.name for p in sdir1.iterdir()):
                assert h(sdir1 / f) == h(sdir2 / f), f"{entry['id']}/{f}"

    def test_labels_hold_on_every_persisted_sample(self, small_corpus):
        _, out, manifest, _, _ = small_corpus
        for entry in manifest.samples:
            sample = dataset.load_sample(out, entry["id"])
            sample.validate(180)  # Labels invariant enforced at construction


class TestSplit:
    def test_global_ratio(self, small_corpus):
        _, _, manifest, train, test = small_corpus
        assert len(train) + len(test) == 72
        assert abs(len(train) - 0.8 * 72) <= len(manifest.fault_counts)

    def test_stratified_within_one_sample(self, small_corpus):
        _, _, manifest, train, test = small_corpus
        train_set = set(train)
        by_fault: dict[str, list[bool]] = {}
        for entry in manifest.samples:
            by_fault.setdefault(entry["fault_type"], []).append(entry["id"] in train_set)
        for fault, flags in by_fault.items():
            n_train = sum(flags)
            assert abs(n_train - 0.8 * len(flags)) <= 1.0, fault

    def test_single_stratum_corpus(self):
        manifest = dataset.CorpusManifest(
            config_hash="x", data_hash="x", base_seed=0, n_nodes=7, duration_s=180,
            scenario_counts={}, fault_counts={},
            modality_complete=0, modality_incomplete=0,
            samples=[{"id": f"s{i}", "fault_type": "normal"} for i in range(10)])
        train, test = dataset.split_corpus(manifest, 0.8, 1)
        assert len(train) == 8 and len(test) == 2

    def test_disjoint_and_total(self, small_corpus):
        _, _, manifest, train, test = small_corpus
        assert not set(train) & set(test)
        assert set(train) | set(test) == {e["id"] for e in manifest.samples}

    def test_missing_split_file_reports_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="split.json"):
            dataset.load_split(tmp_path)
