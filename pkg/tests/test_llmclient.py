import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wifidiag import dataset, llmclient, preprocess
from wifidiag.config import EndpointSection
from wifidiag.core import ConfigurationError
from wifidiag.llmclient import (
    AuditLog,
    aggregate_nodes,
    build_prompts,
    distill,
    mock_llm,
    parse_features,
    query,
    render_answer,
    stratified_subset,
)
from wifidiag.reasoning import OperationalFeatureSpace

SPACE = OperationalFeatureSpace()


@pytest.fixture(scope="module")
def prepared(small_corpus):
    _, out, manifest, train, test = small_corpus
    norm = preprocess.fit_normalizer(dataset.iter_samples(out, train), 180)
    samples = {s.id: s for s in dataset.iter_samples(out)}
    return manifest, norm, samples, train, test


class TestPrompts:
    def test_one_prompt_per_node(self, prepared):
        manifest, norm, samples, _, _ = prepared
        s = samples[manifest.samples[0]["id"]]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["flow", "warning"], SPACE)
        assert sorted(bundle.prompts) == list(range(7))

    def test_quiet_node_reads_as_normal(self, prepared):
        manifest, norm, samples, _, _ = prepared
        normal_id = next(e["id"] for e in manifest.samples if e["fault_type"] == "normal")
        s = samples[normal_id]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["warning"], SPACE)
        quiet = [p for p in bundle.prompts.values() if "normal baseline" in p]
        assert quiet, "a normal sample should have quiet nodes"
        for p in quiet:
            assert "- warning" not in p

    def test_warning_prompt_lists_kinds_and_counts(self, prepared):
        manifest, norm, samples, _, _ = prepared
        crash_id = next(e["id"] for e in manifest.samples if e["fault_type"] == "app_crash")
        s = samples[crash_id]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["warning"], SPACE)
        joined = "\n".join(bundle.prompts.values())
        assert "- warning process_down:" in joined
        assert "events, mean severity" in joined


class TestParsing:
    def test_well_formed_answer_verbatim(self):
        scores = np.round(np.linspace(0.0, 0.9, SPACE.d), 4)
        resp = parse_features(render_answer(scores, SPACE), SPACE)
        assert resp.parse_status == "ok"
        np.testing.assert_allclose(resp.parsed, scores, atol=1e-9)

    def test_out_of_range_clamped_and_repaired(self):
        text = "\n".join(f"{n}: 1.7" if i == 0 else f"{n}: 0.2"
                         for i, n in enumerate(SPACE.names))
        resp = parse_features(text, SPACE)
        assert resp.parse_status == "repaired"
        assert resp.parsed[0] == 1.0

    def test_missing_names_default_zero_repaired(self):
        text = f"{SPACE.names[2]}: 0.8"
        resp = parse_features(text, SPACE)
        assert resp.parse_status == "repaired"
        assert resp.parsed[2] == 0.8
        assert resp.parsed.sum() == pytest.approx(0.8)

    def test_prose_fails(self):
        resp = parse_features("The network looks degraded overall.", SPACE)
        assert resp.parse_status == "failed"
        assert resp.parsed is None

    @given(st.lists(st.integers(0, 10000), min_size=10, max_size=10))
    @settings(max_examples=100, deadline=None)
    def test_render_parse_round_trip(self, raw):
        scores = np.array(raw) / 10000.0
        resp = parse_features(render_answer(scores, SPACE), SPACE)
        assert resp.parse_status == "ok"
        np.testing.assert_allclose(resp.parsed, np.round(scores, 4), atol=1e-9)


class TestAggregation:
    def test_single_node_identity(self):
        v = np.linspace(0, 1, SPACE.d)
        scores, node = aggregate_nodes({4: v})
        np.testing.assert_array_equal(scores, v)
        assert node == 4

    def test_dominant_node_wins(self):
        low = np.full(SPACE.d, 0.2)
        high = np.full(SPACE.d, 0.7)
        scores, node = aggregate_nodes({0: low, 2: high, 5: low})
        assert node == 2
        np.testing.assert_array_equal(scores, high)

    def test_all_zero_ties_break_low(self):
        z = np.zeros(SPACE.d)
        _, node = aggregate_nodes({3: z, 1: z, 5: z})
        assert node == 1

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            aggregate_nodes({})

    @given(st.permutations(list(range(5))))
    @settings(max_examples=40, deadline=None)
    def test_relabeling_nodes_tracks_the_same_vector(self, perm):
        rng = np.random.default_rng(42)
        vectors = [np.round(rng.random(SPACE.d), 3) for _ in range(5)]
        base_scores, base_node = aggregate_nodes(dict(enumerate(vectors)))
        relabeled = {perm[i]: v for i, v in enumerate(vectors)}
        scores, node = aggregate_nodes(relabeled)
        np.testing.assert_array_equal(scores, base_scores)
        strength = {n: v.max() for n, v in relabeled.items()}
        assert strength[node] == max(strength.values())


class TestMock:
    def test_deterministic(self):
        prompt = "- warning packet_loss: 12 events, mean severity 0.64\n"
        assert mock_llm(prompt, seed=3) == mock_llm(prompt, seed=3)
        assert mock_llm(prompt, seed=3) != mock_llm(prompt, seed=4)

    def test_normal_prompt_near_zero(self):
        resp = parse_features(mock_llm("- all monitored metrics remained near their normal baseline",
                                       seed=1), SPACE)
        assert resp.parsed.max() <= 0.1

    def test_packet_loss_warning_maps_high(self):
        prompt = "- warning packet_loss: 3 events, mean severity 0.5"
        resp = parse_features(mock_llm(prompt, seed=2), SPACE)
        assert resp.parsed[SPACE.index("elevated_packet_loss")] >= 0.6

    def test_deviation_levels_map_to_features(self):
        prompt = ("- metric flow_latency_ms (latency): deviation level +3 (above normal baseline)\n"
                  "- metric flow_tx_bps (send throughput): deviation level -3 (below normal baseline)")
        resp = parse_features(mock_llm(prompt, seed=2), SPACE)
        assert resp.parsed[SPACE.index("elevated_latency")] >= 0.4
        assert resp.parsed[SPACE.index("throughput_degradation")] >= 0.3


class TestQuery:
    def test_mock_endpoint_makes_no_transport_calls(self, prepared, tmp_path):
        manifest, norm, samples, _, _ = prepared
        s = samples[manifest.samples[0]["id"]]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["warning"], SPACE)
        audit = AuditLog(path=tmp_path / "audit.jsonl")
        responses = query(EndpointSection(base_url="mock"), bundle, SPACE, audit=audit)
        assert len(responses) == 7
        entries = [json.loads(l) for l in (tmp_path / "audit.jsonl").read_text().splitlines()]
        assert entries and all(e["status"].startswith("mock_") for e in entries)

    def test_http_transport_retries_then_succeeds(self, prepared):
        manifest, norm, samples, _, _ = prepared
        s = samples[manifest.samples[0]["id"]]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["warning"], SPACE)
        bundle.prompts = {0: bundle.prompts[0]}
        calls = {"n": 0}

        def flaky(endpoint, prompt):
            calls["n"] += 1
            if calls["n"] == 1:
                raise ConnectionError("boom")
            return render_answer(np.full(SPACE.d, 0.5), SPACE)

        ep = EndpointSection(base_url="http://example.invalid", max_retries=2, rate_per_s=0.0)
        audit = AuditLog(path=None)
        responses = query(ep, bundle, SPACE, transport=flaky, audit=audit)
        assert responses[0].parse_status == "ok"
        statuses = [e["status"] for e in audit.entries]
        assert "http_error:ConnectionError" in statuses

    def test_exhausted_retries_record_failure(self, prepared):
        manifest, norm, samples, _, _ = prepared
        s = samples[manifest.samples[0]["id"]]
        dv = preprocess.discretize(s, norm, 180)
        bundle = build_prompts(s, dv, ["warning"], SPACE)
        bundle.prompts = {0: bundle.prompts[0]}

        def dead(endpoint, prompt):
            raise ConnectionError("down")

        ep = EndpointSection(base_url="http://example.invalid", max_retries=1, rate_per_s=0.0)
        responses = query(ep, bundle, SPACE, transport=dead)
        assert responses[0].parse_status == "failed"
        assert responses[0].parsed is None


class TestDistill:
    def test_subset_is_stratified_and_sized(self, prepared):
        manifest, _, _, _, _ = prepared
        ids = stratified_subset(manifest.samples, 0.25, rng_seed=1)
        assert len(ids) >= 12  # each of the 12 strata contributes at least one
        faults = {e["id"]: e["fault_type"] for e in manifest.samples}
        assert {faults[i] for i in ids} == set(faults.values())

    def test_zero_fraction_rejected(self, prepared):
        manifest, _, _, _, _ = prepared
        with pytest.raises(ConfigurationError):
            stratified_subset(manifest.samples, 0.0, rng_seed=1)

    def test_empty_side_rejected(self):
        with pytest.raises(ConfigurationError):
            distill({"a": np.zeros(3)}, {"a": 0}, ["a"], ["b"], "dtree")

    def test_mock_features_beat_random_guessing(self, prepared):
        manifest, norm, samples, train, test = prepared
        rows, labels = {}, {}
        from wifidiag.diagnosis.metrics import FAULT_CLASS
        from wifidiag.core import FaultType
        for e in manifest.samples:
            s = samples[e["id"]]
            dv = preprocess.discretize(s, norm, 180)
            bundle = build_prompts(s, dv, ["warning", "flow", "monitor"], SPACE)
            responses = query(EndpointSection(base_url="mock"), bundle, SPACE, mock_seed=7)
            parsed = {n: r.parsed for n, r in responses.items() if r.parsed is not None}
            rows[e["id"]], _ = aggregate_nodes(parsed)
            labels[e["id"]] = FAULT_CLASS[FaultType(e["fault_type"])]
        _, record = distill(rows, labels, train, test, "dtree")
        assert record.f1 > 1.0 / 12.0
