"""Client for text-generation endpoints plus a deterministic offline mock.

Per-node observations are rendered into structured natural-language
prompts with a machine-readable answer contract (one `name: score` line
per operational feature).  Responses are parsed, repaired where possible,
and aggregated across nodes into sample-level feature vectors.

With the endpoint set to "mock" the whole track runs offline: the mock
reads the structured lines back out of the prompt and answers through a
noisy copy of the warning mapping rules, seeded per prompt.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EndpointSection
from .core import ConfigurationError
from .preprocess import DeviationView
from .reasoning import FeatureMappingConfig, OperationalFeatureSpace
from .telemetry import WarningKind

PROMPT_VERSION = "v1"

# Human-readable phrasing for deviation-level metrics in prompts.
METRIC_PHRASES = {
    "flow_tx_bps": "send throughput",
    "flow_rx_bps": "receive throughput",
    "flow_latency_ms": "latency",
    "flow_jitter_ms": "jitter",
    "flow_loss": "packet loss rate",
    "flow_coverage": "measurement coverage",
    "pkt_size_bytes": "mean packet size",
    "pkt_iat_ms": "packet inter-arrival time",
    "pkt_fwd_pps": "forward packet rate",
    "pkt_bwd_pps": "backward packet rate",
    "pkt_retx": "retransmission fraction",
    "pkt_hdr_overhead": "header overhead",
    "mon_cpu": "cpu utilization",
    "mon_mem": "memory utilization",
    "mon_app_up": "application uptime",
    "mon_tx_rate": "transmitted bytes",
    "mon_rx_rate": "received bytes",
    "mon_rssi": "signal strength",
    "mon_coverage": "monitoring coverage",
    "flow_lat_shift": "latency change within the window",
    "flow_loss_shift": "loss change within the window",
    "flow_rx_shift": "receive-rate change within the window",
    "pkt_quiet_frac": "fraction of silent capture segments",
    "pkt_unacked_frac": "fraction of unacknowledged segments",
    "pkt_fwd_shift": "forward-rate change within the window",
    "pkt_retx_shift": "retransmission change within the window",
    "mon_cpu_shift": "cpu change within the window",
    "mon_mem_shift": "memory change within the window",
    "mon_rssi_shift": "signal-strength change within the window",
    "mon_tx_shift": "transmit-volume change within the window",
    "mon_zero_frac": "fraction of silent transmit intervals",
}


@dataclass
class PromptBundle:
    sample_id: str
    prompts: dict[int, str]
    feature_names: tuple[str, ...]


@dataclass
class LlmResponse:
    raw_text: str
    parsed: np.ndarray | None
    parse_status: str  # "ok" | "repaired" | "failed"


# --------------------------------------------------------------------------
# Prompt construction
# --------------------------------------------------------------------------

def build_prompts(sample, deviation: DeviationView, modalities: list[str],
                  space: OperationalFeatureSpace) -> PromptBundle:
    """One prompt per node, covering the chosen modality set."""
    numeric_mods = [m for m in modalities if m != "warning"]
    warn_counts: dict[int, dict[str, list]] = {}
    if "warning" in modalities and sample.bundle.warning is not None:
        for ev in sample.bundle.warning:
            slot = warn_counts.setdefault(ev.node, {})
            entry = slot.setdefault(ev.kind.value, [0, 0.0])
            entry[0] += 1
            entry[1] += ev.severity
    prompts: dict[int, str] = {}
    for node in range(sample.n_nodes):
        lines = [
            f"You are analyzing telemetry from wireless node {node} observed over a "
            f"{180}-second window in a small Wi-Fi network.",
            "",
        ]
        body: list[str] = []
        if numeric_mods:
            levels = deviation.levels[node]
            for feat, level in levels.items():
                mod = feat.split("_", 1)[0]
                mod = {"flow": "flow", "pkt": "packet", "mon": "monitor", "warn": "warning"}[mod]
                if mod not in numeric_mods or level == 0:
                    continue
                direction = "above" if level > 0 else "below"
                body.append(f"- metric {feat} ({METRIC_PHRASES.get(feat, feat)}): "
                            f"deviation level {level:+d} ({direction} normal baseline)")
        if "warning" in modalities:
            for kind in sorted(warn_counts.get(node, {})):
                count, sev_sum = warn_counts[node][kind]
                body.append(f"- warning {kind}: {count} events, mean severity {sev_sum / count:.2f}")
        if not body:
            body.append("- all monitored metrics remained near their normal baseline")
        lines.extend(body)
        lines += [
            "",
            "Score how strongly the observations indicate each operational condition, "
            "from 0.0 (absent) to 1.0 (certain).",
            "Respond with exactly one line per condition, formatted `name: score`, "
            "in this order:",
        ]
        lines.extend(f"{name}:" for name in space.names)
        prompts[node] = "\n".join(lines)
    return PromptBundle(sample_id=sample.id, prompts=prompts, feature_names=space.names)


# --------------------------------------------------------------------------
# Parsing and rendering
# --------------------------------------------------------------------------

def render_answer(scores: np.ndarray, space: OperationalFeatureSpace) -> str:
    return "\n".join(f"{name}: {float(s):.4f}" for name, s in zip(space.names, scores))


def parse_features(raw_text: str, space: OperationalFeatureSpace) -> LlmResponse:
    """Extract the named scores from free text; values clamp to [0, 1] and
    missing names default to 0, downgrading the status to repaired."""
    scores = np.zeros(space.d)
    found = 0
    repaired = False
    for i, name in enumerate(space.names):
        m = re.search(rf"^\s*\**{re.escape(name)}\**\s*[:=]\s*(-?\d+(?:\.\d+)?)",
                      raw_text, re.MULTILINE | re.IGNORECASE)
        if not m:
            repaired = True
            continue
        found += 1
        v = float(m.group(1))
        if not (0.0 <= v <= 1.0):
            v = min(1.0, max(0.0, v))
            repaired = True
        scores[i] = v
    if found == 0:
        return LlmResponse(raw_text=raw_text, parsed=None, parse_status="failed")
    return LlmResponse(raw_text=raw_text, parsed=scores,
                       parse_status="repaired" if repaired else "ok")


def aggregate_nodes(per_node: dict[int, np.ndarray]) -> tuple[np.ndarray, int]:
    """Sample-level scores are the elementwise max across nodes; the
    predicted fault node is the one with the highest per-node maximum,
    ties resolving to the lowest node index."""
    if not per_node:
        raise ConfigurationError("nothing to aggregate")
    nodes = sorted(per_node)
    stack = np.array([per_node[n] for n in nodes])
    sample_scores = stack.max(axis=0)
    strength = stack.max(axis=1)
    predicted = nodes[int(strength.argmax())]
    return sample_scores, predicted


# --------------------------------------------------------------------------
# Deterministic mock model
# --------------------------------------------------------------------------

_WARN_RULE = {
    WarningKind.CONNECTIVITY_DEGRADATION.value: ("connectivity_loss", 0.9),
    WarningKind.PACKET_LOSS.value: ("elevated_packet_loss", 0.85),
    WarningKind.EXCESSIVE_DELAY.value: ("elevated_latency", 0.85),
    WarningKind.PROCESS_DOWN.value: ("application_failure", 0.95),
    WarningKind.RESOURCE_ANOMALY.value: ("resource_exhaustion", 0.85),
    WarningKind.REASSOCIATION.value: ("connectivity_loss", 0.7),
}

_METRIC_RULE = [
    # (feature substring, direction, operational feature, base score)
    ("flow_latency_ms", +1, "elevated_latency", 0.45),
    ("flow_jitter_ms", +1, "elevated_jitter", 0.45),
    ("flow_loss", +1, "elevated_packet_loss", 0.45),
    ("pkt_retx", +1, "excessive_retransmissions", 0.45),
    ("pkt_iat_ms", +1, "throughput_degradation", 0.25),
    ("flow_tx_bps", -1, "throughput_degradation", 0.4),
    ("flow_rx_bps", -1, "throughput_degradation", 0.4),
    ("pkt_fwd_pps", -1, "throughput_degradation", 0.4),
    ("flow_coverage", -1, "connectivity_loss", 0.5),
    ("mon_coverage", -1, "connectivity_loss", 0.5),
    ("mon_cpu", +1, "resource_exhaustion", 0.45),
    ("mon_mem", +1, "resource_exhaustion", 0.35),
    ("mon_app_up", -1, "application_failure", 0.55),
    ("mon_rssi", -1, "signal_degradation", 0.5),
    ("mon_tx_rate", -1, "throughput_degradation", 0.3),
    ("mon_rx_rate", -1, "throughput_degradation", 0.3),
    ("flow_lat_shift", +1, "elevated_latency", 0.45),
    ("flow_loss_shift", +1, "elevated_packet_loss", 0.45),
    ("flow_rx_shift", -1, "throughput_degradation", 0.4),
    ("pkt_quiet_frac", +1, "connectivity_loss", 0.45),
    ("pkt_unacked_frac", +1, "connectivity_loss", 0.4),
    ("pkt_fwd_shift", -1, "throughput_degradation", 0.35),
    ("pkt_retx_shift", +1, "excessive_retransmissions", 0.45),
    ("mon_cpu_shift", +1, "resource_exhaustion", 0.4),
    ("mon_mem_shift", +1, "queue_saturation", 0.35),
    ("mon_rssi_shift", -1, "signal_degradation", 0.5),
    ("mon_tx_shift", -1, "throughput_degradation", 0.3),
    ("mon_zero_frac", +1, "connectivity_loss", 0.5),
]

_PROMPT_METRIC_RE = re.compile(r"^- metric (\w+) .*: deviation level ([+-]\d+)", re.MULTILINE)
_PROMPT_WARN_RE = re.compile(r"^- warning (\w+): (\d+) events, mean severity ([0-9.]+)", re.MULTILINE)


def mock_llm(prompt: str, seed: int = 0, noise: float = 0.1) -> str:
    """Rule-based stand-in for a text model; deterministic per (prompt, seed)."""
    space = OperationalFeatureSpace()
    scores = np.zeros(space.d)
    digest = hashlib.sha256(f"{seed}|{prompt}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    for name, count, sev in _PROMPT_WARN_RE.findall(prompt):
        rule = _WARN_RULE.get(name)
        if rule is None:
            continue
        feat, base = rule
        strength = base * (0.85 + 0.15 * min(1.0, int(count) / 20.0))
        idx = space.index(feat)
        scores[idx] = max(scores[idx], strength)
    metric_levels = {}
    for feat, level in _PROMPT_METRIC_RE.findall(prompt):
        metric_levels[feat] = int(level)
    for feat, level in metric_levels.items():
        for key, direction, target, base in _METRIC_RULE:
            if feat != key:
                continue
            if direction > 0 and level >= 2:
                idx = space.index(target)
                scores[idx] = max(scores[idx], base + 0.1 * (level - 2))
            elif direction < 0 and level <= -2:
                idx = space.index(target)
                scores[idx] = max(scores[idx], base + 0.1 * (-level - 2))
    # weak heuristic: extreme one-sided delay without loss suggests queue buildup
    if metric_levels.get("flow_latency_ms", 0) >= 3 and metric_levels.get("flow_loss", 0) <= 1:
        idx = space.index("queue_saturation")
        scores[idx] = max(scores[idx], 0.55)
    if metric_levels.get("flow_loss", 0) >= 2 and metric_levels.get("flow_latency_ms", 0) <= 1:
        idx = space.index("queue_saturation")
        scores[idx] = max(scores[idx], 0.35)
    active = scores > 0
    scores[active] = np.clip(scores[active] + rng.uniform(-noise, noise, int(active.sum())), 0.0, 1.0)
    return render_answer(scores, space)


# --------------------------------------------------------------------------
# Endpoint querying
# --------------------------------------------------------------------------

@dataclass
class AuditLog:
    path: Path | None
    entries: list[dict] = field(default_factory=list)

    def add(self, sample: str, node: int, prompt: str, status: str) -> None:
        self.entries.append({
            "timestamp": round(time.time(), 3),
            "sample": sample,
            "node": node,
            "prompt_hash": hashlib.sha256(prompt.encode()).hexdigest()[:16],
            "status": status,
        })

    def flush(self) -> None:
        if self.path is None:
            return
        with Path(self.path).open("a") as fh:
            for e in self.entries:
                fh.write(json.dumps(e, separators=(",", ":")) + "\n")
        self.entries.clear()


def _http_transport(endpoint: EndpointSection, prompt: str) -> str:
    import os
    import requests
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(endpoint.auth_env, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
    }
    resp = requests.post(endpoint.base_url.rstrip("/") + "/v1/chat/completions",
                         json=payload, headers=headers, timeout=endpoint.timeout_s)
    resp.raise_for_status()
    return resp.json()["choices"][0]["message"]["content"]


def query(endpoint: EndpointSection, bundle: PromptBundle, space: OperationalFeatureSpace,
          transport=None, audit: AuditLog | None = None, mock_seed: int = 0,
          mock_noise: float = 0.1) -> dict[int, LlmResponse]:
    """Resolve every prompt in the bundle to a parsed response.

    Transport failures and unparseable answers are retried up to the
    endpoint's retry budget; a node that exhausts retries is recorded as
    failed and the sample continues without it.
    """
    audit = audit or AuditLog(path=None)
    is_mock = endpoint.base_url == "mock"
    send = transport or _http_transport
    out: dict[int, LlmResponse] = {}
    min_interval = 1.0 / endpoint.rate_per_s if endpoint.rate_per_s > 0 else 0.0
    last_call = 0.0
    for node in sorted(bundle.prompts):
        prompt = bundle.prompts[node]
        response: LlmResponse | None = None
        for attempt in range(endpoint.max_retries + 1):
            if is_mock:
                text = mock_llm(prompt, seed=mock_seed, noise=mock_noise)
                response = parse_features(text, space)
                audit.add(bundle.sample_id, node, prompt, f"mock_{response.parse_status}")
            else:
                wait = min_interval - (time.monotonic() - last_call)
                if wait > 0:
                    time.sleep(wait)
                try:
                    text = send(endpoint, prompt)
                    last_call = time.monotonic()
                except Exception as exc:  # transport-level failure
                    audit.add(bundle.sample_id, node, prompt, f"http_error:{type(exc).__name__}")
                    continue
                response = parse_features(text, space)
                audit.add(bundle.sample_id, node, prompt, f"http_{response.parse_status}")
            if response is not None and response.parse_status != "failed":
                break
        if response is None:
            response = LlmResponse(raw_text="", parsed=None, parse_status="failed")
        out[node] = response
    audit.flush()
    return out


# --------------------------------------------------------------------------
# Distillation track
# --------------------------------------------------------------------------

def stratified_subset(entries: list[dict], fraction: float, rng_seed: int) -> list[str]:
    """Stratified-by-fault-type sample ids covering about `fraction` of the
    corpus, spanning both splits."""
    if fraction <= 0:
        raise ConfigurationError("distillation subset fraction must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 301]))
    strata: dict[str, list[str]] = {}
    for e in entries:
        strata.setdefault(e["fault_type"], []).append(e["id"])
    chosen: list[str] = []
    for fault in sorted(strata):
        ids = sorted(strata[fault])
        n = max(1, int(round(fraction * len(ids))))
        picks = rng.choice(len(ids), size=n, replace=False)
        chosen.extend(ids[i] for i in sorted(picks))
    return sorted(chosen)


def distill(feature_rows: dict[str, np.ndarray], labels: dict[str, int],
            train_ids: list[str], test_ids: list[str], classifier_kind: str,
            hyper: dict | None = None):
    """Train a downstream classifier on extracted feature vectors and
    evaluate it on the held-out part of the subset."""
    from .diagnosis import Task, evaluate, train_baseline
    tr = [sid for sid in train_ids if sid in feature_rows]
    te = [sid for sid in test_ids if sid in feature_rows]
    if not tr or not te:
        raise ConfigurationError("distillation subset is empty on one side of the split")
    X_tr = np.array([feature_rows[sid] for sid in tr])
    y_tr = np.array([labels[sid] for sid in tr])
    X_te = np.array([feature_rows[sid] for sid in te])
    y_te = np.array([labels[sid] for sid in te])
    model = train_baseline(classifier_kind, X_tr, y_tr, hyper)
    record = evaluate(y_te, model.predict(X_te), Task.CLASSIFICATION,
                      method=f"distill-{classifier_kind}", modalities=("llm",))
    return model, record
