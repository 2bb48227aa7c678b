"""Shared normalization plus the three paradigm-specific representations:
fixed-size node-major feature vectors for statistical learners, padded
tick tensors for sequence models, and discretized deviation levels for
text-based analysis.

Normalization statistics are always fitted on the training split only;
z-score statistics additionally restrict to normal-labeled samples so that
deviations are measured against healthy behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigurationError
from .dataset import Sample
from .telemetry import (
    MODALITIES,
    MONITOR_CADENCE_TICKS,
    PACKET_SEGMENT_TICKS,
    Side,
    TelemetryBundle,
    WarningKind,
)

FLOW_FEATURES = ("flow_tx_bps", "flow_rx_bps", "flow_latency_ms", "flow_jitter_ms",
                 "flow_loss", "flow_zero_frac", "flow_coverage",
                 "flow_lat_shift", "flow_loss_shift", "flow_rx_shift")
PACKET_FEATURES = ("pkt_size_bytes", "pkt_iat_ms", "pkt_fwd_pps", "pkt_bwd_pps",
                   "pkt_retx", "pkt_hdr_overhead", "pkt_quiet_frac", "pkt_unacked_frac",
                   "pkt_fwd_shift", "pkt_retx_shift")
WARNING_FEATURES = ("warn_connectivity", "warn_packetloss", "warn_delay",
                    "warn_procdown", "warn_resource", "warn_reassoc",
                    "warn_connectivity_sev", "warn_packetloss_sev", "warn_delay_sev",
                    "warn_procdown_sev", "warn_resource_sev", "warn_reassoc_sev",
                    "warn_severity")
MONITOR_FEATURES = ("mon_cpu", "mon_mem", "mon_app_up", "mon_tx_rate", "mon_rx_rate",
                    "mon_rssi", "mon_coverage", "mon_zero_frac",
                    "mon_cpu_shift", "mon_mem_shift", "mon_rssi_shift", "mon_tx_shift")

# Packet captures run in monitor mode on a shared medium: a node's trace
# mixes its own flows with overheard neighbor traffic at reduced weight.
PKT_OVERHEAR_WEIGHT = 0.85

# Split point for within-window shift features: the first third of the
# window acts as the sample's own behavioral baseline.
_EARLY_FRACTION = 1 / 3

MODALITY_FEATURES: dict[str, tuple[str, ...]] = {
    "flow": FLOW_FEATURES,
    "packet": PACKET_FEATURES,
    "warning": WARNING_FEATURES,
    "monitor": MONITOR_FEATURES,
}

ALL_FEATURES: tuple[str, ...] = tuple(f for m in MODALITIES for f in MODALITY_FEATURES[m])

# Per-tick feature schema used by the sequence pipeline (window-level shift
# features have no per-tick counterpart).
SEQ_MODALITY_FEATURES: dict[str, tuple[str, ...]] = {
    "flow": ("flow_tx_bps", "flow_rx_bps", "flow_latency_ms", "flow_jitter_ms", "flow_loss"),
    "packet": ("pkt_size_bytes", "pkt_iat_ms", "pkt_fwd_pps", "pkt_bwd_pps",
               "pkt_retx", "pkt_hdr_overhead"),
    "warning": ("warn_connectivity", "warn_packetloss", "warn_delay",
                "warn_procdown", "warn_resource", "warn_reassoc"),
    "monitor": ("mon_cpu", "mon_mem", "mon_app_up", "mon_tx_rate", "mon_rx_rate", "mon_rssi"),
}

_WARN_ORDER = (WarningKind.CONNECTIVITY_DEGRADATION, WarningKind.PACKET_LOSS,
               WarningKind.EXCESSIVE_DELAY, WarningKind.PROCESS_DOWN,
               WarningKind.RESOURCE_ANOMALY, WarningKind.REASSOCIATION)

# Heavy-tailed features live on a log scale so that min-max normalization
# keeps contrast across their full dynamic range.
LOG_FEATURES = {"flow_tx_bps", "flow_rx_bps", "flow_latency_ms", "flow_jitter_ms",
                "pkt_iat_ms", "pkt_fwd_pps", "pkt_bwd_pps",
                "mon_tx_rate", "mon_rx_rate"}

# Log-domain shift features saturate at a factor-of-twenty change so that a
# total blackout cannot stretch the normalization range and wash out milder
# shifts.
SHIFT_CLIP = {"flow_lat_shift": 3.0, "flow_rx_shift": 3.0, "pkt_fwd_shift": 3.0,
              "mon_tx_shift": 3.0}


def _log_compress(matrix: np.ndarray, names) -> np.ndarray:
    for i, name in enumerate(names):
        if name in LOG_FEATURES:
            matrix[..., i] = np.log1p(matrix[..., i])
        clip = SHIFT_CLIP.get(name)
        if clip is not None:
            matrix[..., i] = np.clip(matrix[..., i], -clip, clip)
    return matrix


# --------------------------------------------------------------------------
# Raw per-node aggregation
# --------------------------------------------------------------------------

def node_feature_matrix(bundle: TelemetryBundle, modality: str, n_nodes: int,
                        duration_s: int) -> np.ndarray | None:
    """Window-mean features per node for one modality; None when absent."""
    if modality not in MODALITIES:
        raise ConfigurationError(f"unknown modality {modality}")
    records = getattr(bundle, modality)
    if records is None:
        return None
    if modality == "flow":
        mat = _flow_matrix(records, n_nodes, duration_s)
    elif modality == "packet":
        mat = _packet_matrix(records, n_nodes, duration_s)
    elif modality == "warning":
        mat = _warning_matrix(records, n_nodes, duration_s)
    else:
        mat = _monitor_matrix(records, n_nodes, duration_s)
    return _log_compress(mat, MODALITY_FEATURES[modality])


def _flow_matrix(records, n_nodes: int, duration_s: int) -> np.ndarray:
    out = np.zeros((n_nodes, len(FLOW_FEATURES)))
    cut = duration_s * _EARLY_FRACTION
    tx_sum = np.zeros(n_nodes); tx_cnt = np.zeros(n_nodes)
    rx_sum = np.zeros(n_nodes); rx_cnt = np.zeros(n_nodes)
    lat = np.zeros(n_nodes); jit = np.zeros(n_nodes); loss = np.zeros(n_nodes)
    zero = np.zeros(n_nodes)
    # early/late accumulators for the shift features
    acc = np.zeros((n_nodes, 2, 3))   # [node, early/late, (lat, loss, rx)]
    cnt = np.zeros((n_nodes, 2, 2))   # [node, early/late, (sender, receiver)]
    roles: dict[int, set] = {n: set() for n in range(n_nodes)}
    seen = np.zeros(n_nodes)
    for r in records:
        half = 0 if r.t_s < cut else 1
        if r.side == Side.SENDER:
            tx_sum[r.src] += r.throughput_bps; tx_cnt[r.src] += 1
            lat[r.src] += r.latency_ms; jit[r.src] += r.jitter_ms; loss[r.src] += r.loss
            acc[r.src, half, 0] += r.latency_ms
            acc[r.src, half, 1] += r.loss
            cnt[r.src, half, 0] += 1
            roles[r.src].add(("s", r.src, r.dst)); seen[r.src] += 1
        else:
            rx_sum[r.dst] += r.throughput_bps; rx_cnt[r.dst] += 1
            if r.throughput_bps == 0.0:
                zero[r.dst] += 1
            acc[r.dst, half, 2] += r.throughput_bps
            cnt[r.dst, half, 1] += 1
            roles[r.dst].add(("r", r.src, r.dst)); seen[r.dst] += 1
    for n in range(n_nodes):
        out[n, 0] = tx_sum[n] / tx_cnt[n] if tx_cnt[n] else 0.0
        out[n, 1] = rx_sum[n] / rx_cnt[n] if rx_cnt[n] else 0.0
        out[n, 2] = lat[n] / tx_cnt[n] if tx_cnt[n] else 0.0
        out[n, 3] = jit[n] / tx_cnt[n] if tx_cnt[n] else 0.0
        out[n, 4] = loss[n] / tx_cnt[n] if tx_cnt[n] else 0.0
        out[n, 5] = zero[n] / rx_cnt[n] if rx_cnt[n] else 0.0
        expected = len(roles[n]) * duration_s
        out[n, 6] = seen[n] / expected if expected else 1.0
        e_lat = acc[n, 0, 0] / cnt[n, 0, 0] if cnt[n, 0, 0] else 0.0
        l_lat = acc[n, 1, 0] / cnt[n, 1, 0] if cnt[n, 1, 0] else 0.0
        e_loss = acc[n, 0, 1] / cnt[n, 0, 0] if cnt[n, 0, 0] else 0.0
        l_loss = acc[n, 1, 1] / cnt[n, 1, 0] if cnt[n, 1, 0] else 0.0
        e_rx = acc[n, 0, 2] / cnt[n, 0, 1] if cnt[n, 0, 1] else 0.0
        l_rx = acc[n, 1, 2] / cnt[n, 1, 1] if cnt[n, 1, 1] else 0.0
        out[n, 7] = np.log1p(l_lat) - np.log1p(e_lat)
        out[n, 8] = l_loss - e_loss
        out[n, 9] = np.log1p(l_rx) - np.log1p(e_rx)
    return out


def _packet_matrix(records, n_nodes: int, duration_s: int) -> np.ndarray:
    out = np.zeros((n_nodes, len(PACKET_FEATURES)))
    cut = duration_s * _EARLY_FRACTION
    base = np.zeros((n_nodes, 6)); wsum = np.zeros(n_nodes)
    quiet = np.zeros(n_nodes); unacked = np.zeros(n_nodes)
    halves = np.zeros((n_nodes, 2, 2))  # [node, early/late, (fwd, retx)]
    hw = np.zeros((n_nodes, 2))
    for r in records:
        vals = np.array((r.mean_pkt_size_bytes, r.mean_iat_ms, r.mean_fwd_rate_pps,
                         r.mean_bwd_rate_pps, r.retx_fraction, r.mean_hdr_overhead))
        half = 0 if r.t_s < cut else 1
        for n in range(n_nodes):
            w = 1.0 if n in (r.src, r.dst) else PKT_OVERHEAR_WEIGHT
            base[n] += w * vals
            wsum[n] += w
            if r.mean_fwd_rate_pps == 0.0:
                quiet[n] += w
            elif r.mean_bwd_rate_pps == 0.0:
                unacked[n] += w
            halves[n, half, 0] += w * r.mean_fwd_rate_pps
            halves[n, half, 1] += w * r.retx_fraction
            hw[n, half] += w
    for n in range(n_nodes):
        if wsum[n]:
            out[n, :6] = base[n] / wsum[n]
            out[n, 6] = quiet[n] / wsum[n]
            out[n, 7] = unacked[n] / wsum[n]
        e = halves[n, 0] / hw[n, 0] if hw[n, 0] else np.zeros(2)
        l = halves[n, 1] / hw[n, 1] if hw[n, 1] else np.zeros(2)
        out[n, 8] = np.log1p(l[0]) - np.log1p(e[0])
        out[n, 9] = l[1] - e[1]
    return out


def _warning_matrix(records, n_nodes: int, duration_s: int) -> np.ndarray:
    out = np.zeros((n_nodes, len(WARNING_FEATURES)))
    sev = np.zeros((n_nodes, 6))
    sev_sum = np.zeros(n_nodes); sev_cnt = np.zeros(n_nodes)
    kind_idx = {k: i for i, k in enumerate(_WARN_ORDER)}
    for r in records:
        i = kind_idx[r.kind]
        out[r.node, i] += 1.0
        sev[r.node, i] += r.severity
        sev_sum[r.node] += r.severity; sev_cnt[r.node] += 1
    for n in range(n_nodes):
        for i in range(6):
            sev[n, i] = sev[n, i] / out[n, i] if out[n, i] else 0.0
        out[n, 12] = sev_sum[n] / sev_cnt[n] if sev_cnt[n] else 0.0
    out[:, :6] /= duration_s
    out[:, 6:12] = sev
    return out


def _monitor_matrix(records, n_nodes: int, duration_s: int) -> np.ndarray:
    out = np.zeros((n_nodes, len(MONITOR_FEATURES)))
    cut = duration_s * _EARLY_FRACTION
    cnt = np.zeros(n_nodes)
    zeros = np.zeros(n_nodes)
    interval = float(MONITOR_CADENCE_TICKS)
    halves = np.zeros((n_nodes, 2, 4))  # [node, early/late, (cpu, mem, rssi, tx)]
    hc = np.zeros((n_nodes, 2))
    for r in records:
        n = r.node
        cnt[n] += 1
        if r.tx_bytes == 0:
            zeros[n] += 1
        out[n, 0] += r.cpu_pct
        out[n, 1] += r.mem_pct
        out[n, 2] += 1.0 if r.app_process_up else 0.0
        out[n, 3] += r.tx_bytes / interval
        out[n, 4] += r.rx_bytes / interval
        out[n, 5] += r.rssi_dbm
        half = 0 if r.t_s < cut else 1
        halves[n, half] += (r.cpu_pct, r.mem_pct, r.rssi_dbm, r.tx_bytes / interval)
        hc[n, half] += 1
    mask = cnt > 0
    out[mask, :6] /= cnt[mask, None]
    out[~mask, 5] = -95.0
    expected = max(1, duration_s // MONITOR_CADENCE_TICKS)
    out[:, 6] = cnt / expected
    out[mask, 7] = zeros[mask] / cnt[mask]
    for n in range(n_nodes):
        e = halves[n, 0] / hc[n, 0] if hc[n, 0] else np.zeros(4)
        l = halves[n, 1] / hc[n, 1] if hc[n, 1] else np.zeros(4)
        out[n, 8] = l[0] - e[0]
        out[n, 9] = l[1] - e[1]
        out[n, 10] = (l[2] - e[2]) if hc[n].all() else 0.0
        out[n, 11] = np.log1p(l[3]) - np.log1p(e[3])
    return out


def raw_feature_tensor(sample: Sample, duration_s: int) -> tuple[np.ndarray, dict[str, bool]]:
    """All-modality raw per-node tensor (n_nodes, F_total); missing
    modalities contribute zero blocks, flagged in the presence map."""
    blocks = []
    present: dict[str, bool] = {}
    for m in MODALITIES:
        mat = node_feature_matrix(sample.bundle, m, sample.n_nodes, duration_s)
        present[m] = mat is not None
        blocks.append(mat if mat is not None else np.zeros((sample.n_nodes, len(MODALITY_FEATURES[m]))))
    return np.concatenate(blocks, axis=1), present


# --------------------------------------------------------------------------
# Normalization statistics
# --------------------------------------------------------------------------

@dataclass
class NormStats:
    feature_names: tuple[str, ...]
    col_min: np.ndarray
    col_max: np.ndarray
    normal_mean: np.ndarray
    normal_std: np.ndarray
    seq_feature_names: tuple[str, ...] = ()
    seq_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seq_max: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "col_min": self.col_min.tolist(),
            "col_max": self.col_max.tolist(),
            "normal_mean": self.normal_mean.tolist(),
            "normal_std": self.normal_std.tolist(),
            "seq_feature_names": list(self.seq_feature_names),
            "seq_min": self.seq_min.tolist(),
            "seq_max": self.seq_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            feature_names=tuple(d["feature_names"]),
            col_min=np.array(d["col_min"]),
            col_max=np.array(d["col_max"]),
            normal_mean=np.array(d["normal_mean"]),
            normal_std=np.array(d["normal_std"]),
            seq_feature_names=tuple(d["seq_feature_names"]),
            seq_min=np.array(d["seq_min"]),
            seq_max=np.array(d["seq_max"]),
        )


def fit_normalizer(train_samples, duration_s: int, with_sequences: bool = False) -> NormStats:
    """Per-feature min/max over the training split (values pooled across
    nodes, so columns stay exchangeable under node permutation) plus
    mean/std over normal-labeled training samples for z-scores."""
    mins = None
    maxs = None
    normal_rows = []
    seq_min = seq_max = None
    count = 0
    for sample in train_samples:
        count += 1
        tensor, present = raw_feature_tensor(sample, duration_s)
        rows = tensor  # (nodes, F)
        pm = _presence_row(present)
        lo = np.where(pm, rows.min(axis=0), np.inf)
        hi = np.where(pm, rows.max(axis=0), -np.inf)
        mins = lo if mins is None else np.minimum(mins, lo)
        maxs = hi if maxs is None else np.maximum(maxs, hi)
        if not sample.labels.fault_present:
            masked = np.where(pm[None, :], rows, np.nan)
            normal_rows.append(masked)
        if with_sequences:
            seq = sequence_tensor_raw(sample, duration_s)
            smin = seq.reshape(-1, seq.shape[-1]).min(axis=0)
            smax = seq.reshape(-1, seq.shape[-1]).max(axis=0)
            seq_min = smin if seq_min is None else np.minimum(seq_min, smin)
            seq_max = smax if seq_max is None else np.maximum(seq_max, smax)
    if count < 2:
        raise ConfigurationError("fitting needs at least two training samples")
    mins = np.where(np.isfinite(mins), mins, 0.0)
    maxs = np.where(np.isfinite(maxs), maxs, 0.0)
    if normal_rows:
        pool = np.concatenate(normal_rows, axis=0)
        mu = np.nanmean(pool, axis=0)
        sigma = np.nanstd(pool, axis=0)
        mu = np.where(np.isnan(mu), 0.0, mu)
        sigma = np.where(np.isnan(sigma), 0.0, sigma)
    else:
        mu = np.zeros(len(ALL_FEATURES))
        sigma = np.zeros(len(ALL_FEATURES))
    seq_names = tuple(f for m in MODALITIES for f in SEQ_MODALITY_FEATURES[m]) if with_sequences else ()
    return NormStats(
        feature_names=ALL_FEATURES,
        col_min=mins, col_max=maxs,
        normal_mean=mu, normal_std=sigma,
        seq_feature_names=seq_names,
        seq_min=seq_min if seq_min is not None else np.zeros(0),
        seq_max=seq_max if seq_max is not None else np.zeros(0),
    )


def _presence_row(present: dict[str, bool]) -> np.ndarray:
    flags = []
    for m in MODALITIES:
        flags.extend([present[m]] * len(MODALITY_FEATURES[m]))
    return np.array(flags, dtype=bool)


def minmax_scale(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1] with clamping; a constant feature maps to 0.5."""
    span = hi - lo
    flat = span <= 0
    safe = np.where(flat, 1.0, span)
    out = (values - lo) / safe
    out = np.clip(out, 0.0, 1.0)
    return np.where(flat, 0.5, out)


# --------------------------------------------------------------------------
# Views
# --------------------------------------------------------------------------

@dataclass
class FeatureMatrixView:
    sample_id: str
    vector: np.ndarray
    columns: list[str]


@dataclass
class SequenceView:
    sample_id: str
    tensor: np.ndarray      # (L, nodes, features)
    mask: np.ndarray        # (L,) 1.0 for real ticks
    feature_names: list[str]


@dataclass
class DeviationView:
    sample_id: str
    levels: list[dict[str, int]]  # per node: feature -> level in {-3..3}


def feature_columns(n_nodes: int, modalities: list[str]) -> list[str]:
    cols = []
    for node in range(n_nodes):
        for m in modalities:
            cols.extend(f"n{node}:{f}" for f in MODALITY_FEATURES[m])
    cols.extend(f"mask:{m}" for m in modalities)
    return cols


def aggregate_features(sample: Sample, norm: NormStats, duration_s: int,
                       modalities: list[str] | None = None) -> FeatureMatrixView:
    """Node-major window means, min-max normalized; a missing modality
    yields a zero block plus a zeroed presence mask column."""
    modalities = list(modalities or MODALITIES)
    tensor, present = raw_feature_tensor(sample, duration_s)
    scaled = minmax_scale(tensor, norm.col_min[None, :], norm.col_max[None, :])
    col_of = {f: i for i, f in enumerate(norm.feature_names)}
    parts = []
    for node in range(sample.n_nodes):
        for m in modalities:
            idx = [col_of[f] for f in MODALITY_FEATURES[m]]
            block = scaled[node, idx]
            if not present[m]:
                block = np.zeros(len(idx))
            parts.append(block)
    parts.append(np.array([1.0 if present[m] else 0.0 for m in modalities]))
    return FeatureMatrixView(
        sample_id=sample.id,
        vector=np.concatenate(parts),
        columns=feature_columns(sample.n_nodes, modalities),
    )


# -- sequence pipeline -----------------------------------------------------

def sequence_tensor_raw(sample: Sample, duration_s: int,
                        modalities: list[str] | None = None) -> np.ndarray:
    """Raw per-tick node features (ticks, nodes, F); absent modalities and
    silent ticks are zero."""
    modalities = list(modalities or MODALITIES)
    n, ticks = sample.n_nodes, duration_s
    blocks = []
    b = sample.bundle
    for m in modalities:
        fcount = len(SEQ_MODALITY_FEATURES[m])
        block = np.zeros((ticks, n, fcount))
        records = getattr(b, m)
        if records is None:
            blocks.append(block)
            continue
        if m == "flow":
            cnt = np.zeros((ticks, n, 2))
            for r in records:
                if r.side == Side.SENDER:
                    block[r.t_s, r.src, 0] += r.throughput_bps
                    block[r.t_s, r.src, 2] += r.latency_ms
                    block[r.t_s, r.src, 3] += r.jitter_ms
                    block[r.t_s, r.src, 4] += r.loss
                    cnt[r.t_s, r.src, 0] += 1
                else:
                    block[r.t_s, r.dst, 1] += r.throughput_bps
                    cnt[r.t_s, r.dst, 1] += 1
            s = np.maximum(cnt[:, :, 0], 1.0)
            block[:, :, 0] /= s
            block[:, :, 2] /= s
            block[:, :, 3] /= s
            block[:, :, 4] /= s
            block[:, :, 1] /= np.maximum(cnt[:, :, 1], 1.0)
        elif m == "packet":
            cnt = np.zeros((ticks, n))
            for r in records:
                hi = min(ticks, r.t_s + PACKET_SEGMENT_TICKS)
                vals = (r.mean_pkt_size_bytes, r.mean_iat_ms, r.mean_fwd_rate_pps,
                        r.mean_bwd_rate_pps, r.retx_fraction, r.mean_hdr_overhead)
                block[r.t_s:hi, r.src, :] += vals
                cnt[r.t_s:hi, r.src] += 1
            block /= np.maximum(cnt, 1.0)[:, :, None]
        elif m == "warning":
            kind_idx = {k: i for i, k in enumerate(_WARN_ORDER)}
            for r in records:
                block[r.t_s, r.node, kind_idx[r.kind]] += 1.0
        else:
            interval = float(MONITOR_CADENCE_TICKS)
            for r in records:
                hi = min(ticks, r.t_s + MONITOR_CADENCE_TICKS)
                block[r.t_s:hi, r.node, :] = (r.cpu_pct, r.mem_pct,
                                              1.0 if r.app_process_up else 0.0,
                                              r.tx_bytes / interval, r.rx_bytes / interval,
                                              r.rssi_dbm)
        blocks.append(_log_compress(block, SEQ_MODALITY_FEATURES[m]))
    return np.concatenate(blocks, axis=2)


def to_sequence(sample: Sample, length: int, norm: NormStats, duration_s: int,
                modalities: list[str] | None = None) -> SequenceView:
    """Truncate or zero-pad the tick axis to a fixed length, recording the
    padding mask; values are min-max normalized with sequence statistics."""
    modalities = list(modalities or MODALITIES)
    raw = sequence_tensor_raw(sample, duration_s, modalities)
    if norm.seq_min.size == 0:
        raise ConfigurationError("normalizer lacks sequence statistics; refit with sequences enabled")
    names = [f for m in modalities for f in SEQ_MODALITY_FEATURES[m]]
    all_names = list(norm.seq_feature_names)
    idx = [all_names.index(f) for f in names]
    scaled = minmax_scale(raw, norm.seq_min[idx][None, None, :], norm.seq_max[idx][None, None, :])
    ticks = scaled.shape[0]
    mask = np.ones(length)
    if ticks >= length:
        tensor = scaled[:length]
    else:
        pad = np.zeros((length - ticks, scaled.shape[1], scaled.shape[2]))
        tensor = np.concatenate([scaled, pad], axis=0)
        mask[ticks:] = 0.0
    return SequenceView(sample_id=sample.id, tensor=tensor, mask=mask, feature_names=names)


def default_sequence_length(tick_counts: list[int]) -> int:
    """Corpus mean tick count rounded to the nearest multiple of ten."""
    if not tick_counts:
        raise ConfigurationError("no samples to derive a sequence length from")
    mean = float(np.mean(tick_counts))
    return max(10, int(round(mean / 10.0)) * 10)


# -- deviation pipeline ------------------------------------------------------

def discretize(sample: Sample, norm: NormStats, duration_s: int,
               modalities: list[str] | None = None) -> DeviationView:
    """Signed deviation levels per node and feature.

    z = (window mean - normal mean) / normal std; |z| buckets at 1, 2 and 3
    give levels 0..3 with the sign of the deviation.  A zero-variance
    feature maps to level 0 when it equals the normal mean and to a
    saturated +-3 otherwise.
    """
    modalities = list(modalities or MODALITIES)
    tensor, present = raw_feature_tensor(sample, duration_s)
    col_of = {f: i for i, f in enumerate(norm.feature_names)}
    levels: list[dict[str, int]] = []
    for node in range(sample.n_nodes):
        entry: dict[str, int] = {}
        for m in modalities:
            if not present[m]:
                continue
            for f in MODALITY_FEATURES[m]:
                i = col_of[f]
                value = tensor[node, i]
                mu, sigma = norm.normal_mean[i], norm.normal_std[i]
                entry[f] = deviation_level(value, mu, sigma)
        levels.append(entry)
    return DeviationView(sample_id=sample.id, levels=levels)


def deviation_level(value: float, mu: float, sigma: float) -> int:
    if sigma <= 0:
        if value == mu:
            return 0
        return 3 if value > mu else -3
    z = (value - mu) / sigma
    mag = min(3, int(abs(z)))  # |z|<1 -> 0, 1<=|z|<2 -> 1, 2<=|z|<3 -> 2, else 3
    return int(np.sign(z)) * mag if mag else 0


# --------------------------------------------------------------------------
# Exports
# --------------------------------------------------------------------------

def export_features_csv(views: list[FeatureMatrixView], path: Path) -> None:
    if not views:
        raise ConfigurationError("nothing to export")
    cols = views[0].columns
    with Path(path).open("w") as fh:
        fh.write("id," + ",".join(cols) + "\n")
        for v in views:
            fh.write(v.sample_id + "," + ",".join(f"{x:.8g}" for x in v.vector) + "\n")


def export_sequences_jsonl(fh, sample: Sample, view: SequenceView) -> None:
    """One sample header line plus one line per tick row."""
    import json
    header = {
        "type": "sample",
        "id": sample.id,
        "scenario": sample.scenario.kind.value,
        "nodes": sample.n_nodes,
        "ticks": int(view.mask.sum()),
        "length": view.tensor.shape[0],
        "feature_names": view.feature_names,
        "labels": {
            "fault_present": sample.labels.fault_present,
            "fault_type": sample.labels.fault_type.value,
            "fault_node": sample.labels.fault_node,
        },
    }
    fh.write(json.dumps(header, separators=(",", ":")) + "\n")
    for t in range(view.tensor.shape[0]):
        if view.mask[t] == 0.0:
            break
        row = {"type": "row", "id": sample.id, "t": t,
               "x": [[round(float(x), 5) for x in node] for node in view.tensor[t]]}
        fh.write(json.dumps(row, separators=(",", ":")) + "\n")
