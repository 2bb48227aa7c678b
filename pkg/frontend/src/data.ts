/**
 * Dataset assembly: flatten sequence samples into [length, nodes*features]
 * tensors with padding masks, derive task labels, and apply the shared
 * train/test split exactly as recorded.
 */

import { SequenceSample, SplitFile } from "./schema.js";

export const FAULT_CLASSES = [
  "node_crash", "poor_link_quality", "app_crash", "app_slowdown",
  "traffic_overload", "hidden_node", "rate_adaptation_failure",
  "probe_failure", "beacon_loss", "buffer_bloat", "queue_overflow", "normal",
];

export type Task = "detection" | "classification" | "localization";

export interface Dataset {
  xs: Float32Array[];    // per sample: [length * width]
  masks: Float32Array[]; // per sample: [length]
  ys: number[];
  ids: string[];
  length: number;
  width: number;
  numClasses: number;
}

export interface FeatureStats {
  mean: Float64Array;
  std: Float64Array;
}

/** Per-feature mean/std over real (unmasked) ticks of a training set. */
export function fitStandardizer(ds: Dataset): FeatureStats {
  const mean = new Float64Array(ds.width);
  const sq = new Float64Array(ds.width);
  let count = 0;
  for (let s = 0; s < ds.xs.length; s++) {
    const x = ds.xs[s];
    const m = ds.masks[s];
    for (let t = 0; t < ds.length; t++) {
      if (m[t] === 0) continue;
      count++;
      for (let f = 0; f < ds.width; f++) {
        const v = x[t * ds.width + f];
        mean[f] += v;
        sq[f] += v * v;
      }
    }
  }
  const std = new Float64Array(ds.width);
  for (let f = 0; f < ds.width; f++) {
    mean[f] /= Math.max(1, count);
    const variance = sq[f] / Math.max(1, count) - mean[f] * mean[f];
    std[f] = Math.sqrt(Math.max(variance, 1e-8));
  }
  return { mean, std };
}

/** Standardized copy of a dataset; padded ticks stay zero. */
export function applyStandardizer(ds: Dataset, stats: FeatureStats): Dataset {
  const xs = ds.xs.map((orig, s) => {
    const x = Float32Array.from(orig);
    const m = ds.masks[s];
    for (let t = 0; t < ds.length; t++) {
      if (m[t] === 0) continue;
      for (let f = 0; f < ds.width; f++) {
        const i = t * ds.width + f;
        x[i] = (x[i] - stats.mean[f]) / stats.std[f];
      }
    }
    return x;
  });
  return { ...ds, xs };
}

export function taskLabel(sample: SequenceSample, task: Task): number | null {
  if (task === "detection") return sample.labels.fault_present ? 1 : 0;
  if (task === "classification") {
    const idx = FAULT_CLASSES.indexOf(sample.labels.fault_type);
    if (idx < 0) throw new Error(`unknown fault type '${sample.labels.fault_type}'`);
    return idx;
  }
  return sample.labels.fault_present ? sample.labels.fault_node : null;
}

export function buildDataset(samples: SequenceSample[], ids: string[], task: Task,
                             numClassesHint?: number): Dataset {
  const byId = new Map(samples.map((s) => [s.id, s]));
  const xs: Float32Array[] = [];
  const masks: Float32Array[] = [];
  const ys: number[] = [];
  const kept: string[] = [];
  let length = 0;
  let width = 0;
  for (const id of ids) {
    const s = byId.get(id);
    if (!s) continue; // split may cover more samples than this export
    const label = taskLabel(s, task);
    if (label === null) continue;
    length = s.length;
    width = s.nodes * s.featureNames.length;
    const x = new Float32Array(length * width);
    x.set(s.data.subarray(0, Math.min(s.data.length, x.length)));
    const mask = new Float32Array(length);
    mask.fill(1, 0, Math.min(s.ticks, length));
    xs.push(x);
    masks.push(mask);
    ys.push(label);
    kept.push(id);
  }
  if (xs.length === 0) throw new Error(`no usable samples for task ${task}`);
  const numClasses = numClassesHint ??
    (task === "detection" ? 2
      : task === "classification" ? FAULT_CLASSES.length
        : Math.max(...samples.map((s) => s.nodes)));
  return { xs, masks, ys, ids: kept, length, width, numClasses };
}

/** Deterministic 32-bit PRNG for reproducible shuffles. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0; a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function shuffledIndices(n: number, seed: number): number[] {
  const rng = mulberry32(seed);
  const idx = [...Array(n).keys()];
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}
