/**
 * Readers and writers for the file interfaces shared with the benchmark
 * pipeline: the sequence export (`sequences_*.jsonl`), the split file
 * (`split.json`) and the results schema (`results.jsonl`).
 *
 * Validation is strict: a malformed export fails fast with an error naming
 * the offending sample and field.
 */

import * as fs from "node:fs";

export interface SampleLabels {
  fault_present: boolean;
  fault_type: string;
  fault_node: number | null;
}

export interface SequenceSample {
  id: string;
  scenario: string;
  nodes: number;
  ticks: number;
  length: number;
  featureNames: string[];
  labels: SampleLabels;
  /** flattened [length, nodes * features] row-major */
  data: Float32Array;
}

export interface SplitFile {
  train: string[];
  test: string[];
}

export interface ResultsRecord {
  method: string;
  modalities: string[];
  task: string;
  accuracy: number;
  precision: number;
  recall: number;
  f1: number;
}

export class SchemaError extends Error {}

function need(obj: Record<string, unknown>, field: string, context: string): unknown {
  if (!(field in obj) || obj[field] === undefined) {
    throw new SchemaError(`${context}: missing field '${field}'`);
  }
  return obj[field];
}

export function loadSequences(path: string): SequenceSample[] {
  const out: SequenceSample[] = [];
  let current: SequenceSample | null = null;
  let rowsSeen = 0;
  const lines = fs.readFileSync(path, "utf8").split("\n");
  for (let lineNo = 0; lineNo < lines.length; lineNo++) {
    const line = lines[lineNo].trim();
    if (!line) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch {
      throw new SchemaError(`${path}:${lineNo + 1}: not valid JSON`);
    }
    const kind = need(obj, "type", `${path}:${lineNo + 1}`);
    if (kind === "sample") {
      if (current !== null && rowsSeen !== current.ticks) {
        throw new SchemaError(`sample ${current.id}: expected ${current.ticks} rows, saw ${rowsSeen}`);
      }
      const ctx = `sample line ${lineNo + 1}`;
      const labelsRaw = need(obj, "labels", ctx) as Record<string, unknown>;
      const labels: SampleLabels = {
        fault_present: need(labelsRaw, "fault_present", `${ctx}.labels`) as boolean,
        fault_type: need(labelsRaw, "fault_type", `${ctx}.labels`) as string,
        fault_node: labelsRaw.fault_node === null ? null : (need(labelsRaw, "fault_node", `${ctx}.labels`) as number),
      };
      current = {
        id: need(obj, "id", ctx) as string,
        scenario: need(obj, "scenario", ctx) as string,
        nodes: need(obj, "nodes", ctx) as number,
        ticks: need(obj, "ticks", ctx) as number,
        length: need(obj, "length", ctx) as number,
        featureNames: need(obj, "feature_names", ctx) as string[],
        labels,
        data: new Float32Array(0),
      };
      current.data = new Float32Array(current.length * current.nodes * current.featureNames.length);
      rowsSeen = 0;
      out.push(current);
    } else if (kind === "row") {
      if (current === null) {
        throw new SchemaError(`${path}:${lineNo + 1}: row before any sample header`);
      }
      const ctx = `sample ${current.id} row ${rowsSeen}`;
      const t = need(obj, "t", ctx) as number;
      const x = need(obj, "x", ctx) as number[][];
      if (x.length !== current.nodes) {
        throw new SchemaError(`${ctx}: field 'x' has ${x.length} nodes, expected ${current.nodes}`);
      }
      const f = current.featureNames.length;
      for (let n = 0; n < current.nodes; n++) {
        if (x[n].length !== f) {
          throw new SchemaError(`${ctx}: field 'x[${n}]' has ${x[n].length} features, expected ${f}`);
        }
        current.data.set(x[n], (t * current.nodes + n) * f);
      }
      rowsSeen++;
    } else {
      throw new SchemaError(`${path}:${lineNo + 1}: unknown record type '${String(kind)}'`);
    }
  }
  if (current !== null && rowsSeen !== current.ticks) {
    throw new SchemaError(`sample ${current.id}: expected ${current.ticks} rows, saw ${rowsSeen}`);
  }
  if (out.length === 0) {
    throw new SchemaError(`${path}: contains no samples`);
  }
  return out;
}

export function loadSplit(path: string): SplitFile {
  const raw = JSON.parse(fs.readFileSync(path, "utf8")) as Record<string, unknown>;
  return {
    train: need(raw, "train", path) as string[],
    test: need(raw, "test", path) as string[],
  };
}

export function validateRecord(rec: ResultsRecord): void {
  for (const k of ["accuracy", "precision", "recall", "f1"] as const) {
    const v = rec[k];
    if (!(v >= 0 && v <= 1)) throw new SchemaError(`results record: ${k}=${v} outside [0, 1]`);
  }
  const expect = rec.precision + rec.recall > 0
    ? (2 * rec.precision * rec.recall) / (rec.precision + rec.recall)
    : 0;
  if (Math.abs(rec.f1 - expect) > 1e-9) {
    throw new SchemaError("results record: f1 must be the harmonic mean of precision and recall");
  }
}

export function writeResults(records: ResultsRecord[], path: string): void {
  const lines = records.map((r) => {
    validateRecord(r);
    const sorted = {
      accuracy: r.accuracy, f1: r.f1, method: r.method, modalities: r.modalities,
      precision: r.precision, recall: r.recall, task: r.task,
    };
    return JSON.stringify(sorted);
  });
  fs.writeFileSync(path, lines.join("\n") + "\n");
}
