/**
 * Classification metrics matching the benchmark's conventions: detection
 * uses positive-class precision/recall; multi-class tasks macro-average
 * over the classes present in the test labels; F1 is always the harmonic
 * mean of the reported precision and recall.
 */

export interface Metrics {
  accuracy: number;
  precision: number;
  recall: number;
  f1: number;
}

function harmonic(p: number, r: number): number {
  return p + r > 0 ? (2 * p * r) / (p + r) : 0;
}

export function round10(x: number): number {
  return Math.round(x * 1e10) / 1e10;
}

export function evaluate(yTrue: number[], yPred: number[], task: string): Metrics {
  if (yTrue.length !== yPred.length || yTrue.length === 0) {
    throw new Error("predictions and labels must align and be non-empty");
  }
  let correct = 0;
  for (let i = 0; i < yTrue.length; i++) if (yTrue[i] === yPred[i]) correct++;
  const accuracy = correct / yTrue.length;

  let precision: number;
  let recall: number;
  if (task === "detection") {
    let tp = 0, fp = 0, fn = 0;
    for (let i = 0; i < yTrue.length; i++) {
      if (yPred[i] === 1 && yTrue[i] === 1) tp++;
      else if (yPred[i] === 1) fp++;
      else if (yTrue[i] === 1) fn++;
    }
    precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  } else {
    const classes = [...new Set(yTrue)].sort((a, b) => a - b);
    const ps: number[] = [];
    const rs: number[] = [];
    for (const c of classes) {
      let tp = 0, fp = 0, fn = 0;
      for (let i = 0; i < yTrue.length; i++) {
        if (yPred[i] === c && yTrue[i] === c) tp++;
        else if (yPred[i] === c) fp++;
        else if (yTrue[i] === c) fn++;
      }
      ps.push(tp + fp > 0 ? tp / (tp + fp) : 0);
      rs.push(tp + fn > 0 ? tp / (tp + fn) : 0);
    }
    precision = ps.reduce((a, b) => a + b, 0) / ps.length;
    recall = rs.reduce((a, b) => a + b, 0) / rs.length;
  }
  precision = round10(precision);
  recall = round10(recall);
  return {
    accuracy: round10(accuracy),
    precision,
    recall,
    f1: round10(harmonic(precision, recall)),
  };
}
