/**
 * Seeded training and evaluation loop.  Batching order is fixed by the
 * spec seed and the optimizer runs on logits with softmax cross-entropy,
 * so identical TrainSpecs reproduce identical metrics.
 */

import * as tf from "@tensorflow/tfjs";

import { Dataset, applyStandardizer, fitStandardizer, shuffledIndices } from "./data.js";
import { Metrics, evaluate } from "./metrics.js";
import { TrainSpec, buildModel } from "./models.js";

function toTensors(ds: Dataset, indices: number[]): { x: tf.Tensor3D; m: tf.Tensor2D; y: tf.Tensor1D } {
  const n = indices.length;
  const x = new Float32Array(n * ds.length * ds.width);
  const m = new Float32Array(n * ds.length);
  const y = new Int32Array(n);
  indices.forEach((src, row) => {
    x.set(ds.xs[src], row * ds.length * ds.width);
    m.set(ds.masks[src], row * ds.length);
    y[row] = ds.ys[src];
  });
  return {
    x: tf.tensor3d(x, [n, ds.length, ds.width]),
    m: tf.tensor2d(m, [n, ds.length]),
    y: tf.tensor1d(y, "int32"),
  };
}

export interface TrainResult {
  metrics: Metrics;
  predictions: number[];
  losses: number[];
}

export function predict(model: tf.LayersModel, ds: Dataset, batchSize = 128): number[] {
  const out: number[] = [];
  for (let start = 0; start < ds.xs.length; start += batchSize) {
    const idx = [...Array(Math.min(batchSize, ds.xs.length - start)).keys()].map((i) => i + start);
    const { x, m, y } = toTensors(ds, idx);
    const pred = tf.tidy(() => (model.apply([x, m]) as tf.Tensor).argMax(1));
    out.push(...Array.from(pred.dataSync()).map(Number));
    x.dispose(); m.dispose(); y.dispose(); pred.dispose();
  }
  return out;
}

export function trainEval(train: Dataset, test: Dataset, spec: TrainSpec, task: string): TrainResult {
  const stats = fitStandardizer(train);
  train = applyStandardizer(train, stats);
  test = applyStandardizer(test, stats);
  const model = buildModel(spec);
  const optimizer = tf.train.adam(spec.learningRate);
  const order = shuffledIndices(train.xs.length, spec.seed);
  const losses: number[] = [];
  for (let epoch = 0; epoch < spec.epochs; epoch++) {
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start < order.length; start += spec.batchSize) {
      const idx = order.slice(start, start + spec.batchSize);
      const { x, m, y } = toTensors(train, idx);
      const lossT = optimizer.minimize(() => {
        const logits = model.apply([x, m], { training: true }) as tf.Tensor2D;
        const oneHot = tf.oneHot(y, spec.numClasses);
        return tf.losses.softmaxCrossEntropy(oneHot, logits) as tf.Scalar;
      }, true) as tf.Scalar;
      epochLoss += lossT.dataSync()[0];
      batches++;
      lossT.dispose(); x.dispose(); m.dispose(); y.dispose();
    }
    losses.push(epochLoss / Math.max(1, batches));
  }
  const predictions = predict(model, test);
  const metrics = evaluate(test.ys, predictions, task);
  optimizer.dispose();
  model.dispose();
  return { metrics, predictions, losses };
}
