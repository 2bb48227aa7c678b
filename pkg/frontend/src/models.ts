/**
 * Sequence classifiers: a 1D conv stack and single-layer GRU/LSTM nets,
 * all ending in a mask-aware mean pool so that padded ticks can never
 * influence the logits.
 */

import * as tf from "@tensorflow/tfjs";

export type Method = "cnn" | "gru" | "lstm";

export interface TrainSpec {
  method: Method;
  length: number;
  width: number;
  numClasses: number;
  units: number;
  epochs: number;
  batchSize: number;
  learningRate: number;
  seed: number;
}

export const DEFAULT_SPEC: Omit<TrainSpec, "method" | "length" | "width" | "numClasses"> = {
  units: 32,
  epochs: 20,
  batchSize: 64,
  learningRate: 0.02,
  seed: 17,
};

/**
 * Mean over the time axis restricted to unmasked steps:
 * inputs [seq (B,L,U), mask (B,L)] -> (B,U).
 */
export class MaskedMeanPool extends tf.layers.Layer {
  static className = "MaskedMeanPool";

  computeOutputShape(inputShape: tf.Shape[]): tf.Shape {
    const [seqShape] = inputShape;
    return [seqShape[0], seqShape[2]];
  }

  call(inputs: tf.Tensor[]): tf.Tensor {
    return tf.tidy(() => {
      const [seq, mask] = inputs;
      const m = tf.expandDims(mask, 2); // (B, L, 1)
      const summed = tf.sum(tf.mul(seq, m), 1);
      const counts = tf.maximum(tf.sum(m, 1), 1);
      return tf.div(summed, counts);
    });
  }
}
tf.serialization.registerClass(MaskedMeanPool);

/**
 * Zeroes masked timesteps: [seq (B,L,U), mask (B,L)] -> (B,L,U).  Without
 * this a conv stack would leak bias activations from padded positions into
 * its neighbors' receptive fields.
 */
export class MaskApply extends tf.layers.Layer {
  static className = "MaskApply";

  computeOutputShape(inputShape: tf.Shape[]): tf.Shape {
    return inputShape[0];
  }

  call(inputs: tf.Tensor[]): tf.Tensor {
    return tf.tidy(() => tf.mul(inputs[0], tf.expandDims(inputs[1], 2)));
  }
}
tf.serialization.registerClass(MaskApply);

export function buildModel(spec: TrainSpec): tf.LayersModel {
  const seqInput = tf.input({ shape: [spec.length, spec.width], name: "sequence" });
  const maskInput = tf.input({ shape: [spec.length], name: "mask" });
  const seed = spec.seed;
  let features: tf.SymbolicTensor;
  if (spec.method === "cnn") {
    let h = tf.layers.conv1d({
      filters: spec.units, kernelSize: 5, padding: "same", activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
    }).apply(seqInput) as tf.SymbolicTensor;
    h = new MaskApply({}).apply([h, maskInput]) as tf.SymbolicTensor;
    h = tf.layers.conv1d({
      filters: spec.units, kernelSize: 5, padding: "same", activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
    }).apply(h) as tf.SymbolicTensor;
    features = h;
  } else {
    const cellArgs = {
      units: spec.units,
      returnSequences: true,
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      recurrentInitializer: tf.initializers.orthogonal({ seed: seed + 1, gain: 1 }),
    };
    features = (spec.method === "gru"
      ? tf.layers.gru(cellArgs)
      : tf.layers.lstm(cellArgs)).apply(seqInput) as tf.SymbolicTensor;
  }
  const pooled = new MaskedMeanPool({}).apply([features, maskInput]) as tf.SymbolicTensor;
  const logits = tf.layers.dense({
    units: spec.numClasses,
    kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
  }).apply(pooled) as tf.SymbolicTensor;
  return tf.model({ inputs: [seqInput, maskInput], outputs: logits });
}
