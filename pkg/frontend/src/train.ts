/**
 * Toy model builders and a short training loop.
 *
 * These exist so the exporter can be exercised end to end on models whose
 * weights actually went through an optimizer, without pulling in a dataset.
 * Targets are a synthetic smooth function of the inputs.
 */

import * as tf from '@tensorflow/tfjs';

export interface SequenceModelOptions {
  steps?: number;
  inputSize?: number;
  hiddenSize?: number;
  headUnits?: number | null;
}

/** Single dense layer regressor on a flat input. */
export function buildLinearRegressor(
  inFeatures: number,
  outFeatures = 1,
): tf.Sequential {
  return tf.sequential({
    layers: [
      tf.layers.dense({
        units: outFeatures,
        inputShape: [inFeatures],
        name: 'regressor',
      }),
    ],
  });
}

/** LSTM on [steps, inputSize], optionally followed by a dense head. */
export function buildSequenceRegressor(
  options: SequenceModelOptions = {},
): tf.Sequential {
  const steps = options.steps ?? 5;
  const inputSize = options.inputSize ?? 4;
  const hiddenSize = options.hiddenSize ?? 3;
  const headUnits = options.headUnits === undefined ? 1 : options.headUnits;
  const layers: tf.layers.Layer[] = [
    tf.layers.lstm({
      units: hiddenSize,
      inputShape: [steps, inputSize],
      name: 'encoder',
    }),
  ];
  if (headUnits !== null) {
    layers.push(tf.layers.dense({ units: headUnits, name: 'head' }));
  }
  return tf.sequential({ layers });
}

export interface TrainOptions {
  samples?: number;
  epochs?: number;
  seed?: number;
}

/**
 * Fits the model for a few epochs on synthetic data and returns the final
 * loss.  Inputs are seeded normals; targets are sin of the per-sample mean,
 * broadcast across the output features.
 */
export async function trainFewSteps(
  model: tf.LayersModel,
  options: TrainOptions = {},
): Promise<number> {
  const samples = options.samples ?? 32;
  const epochs = options.epochs ?? 3;
  const seed = options.seed ?? 42;
  const inputDims = model.inputs[0].shape.slice(1) as number[];
  const outputDims = model.outputs[0].shape.slice(1) as number[];
  const xs = tf.randomNormal([samples, ...inputDims], 0, 1, 'float32', seed);
  const meanAxes = inputDims.map((_, axis) => axis + 1);
  const ys = tf.tidy(() => {
    const pooled = tf.sin(xs.mean(meanAxes).mul(3));
    const width = outputDims.reduce((acc, dim) => acc * dim, 1);
    return pooled.expandDims(1).tile([1, width]).reshape([samples, ...outputDims]);
  });
  model.compile({ optimizer: tf.train.adam(0.02), loss: 'meanSquaredError' });
  const history = await model.fit(xs, ys, { epochs, verbose: 0 });
  xs.dispose();
  ys.dispose();
  const losses = history.history.loss as number[];
  return losses[losses.length - 1];
}
