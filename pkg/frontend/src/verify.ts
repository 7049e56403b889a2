/**
 * Export verification: runs random inputs through the source model and
 * through the toolchain's reference float interpreter, then reports the
 * largest elementwise deviation.
 *
 * The source-side forward pass is computed here in float64 directly from
 * the framework's own weight layout (kernels as [in, out], LSTM kernels
 * split from recurrent kernels), substituting the accelerator's hard
 * activations for the trained saturating ones.  That keeps the deviation a
 * pure numeric comparison: any disagreement comes from the exported
 * weights or the layer mapping, not from activation approximation.
 */

import * as tf from '@tensorflow/tfjs';

import { inferFloat } from './toolchain';

export class VerifyError extends Error {}

// Hard activations as the accelerator datapath defines them.
export function hardSigmoid(x: number): number {
  return Math.min(1, Math.max(0, x / 4 + 0.5));
}

export function hardTanh(x: number): number {
  return Math.min(1, Math.max(-1, x));
}

export function relu(x: number): number {
  return Math.max(0, x);
}

/** Deterministic uniform [0, 1) generator for reproducible probe inputs. */
export function seededUniform(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function layerValues(layer: tf.layers.Layer): Map<string, number[] | number[][]> {
  const byName = new Map<string, number[] | number[][]>();
  const values = layer.getWeights();
  layer.weights.forEach((variable, index) => {
    const scoped =
      (variable as unknown as { originalName?: string }).originalName ??
      variable.name;
    const leaf = scoped.split('/').pop() ?? scoped;
    byName.set(
      leaf.replace(/_\d+$/, ''),
      values[index].arraySync() as number[] | number[][],
    );
  });
  return byName;
}

function denseForward(layer: tf.layers.Layer, input: number[]): number[] {
  const weights = layerValues(layer);
  const kernel = weights.get('kernel') as number[][];
  const bias = (weights.get('bias') as number[] | undefined) ?? null;
  const outFeatures = kernel[0].length;
  if (input.length !== kernel.length) {
    throw new VerifyError(
      `layer '${layer.name}' expects ${kernel.length} inputs, got ${input.length}`,
    );
  }
  const out = new Array<number>(outFeatures);
  for (let j = 0; j < outFeatures; j++) {
    let acc = bias ? bias[j] : 0;
    for (let i = 0; i < input.length; i++) {
      acc += input[i] * kernel[i][j];
    }
    out[j] = acc;
  }
  const activation = (layer.getConfig() as { activation?: string }).activation;
  if (activation === 'relu') {
    return out.map(relu);
  }
  return out;
}

function lstmForward(layer: tf.layers.Layer, input: number[]): number[] {
  const weights = layerValues(layer);
  const kernel = weights.get('kernel') as number[][];
  const recurrentKernel = weights.get('recurrent_kernel') as number[][];
  const bias = (weights.get('bias') as number[] | undefined) ?? null;
  const inputSize = kernel.length;
  const hiddenSize = recurrentKernel.length;
  if (input.length % inputSize !== 0) {
    throw new VerifyError(
      `layer '${layer.name}' expects a multiple of ${inputSize} inputs, ` +
        `got ${input.length}`,
    );
  }
  const steps = input.length / inputSize;
  let hidden = new Array<number>(hiddenSize).fill(0);
  let cell = new Array<number>(hiddenSize).fill(0);
  for (let t = 0; t < steps; t++) {
    const gates = new Array<number>(4 * hiddenSize);
    for (let g = 0; g < 4 * hiddenSize; g++) {
      let acc = bias ? bias[g] : 0;
      for (let i = 0; i < inputSize; i++) {
        acc += input[t * inputSize + i] * kernel[i][g];
      }
      for (let u = 0; u < hiddenSize; u++) {
        acc += hidden[u] * recurrentKernel[u][g];
      }
      gates[g] = acc;
    }
    const nextHidden = new Array<number>(hiddenSize);
    const nextCell = new Array<number>(hiddenSize);
    for (let u = 0; u < hiddenSize; u++) {
      const inGate = hardSigmoid(gates[u]);
      const forgetGate = hardSigmoid(gates[hiddenSize + u]);
      const candidate = hardTanh(gates[2 * hiddenSize + u]);
      const outGate = hardSigmoid(gates[3 * hiddenSize + u]);
      nextCell[u] = forgetGate * cell[u] + inGate * candidate;
      nextHidden[u] = outGate * hardTanh(nextCell[u]);
    }
    hidden = nextHidden;
    cell = nextCell;
  }
  return hidden;
}

/**
 * Float64 forward pass over the source model with hard activations
 * substituted, on a flat (step-major for sequences) input vector.
 */
export function referenceForward(model: tf.LayersModel, input: number[]): number[] {
  let vec = input.slice();
  for (const layer of model.layers) {
    switch (layer.getClassName()) {
      case 'InputLayer':
      case 'Dropout':
      case 'SpatialDropout1D':
        break;
      case 'Dense':
        vec = denseForward(layer, vec);
        break;
      case 'LSTM':
        vec = lstmForward(layer, vec);
        break;
      case 'Activation': {
        const activation = (layer.getConfig() as { activation?: string }).activation;
        if (activation === 'relu') {
          vec = vec.map(relu);
        } else if (activation !== 'linear') {
          throw new VerifyError(
            `layer '${layer.name}' activation '${activation}' has no reference path`,
          );
        }
        break;
      }
      case 'ReLU':
        vec = vec.map(relu);
        break;
      default:
        throw new VerifyError(
          `layer class '${layer.getClassName()}' has no reference path`,
        );
    }
  }
  return vec;
}

export interface VerifyOptions {
  runs?: number;
  seed?: number;
}

/**
 * Compares the source model against an exported interchange file on
 * random inputs in [-1, 1) and returns the maximum absolute deviation.
 */
export function verifyExport(
  model: tf.LayersModel,
  interchangePath: string,
  options?: VerifyOptions,
): number {
  const runs = options?.runs ?? 10;
  const seed = options?.seed ?? 1234;
  const dims = model.inputs[0].shape.slice(1);
  let inputLength = 1;
  for (const dim of dims) {
    if (dim === null || dim === undefined || dim < 0) {
      throw new VerifyError('model input shape must be fully specified');
    }
    inputLength *= dim;
  }
  const next = seededUniform(seed);
  const inputs: number[][] = [];
  for (let run = 0; run < runs; run++) {
    const vec = new Array<number>(inputLength);
    for (let i = 0; i < inputLength; i++) {
      vec[i] = next() * 2 - 1;
    }
    inputs.push(vec);
  }
  const toolchainOutputs = inferFloat(interchangePath, inputs);
  let worst = 0;
  for (let run = 0; run < runs; run++) {
    const ours = referenceForward(model, inputs[run]);
    const theirs = toolchainOutputs[run];
    if (ours.length !== theirs.length) {
      throw new VerifyError(
        `output length mismatch: source ${ours.length}, toolchain ${theirs.length}`,
      );
    }
    for (let i = 0; i < ours.length; i++) {
      worst = Math.max(worst, Math.abs(ours[i] - theirs[i]));
    }
  }
  return worst;
}
