/**
 * Translates a trained TensorFlow.js layers model into the accelerator
 * toolchain's interchange format.
 *
 * Only plain chains of supported layers can be exported: dense layers
 * (linear or relu activation), single-output LSTM layers, standalone relu
 * activations, and inference no-ops such as dropout.  Weights are written
 * at full source precision.  Dense kernels are stored as [in, out] by the
 * source framework and are transposed into the row-major [out][in] layout
 * the interchange format uses.  LSTM kernels and recurrent kernels are
 * joined column by column into gate rows acting on [x_t, h_prev].
 */

import * as tf from '@tensorflow/tfjs';
import { writeFileSync } from 'fs';

import {
  ActivationLayer,
  ExportManifest,
  InterchangeLayer,
  InterchangeModel,
  LinearLayer,
  LstmLayer,
  MappingEntry,
  serializeInterchange,
} from './interchange';

export class ExportError extends Error {}

export class UnsupportedLayer extends ExportError {
  readonly layerName: string;

  constructor(layerName: string, detail: string) {
    super(`layer '${layerName}': ${detail}`);
    this.layerName = layerName;
  }
}

export class NonSequentialModel extends ExportError {}

export interface ExportResult {
  doc: InterchangeModel;
  manifest: ExportManifest;
}

const SOURCE_FRAMEWORK = `tensorflow.js ${tf.version.tfjs}`;

// ---------------------------------------------------------------------------
// weight mapping
// ---------------------------------------------------------------------------

function zeros(length: number): number[] {
  return new Array<number>(length).fill(0);
}

/** Transposes a source [in, out] dense kernel into [out][in] weight rows. */
export function mapDenseWeights(
  kernel: number[][],
  bias: number[] | null,
): Pick<LinearLayer, 'in_features' | 'out_features' | 'weights' | 'bias'> {
  const inFeatures = kernel.length;
  const outFeatures = kernel[0].length;
  const weights: number[][] = [];
  for (let row = 0; row < outFeatures; row++) {
    const line = new Array<number>(inFeatures);
    for (let col = 0; col < inFeatures; col++) {
      line[col] = kernel[col][row];
    }
    weights.push(line);
  }
  return {
    in_features: inFeatures,
    out_features: outFeatures,
    weights,
    bias: bias ? bias.slice() : zeros(outFeatures),
  };
}

/**
 * Joins an LSTM kernel [in, 4h] and recurrent kernel [h, 4h] into stacked
 * gate rows [4h][in + h] over the vector [x_t, h_prev].  Gate columns keep
 * the source order (input, forget, candidate, output), which is also the
 * interchange row-block order.  All provided bias vectors are folded into
 * one by elementwise summation; frameworks that keep separate input and
 * recurrent biases sum to the same forward function.
 */
export function mapLstmWeights(
  kernel: number[][],
  recurrentKernel: number[][],
  biases: number[][],
): Pick<LstmLayer, 'gate_weights' | 'gate_bias'> {
  const inputSize = kernel.length;
  const hiddenSize = recurrentKernel.length;
  const gateCount = 4 * hiddenSize;
  if (kernel[0].length !== gateCount || recurrentKernel[0].length !== gateCount) {
    throw new ExportError(
      `lstm kernel columns must equal 4 * hidden size (${gateCount}), ` +
        `got ${kernel[0].length} and ${recurrentKernel[0].length}`,
    );
  }
  const gateWeights: number[][] = [];
  for (let gate = 0; gate < gateCount; gate++) {
    const row = new Array<number>(inputSize + hiddenSize);
    for (let col = 0; col < inputSize; col++) {
      row[col] = kernel[col][gate];
    }
    for (let unit = 0; unit < hiddenSize; unit++) {
      row[inputSize + unit] = recurrentKernel[unit][gate];
    }
    gateWeights.push(row);
  }
  const gateBias = zeros(gateCount);
  for (const bias of biases) {
    if (bias.length !== gateCount) {
      throw new ExportError(
        `lstm bias length ${bias.length} does not match gate count ${gateCount}`,
      );
    }
    for (let gate = 0; gate < gateCount; gate++) {
      gateBias[gate] += bias[gate];
    }
  }
  return { gate_weights: gateWeights, gate_bias: gateBias };
}

// ---------------------------------------------------------------------------
// model traversal
// ---------------------------------------------------------------------------

function assertSingleChain(model: tf.LayersModel): void {
  if (model.inputs.length !== 1 || model.outputs.length !== 1) {
    throw new NonSequentialModel(
      `model must have exactly one input and one output tensor, ` +
        `got ${model.inputs.length} input(s) and ${model.outputs.length} output(s)`,
    );
  }
  for (const layer of model.layers) {
    if (layer.getClassName() === 'InputLayer') {
      continue;
    }
    const nodes = (layer as unknown as {
      inboundNodes: Array<{ inputTensors: unknown[] }>;
    }).inboundNodes;
    if (nodes.length !== 1) {
      throw new NonSequentialModel(
        `layer '${layer.name}' is applied ${nodes.length} times; ` +
          `only a single chain of layers is supported`,
      );
    }
    if (nodes[0].inputTensors.length !== 1) {
      throw new NonSequentialModel(
        `layer '${layer.name}' joins ${nodes[0].inputTensors.length} inputs; ` +
          `only a single chain of layers is supported`,
      );
    }
  }
}

function staticInputShape(model: tf.LayersModel): number[] {
  const dims: number[] = [];
  for (const dim of model.inputs[0].shape.slice(1)) {
    if (dim === null || dim === undefined || dim < 0) {
      throw new ExportError(
        'model input shape must be fully specified; ' +
          'dynamic dimensions cannot be translated',
      );
    }
    dims.push(dim);
  }
  if (dims.length === 0 || dims.length > 2) {
    throw new ExportError(
      `inputs of rank ${dims.length} are not supported; ` +
        'expected [features] or [steps, features]',
    );
  }
  return dims;
}

/** Maps variable name suffixes (kernel, recurrent_kernel, bias) to values. */
function namedWeights(layer: tf.layers.Layer): Map<string, tf.Tensor> {
  const byName = new Map<string, tf.Tensor>();
  const values = layer.getWeights();
  layer.weights.forEach((variable, index) => {
    const scoped =
      (variable as unknown as { originalName?: string }).originalName ??
      variable.name;
    const leaf = scoped.split('/').pop() ?? scoped;
    byName.set(leaf.replace(/_\d+$/, ''), values[index]);
  });
  return byName;
}

function grid(tensor: tf.Tensor): number[][] {
  return tensor.arraySync() as number[][];
}

function vector(tensor: tf.Tensor): number[] {
  return tensor.arraySync() as number[];
}

interface TraversalState {
  shape: number[];
  layers: InterchangeLayer[];
  log: MappingEntry[];
  warnings: string[];
}

function exportDense(layer: tf.layers.Layer, state: TraversalState): void {
  const config = layer.getConfig() as { activation?: string };
  const activation = config.activation ?? 'linear';
  if (activation !== 'linear' && activation !== 'relu') {
    throw new UnsupportedLayer(
      layer.name,
      `dense activation '${activation}' has no accelerator equivalent`,
    );
  }
  if (state.shape.length !== 1) {
    throw new UnsupportedLayer(
      layer.name,
      `dense layers need a flat input, got shape [${state.shape.join(', ')}]`,
    );
  }
  const weights = namedWeights(layer);
  const kernel = weights.get('kernel');
  if (kernel === undefined) {
    throw new ExportError(`layer '${layer.name}' has no kernel weights`);
  }
  const bias = weights.get('bias');
  const mapped = mapDenseWeights(grid(kernel), bias ? vector(bias) : null);
  if (mapped.in_features !== state.shape[0]) {
    throw new ExportError(
      `layer '${layer.name}' kernel expects ${mapped.in_features} inputs ` +
        `but receives ${state.shape[0]}`,
    );
  }
  state.layers.push({ kind: 'linear', ...mapped });
  state.log.push([layer.name, 'linear']);
  if (activation === 'relu') {
    state.layers.push({ kind: 'activation', activation: 'relu' });
    state.log.push([layer.name, 'activation']);
  }
  state.shape = [mapped.out_features];
}

function exportLstm(layer: tf.layers.Layer, state: TraversalState): void {
  const config = layer.getConfig() as {
    activation?: string;
    recurrentActivation?: string;
    returnSequences?: boolean;
    goBackwards?: boolean;
    stateful?: boolean;
  };
  if (config.returnSequences) {
    throw new UnsupportedLayer(
      layer.name,
      'sequence-returning lstm layers are not supported; ' +
        'the accelerator emits only the final hidden state',
    );
  }
  if (config.goBackwards) {
    throw new UnsupportedLayer(layer.name, 'reversed lstm layers are not supported');
  }
  if (config.stateful) {
    throw new UnsupportedLayer(layer.name, 'stateful lstm layers are not supported');
  }
  const activation = config.activation ?? 'tanh';
  const recurrentActivation = config.recurrentActivation ?? 'hardSigmoid';
  if (activation !== 'tanh') {
    throw new UnsupportedLayer(
      layer.name,
      `lstm activation '${activation}' has no accelerator equivalent`,
    );
  }
  if (recurrentActivation !== 'hardSigmoid' && recurrentActivation !== 'sigmoid') {
    throw new UnsupportedLayer(
      layer.name,
      `lstm recurrent activation '${recurrentActivation}' has no accelerator equivalent`,
    );
  }
  if (state.shape.length !== 2) {
    throw new UnsupportedLayer(
      layer.name,
      `lstm layers need a [steps, features] input, got shape [${state.shape.join(', ')}]`,
    );
  }
  const weights = namedWeights(layer);
  const kernel = weights.get('kernel');
  const recurrentKernel = weights.get('recurrent_kernel');
  if (kernel === undefined || recurrentKernel === undefined) {
    throw new ExportError(`layer '${layer.name}' has no lstm kernel weights`);
  }
  const bias = weights.get('bias');
  const kernelGrid = grid(kernel);
  const recurrentGrid = grid(recurrentKernel);
  const [steps, inputSize] = state.shape;
  if (kernelGrid.length !== inputSize) {
    throw new ExportError(
      `layer '${layer.name}' kernel expects ${kernelGrid.length} features ` +
        `but receives ${inputSize}`,
    );
  }
  const mapped = mapLstmWeights(
    kernelGrid,
    recurrentGrid,
    bias ? [vector(bias)] : [],
  );
  const hiddenSize = recurrentGrid.length;
  state.layers.push({
    kind: 'lstm',
    input_size: inputSize,
    hidden_size: hiddenSize,
    steps,
    ...mapped,
  });
  state.log.push([layer.name, 'lstm']);
  state.warnings.push(
    `${layer.name}: ${activation} and ${recurrentActivation} gates are ` +
      'realized with hard_tanh and hard_sigmoid on the accelerator',
  );
  state.shape = [hiddenSize];
}

function exportActivation(
  layer: tf.layers.Layer,
  state: TraversalState,
  activation: string,
): void {
  if (activation === 'linear') {
    state.log.push([layer.name, 'identity']);
    return;
  }
  if (activation !== 'relu') {
    throw new UnsupportedLayer(
      layer.name,
      `activation '${activation}' has no accelerator equivalent`,
    );
  }
  const mapped: ActivationLayer = { kind: 'activation', activation: 'relu' };
  state.layers.push(mapped);
  state.log.push([layer.name, 'activation']);
}

/** Builds the interchange document and export manifest without writing files. */
export function buildInterchange(model: tf.LayersModel, name?: string): ExportResult {
  assertSingleChain(model);
  const inputShape = staticInputShape(model);
  const state: TraversalState = {
    shape: inputShape.slice(),
    layers: [],
    log: [],
    warnings: [],
  };
  for (const layer of model.layers) {
    const className = layer.getClassName();
    switch (className) {
      case 'InputLayer':
        break;
      case 'Dense':
        exportDense(layer, state);
        break;
      case 'LSTM':
        exportLstm(layer, state);
        break;
      case 'Activation': {
        const config = layer.getConfig() as { activation?: string };
        exportActivation(layer, state, config.activation ?? 'linear');
        break;
      }
      case 'ReLU': {
        const config = layer.getConfig() as { maxValue?: number | null };
        if (config.maxValue !== null && config.maxValue !== undefined) {
          throw new UnsupportedLayer(
            layer.name,
            'clipped relu layers are not supported',
          );
        }
        exportActivation(layer, state, 'relu');
        break;
      }
      case 'Dropout':
      case 'SpatialDropout1D':
        state.log.push([layer.name, 'identity']);
        break;
      default:
        throw new UnsupportedLayer(
          layer.name,
          `layer class '${className}' has no accelerator mapping`,
        );
    }
  }
  if (state.layers.length === 0) {
    throw new ExportError('model has no exportable layers');
  }
  return {
    doc: {
      name: name ?? model.name,
      input_shape: inputShape,
      layers: state.layers,
    },
    manifest: {
      source_framework: SOURCE_FRAMEWORK,
      mapping_log: state.log,
      warnings: state.warnings,
    },
  };
}

/** Writes the interchange document for a model and returns the manifest. */
export function exportModel(
  model: tf.LayersModel,
  outPath: string,
  options?: { name?: string },
): ExportManifest {
  const { doc, manifest } = buildInterchange(model, options?.name);
  writeFileSync(outPath, serializeInterchange(doc));
  return manifest;
}
