/**
 * Types for the accelerator toolchain's model interchange format.
 *
 * An interchange document is a JSON object with a model name, the input
 * shape, and an ordered layer list.  The Python toolchain (`accelkit`)
 * consumes these documents for validation, reference inference, and RTL
 * translation.  Layer vectors are flattened in layer order; a sequence
 * input is flattened step-major, so an LSTM layer reads
 * `steps * input_size` values.
 */

export interface LinearLayer {
  kind: 'linear';
  in_features: number;
  out_features: number;
  /** Row-major weight matrix, one row per output feature. */
  weights: number[][];
  bias: number[];
}

export interface LstmLayer {
  kind: 'lstm';
  input_size: number;
  hidden_size: number;
  steps: number;
  /**
   * Stacked gate matrix of shape [4 * hidden_size][input_size + hidden_size].
   * Row blocks are the input, forget, candidate, and output gates, in that
   * order; each row acts on the joined vector [x_t, h_prev].
   */
  gate_weights: number[][];
  gate_bias: number[];
}

export type ActivationName = 'relu' | 'hard_sigmoid' | 'hard_tanh';

export interface ActivationLayer {
  kind: 'activation';
  activation: ActivationName;
}

export type InterchangeLayer = LinearLayer | LstmLayer | ActivationLayer;

export interface InterchangeModel {
  name: string;
  input_shape: number[];
  layers: InterchangeLayer[];
}

/** One mapping-log entry: a source layer and the interchange kind it became. */
export type MappingEntry = [source: string, target: string];

export interface ExportManifest {
  source_framework: string;
  mapping_log: MappingEntry[];
  warnings: string[];
}

export function flatLength(shape: number[]): number {
  return shape.reduce((acc, dim) => acc * dim, 1);
}

export function serializeInterchange(doc: InterchangeModel): string {
  return JSON.stringify(doc, null, 2) + '\n';
}

export function serializeManifest(manifest: ExportManifest): string {
  return JSON.stringify(manifest, null, 2) + '\n';
}

/** Manifest file path for an interchange output path: model.json -> model.export.json. */
export function manifestPathFor(outPath: string): string {
  if (outPath.endsWith('.json')) {
    return outPath.slice(0, -'.json'.length) + '.export.json';
  }
  return outPath + '.export.json';
}
