/**
 * File persistence for TensorFlow.js layers models using the standard
 * layers-model directory layout: a `model.json` with the topology and a
 * weights manifest, next to one binary weight shard.
 */

import * as tf from '@tensorflow/tfjs';
import { mkdirSync, readFileSync, writeFileSync } from 'fs';
import { dirname, join } from 'path';

const WEIGHTS_FILE = 'weights.bin';

interface ManifestGroup {
  paths: string[];
  weights: tf.io.WeightsManifestEntry[];
}

interface ModelJson {
  modelTopology: {};
  format?: string;
  generatedBy?: string;
  convertedBy?: string | null;
  weightsManifest: ManifestGroup[];
}

function toArrayBuffer(data: ArrayBuffer | ArrayBuffer[]): ArrayBuffer {
  if (!Array.isArray(data)) {
    return data;
  }
  const total = data.reduce((acc, part) => acc + part.byteLength, 0);
  const joined = new Uint8Array(total);
  let offset = 0;
  for (const part of data) {
    joined.set(new Uint8Array(part), offset);
    offset += part.byteLength;
  }
  return joined.buffer;
}

/** Saves a model into `dir/model.json` plus `dir/weights.bin`. */
export async function saveModelDir(model: tf.LayersModel, dir: string): Promise<void> {
  let captured: tf.io.ModelArtifacts | null = null;
  await model.save({
    save: async (artifacts: tf.io.ModelArtifacts) => {
      captured = artifacts;
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      };
    },
  });
  if (captured === null) {
    throw new Error('model did not produce artifacts');
  }
  const artifacts = captured as tf.io.ModelArtifacts;
  if (artifacts.modelTopology === undefined || artifacts.weightSpecs === undefined ||
      artifacts.weightData === undefined) {
    throw new Error('model artifacts are missing topology or weights');
  }
  mkdirSync(dir, { recursive: true });
  const doc: ModelJson = {
    modelTopology: artifacts.modelTopology,
    format: artifacts.format,
    generatedBy: artifacts.generatedBy,
    convertedBy: artifacts.convertedBy,
    weightsManifest: [{ paths: [WEIGHTS_FILE], weights: artifacts.weightSpecs }],
  };
  writeFileSync(join(dir, 'model.json'), JSON.stringify(doc, null, 2) + '\n');
  writeFileSync(
    join(dir, WEIGHTS_FILE),
    Buffer.from(toArrayBuffer(artifacts.weightData)),
  );
}

/**
 * Loads a model from a layers-model directory or from a direct path to its
 * `model.json`.  Weight shards are resolved relative to the JSON file.
 */
export async function loadModelDir(path: string): Promise<tf.LayersModel> {
  const jsonPath = path.endsWith('.json') ? path : join(path, 'model.json');
  const doc = JSON.parse(readFileSync(jsonPath, 'utf8')) as ModelJson;
  if (!doc.modelTopology || !Array.isArray(doc.weightsManifest)) {
    throw new Error(`${jsonPath} is not a layers-model file`);
  }
  const base = dirname(jsonPath);
  const weightSpecs: tf.io.WeightsManifestEntry[] = [];
  const shards: ArrayBuffer[] = [];
  for (const group of doc.weightsManifest) {
    weightSpecs.push(...group.weights);
    for (const shard of group.paths) {
      const bytes = readFileSync(join(base, shard));
      shards.push(
        bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength),
      );
    }
  }
  const artifacts: tf.io.ModelArtifacts = {
    modelTopology: doc.modelTopology,
    format: doc.format,
    generatedBy: doc.generatedBy,
    convertedBy: doc.convertedBy ?? undefined,
    weightSpecs,
    weightData: toArrayBuffer(shards),
  };
  return await tf.loadLayersModel(tf.io.fromMemory(artifacts));
}
