#!/usr/bin/env node
/**
 * Command line for the model exporter.
 *
 * `export` turns a saved TensorFlow.js layers model into an interchange
 * JSON plus an export manifest, `verify` replays random inputs through the
 * source model and the toolchain's float interpreter, and `demo` trains a
 * small sequence regressor to try the workflow without real training code.
 *
 * Exit codes follow the toolchain convention: 0 for success, 1 for a
 * failed verification limit, 2 for input errors.
 */

import { existsSync, writeFileSync } from 'fs';
import * as tf from '@tensorflow/tfjs';
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { loadModelDir, saveModelDir } from './artifacts';
import { ExportError, exportModel } from './exporter';
import { manifestPathFor, serializeManifest } from './interchange';
import { ToolchainError } from './toolchain';
import { buildSequenceRegressor, trainFewSteps } from './train';
import { verifyExport, VerifyError } from './verify';

const EXIT_OK = 0;
const EXIT_FAIL = 1;
const EXIT_INPUT = 2;

// Keep command output clean: suppress the framework's backend advice banner.
tf.env().set('PROD', true);

function fail(message: string): number {
  process.stderr.write(message + '\n');
  return EXIT_INPUT;
}

async function cmdExport(args: {
  input: string;
  out: string;
  name?: string;
}): Promise<number> {
  if (!existsSync(args.input)) {
    return fail(`MissingModel: ${args.input} does not exist`);
  }
  try {
    const model = await loadModelDir(args.input);
    const manifest = exportModel(model, args.out, { name: args.name });
    const manifestPath = manifestPathFor(args.out);
    writeFileSync(manifestPath, serializeManifest(manifest));
    console.log(`wrote ${args.out}`);
    console.log(`wrote ${manifestPath}`);
    for (const [source, target] of manifest.mapping_log) {
      console.log(`  ${source} -> ${target}`);
    }
    for (const warning of manifest.warnings) {
      console.log(`  warning: ${warning}`);
    }
    return EXIT_OK;
  } catch (error) {
    if (error instanceof ExportError) {
      return fail(`${error.constructor.name}: ${error.message}`);
    }
    return fail(`BadModel: ${(error as Error).message}`);
  }
}

async function cmdVerify(args: {
  input: string;
  exported: string;
  runs: number;
  seed: number;
  limit?: number;
}): Promise<number> {
  if (!existsSync(args.input)) {
    return fail(`MissingModel: ${args.input} does not exist`);
  }
  if (!existsSync(args.exported)) {
    return fail(`MissingModel: ${args.exported} does not exist`);
  }
  try {
    const model = await loadModelDir(args.input);
    const deviation = verifyExport(model, args.exported, {
      runs: args.runs,
      seed: args.seed,
    });
    console.log(`max deviation: ${deviation.toExponential(6)}`);
    if (args.limit !== undefined) {
      if (deviation > args.limit) {
        console.log(`VERDICT: FAIL (limit ${args.limit})`);
        return EXIT_FAIL;
      }
      console.log(`VERDICT: PASS (limit ${args.limit})`);
    }
    return EXIT_OK;
  } catch (error) {
    if (error instanceof VerifyError || error instanceof ToolchainError) {
      return fail(`${error.constructor.name}: ${error.message}`);
    }
    return fail(`BadModel: ${(error as Error).message}`);
  }
}

async function cmdDemo(args: {
  out: string;
  steps: number;
  inputSize: number;
  hiddenSize: number;
  seed: number;
}): Promise<number> {
  const model = buildSequenceRegressor({
    steps: args.steps,
    inputSize: args.inputSize,
    hiddenSize: args.hiddenSize,
  });
  const loss = await trainFewSteps(model, { seed: args.seed });
  await saveModelDir(model, args.out);
  console.log(`trained demo model (final loss ${loss.toExponential(3)})`);
  console.log(`wrote ${args.out}/model.json`);
  return EXIT_OK;
}

export async function runCli(argv: string[]): Promise<number> {
  let exitCode = EXIT_OK;
  await yargs(argv)
    .scriptName('accelkit-export')
    .command(
      'export',
      'export a saved layers model to interchange JSON',
      (cmd) =>
        cmd
          .option('input', { type: 'string', demandOption: true, describe: 'saved model directory or model.json' })
          .option('out', { type: 'string', demandOption: true, describe: 'interchange output path' })
          .option('name', { type: 'string', describe: 'override the exported model name' }),
      async (args) => {
        exitCode = await cmdExport(args as unknown as { input: string; out: string; name?: string });
      },
    )
    .command(
      'verify',
      'compare a saved model against an exported interchange file',
      (cmd) =>
        cmd
          .option('input', { type: 'string', demandOption: true, describe: 'saved model directory or model.json' })
          .option('exported', { type: 'string', demandOption: true, describe: 'interchange file from export' })
          .option('runs', { type: 'number', default: 10, describe: 'number of random probe inputs' })
          .option('seed', { type: 'number', default: 1234, describe: 'probe input RNG seed' })
          .option('limit', { type: 'number', describe: 'fail when deviation exceeds this bound' }),
      async (args) => {
        exitCode = await cmdVerify(
          args as unknown as { input: string; exported: string; runs: number; seed: number; limit?: number },
        );
      },
    )
    .command(
      'demo',
      'train and save a small sequence regressor',
      (cmd) =>
        cmd
          .option('out', { type: 'string', demandOption: true, describe: 'output model directory' })
          .option('steps', { type: 'number', default: 5 })
          .option('input-size', { type: 'number', default: 4 })
          .option('hidden-size', { type: 'number', default: 3 })
          .option('seed', { type: 'number', default: 42 }),
      async (args) => {
        exitCode = await cmdDemo(
          args as unknown as { out: string; steps: number; inputSize: number; hiddenSize: number; seed: number },
        );
      },
    )
    .demandCommand(1, 'pick a command: export, verify, or demo')
    .strict()
    .fail((msg, err) => {
      process.stderr.write(`${msg ?? err?.message}\n`);
      process.exit(EXIT_INPUT);
    })
    .parseAsync();
  return exitCode;
}

if (require.main === module) {
  runCli(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((error) => {
      process.stderr.write(`${(error as Error).message}\n`);
      process.exit(EXIT_INPUT);
    });
}
