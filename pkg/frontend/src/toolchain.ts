/**
 * Subprocess bridge to the Python accelerator toolchain.
 *
 * The exporter talks to the toolchain only through its command line:
 * `validate` for interchange diagnostics and `infer` for reference float
 * inference.  Set ACCELKIT_PYTHON to pick a specific interpreter.
 */

import { spawnSync } from 'child_process';

export class ToolchainError extends Error {}

export interface Diagnostic {
  severity: string;
  code: string;
  message: string;
  layer: number | null;
}

const PYTHON = process.env.ACCELKIT_PYTHON ?? 'python3';

function runToolchain(
  args: string[],
  stdin?: string,
): { status: number; stdout: string; stderr: string } {
  const proc = spawnSync(PYTHON, ['-m', 'accelkit', ...args], {
    input: stdin,
    encoding: 'utf8',
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw new ToolchainError(
      `failed to launch ${PYTHON} -m accelkit: ${proc.error.message}`,
    );
  }
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

/** Runs `accelkit validate --json` and returns the diagnostics list. */
export function validateModel(modelPath: string): Diagnostic[] {
  const result = runToolchain(['validate', '--model', modelPath, '--json']);
  let parsed: unknown;
  try {
    parsed = JSON.parse(result.stdout);
  } catch {
    throw new ToolchainError(
      `validate did not return JSON (exit ${result.status}): ${result.stderr.trim()}`,
    );
  }
  const diagnostics = (parsed as { diagnostics?: Diagnostic[] }).diagnostics;
  if (!Array.isArray(diagnostics)) {
    throw new ToolchainError('validate output has no diagnostics list');
  }
  return diagnostics;
}

/** Runs `accelkit infer` on a batch of input vectors via stdin. */
export function inferFloat(modelPath: string, inputs: number[][]): number[][] {
  const result = runToolchain(
    ['infer', '--model', modelPath, '--input', '-'],
    JSON.stringify(inputs),
  );
  if (result.status !== 0) {
    throw new ToolchainError(
      `infer failed (exit ${result.status}): ${result.stderr.trim()}`,
    );
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(result.stdout);
  } catch {
    throw new ToolchainError('infer did not return JSON');
  }
  const outputs = (parsed as { outputs?: number[][] }).outputs;
  if (!Array.isArray(outputs) || outputs.length !== inputs.length) {
    throw new ToolchainError('infer output has the wrong batch size');
  }
  return outputs;
}
