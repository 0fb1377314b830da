/**
 * Toy training: a style-labeled synthetic corpus from the cfgkit CLI
 * (hub-shaped graphs are labeled malicious, chain-heavy benign), per-sample
 * SGD on binary cross-entropy, and a held-out accuracy gate before the
 * bundle is written.
 *
 * Usage: node dist/train.js --seed 7 --count 80 --out bundle.json
 *        [--epochs 60] [--lr 0.1] [--blocks 18] [--cfgkit cfgkit]
 */

import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { BUNDLE_SCHEMA, ModelBundle, saveBundle } from './bundle.js';
import { DEGREE_FEATURE_DIM, ParsedGraph, featureMatrix, parseGraph } from './graph.js';
import { applySgdStep, backward, bceLoss, forward, initParams } from './gnn.js';
import { Rng } from './rng.js';

export interface ToySample {
  graph: ParsedGraph;
  x: number[][];
  label: 0 | 1;
}

export interface ToyTrainOptions {
  seed: number;
  count: number;
  epochs: number;
  learningRate: number;
  blocks: number;
  cfgkit: string;
}

export const TOY_DEFAULTS: Omit<ToyTrainOptions, 'seed'> = {
  count: 80,
  epochs: 40,
  learningRate: 0.1,
  blocks: 18,
  cfgkit: 'cfgkit',
};

/** Generate one labeled corpus via `cfgkit gen`; style decides the label. */
export function generateToyCorpus(options: ToyTrainOptions): ToySample[] {
  const dir = mkdtempSync(join(tmpdir(), 'cfgkit-toy-'));
  const samples: ToySample[] = [];
  try {
    for (let i = 0; i < options.count; i++) {
      const style = i % 2 === 0 ? 'hub' : 'chain-heavy';
      const label: 0 | 1 = style === 'hub' ? 1 : 0;
      const path = join(dir, `g${i}.json`);
      execFileSync(options.cfgkit, [
        'gen',
        '--seed', String(options.seed * 10_000 + i),
        '--n', String(options.blocks),
        '--style', style,
        '--label', label === 1 ? 'malicious' : 'benign',
        '-o', path,
      ]);
      const graph = parseGraph(JSON.parse(readFileSync(path, 'utf-8')));
      const x = featureMatrix(graph, 'degree-16', DEGREE_FEATURE_DIM);
      samples.push({ graph, x, label });
    }
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
  return samples;
}

export interface ToyTrainResult {
  bundle: ModelBundle;
  trainLoss: number[];
  heldOutAccuracy: number;
}

/** Train on the even-index split, evaluate accuracy on the odd-index split. */
export function trainToy(samples: ToySample[], options: ToyTrainOptions): ToyTrainResult {
  const train = samples.filter((_, i) => i % 4 !== 3);
  const test = samples.filter((_, i) => i % 4 === 3);
  if (train.length < 2 || test.length < 1) throw new Error('corpus too small to split');
  const params = initParams(options.seed, DEGREE_FEATURE_DIM);
  const rng = new Rng(options.seed ^ 0x5eed);
  const trainLoss: number[] = [];
  for (let epoch = 0; epoch < options.epochs; epoch++) {
    const order = train.map((_, i) => i);
    rng.shuffle(order);
    let total = 0;
    for (const i of order) {
      const sample = train[i]!;
      const cache = forward(params, sample.graph, sample.x);
      const { loss, dLogit } = bceLoss(cache.pMalicious, sample.label);
      if (!Number.isFinite(loss)) throw new Error(`loss diverged at epoch ${epoch}`);
      total += loss;
      applySgdStep(params, backward(params, sample.graph, cache, dLogit), options.learningRate);
    }
    trainLoss.push(total / train.length);
  }
  let correct = 0;
  for (const sample of test) {
    const { pMalicious } = forward(params, sample.graph, sample.x);
    if ((pMalicious > 0.5 ? 1 : 0) === sample.label) correct++;
  }
  const heldOutAccuracy = correct / test.length;
  const bundle: ModelBundle = {
    schema: BUNDLE_SCHEMA,
    architecture: 'gin',
    classes: 2,
    features: 'degree-16',
    params,
    seed: options.seed,
    trainedEpochs: options.epochs,
    learningRate: options.learningRate,
    heldOutAccuracy,
  };
  return { bundle, trainLoss, heldOutAccuracy };
}

function parseArgs(argv: string[]): ToyTrainOptions & { out: string } {
  const get = (flag: string): string | undefined => {
    const at = argv.indexOf(flag);
    return at >= 0 && at + 1 < argv.length ? argv[at + 1] : undefined;
  };
  const seed = get('--seed');
  const out = get('--out');
  if (seed === undefined || out === undefined) {
    throw new Error('usage: train --seed <int> --out <bundle.json> [--count N] [--epochs N] [--lr F] [--blocks N] [--cfgkit CMD]');
  }
  return {
    seed: Number(seed),
    out,
    count: Number(get('--count') ?? TOY_DEFAULTS.count),
    epochs: Number(get('--epochs') ?? TOY_DEFAULTS.epochs),
    learningRate: Number(get('--lr') ?? TOY_DEFAULTS.learningRate),
    blocks: Number(get('--blocks') ?? TOY_DEFAULTS.blocks),
    cfgkit: get('--cfgkit') ?? TOY_DEFAULTS.cfgkit,
  };
}

const isMain = process.argv[1]?.endsWith('train.js') ?? false;
if (isMain) {
  try {
    const options = parseArgs(process.argv.slice(2));
    const samples = generateToyCorpus(options);
    const result = trainToy(samples, options);
    saveBundle(result.bundle, options.out);
    process.stdout.write(
      `trained ${options.epochs} epochs, final loss ${result.trainLoss.at(-1)?.toFixed(4)}, ` +
        `held-out accuracy ${result.heldOutAccuracy.toFixed(3)}\n`,
    );
    if (result.heldOutAccuracy < 0.8) {
      process.stderr.write('held-out accuracy below 0.8\n');
      process.exit(1);
    }
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  }
}
