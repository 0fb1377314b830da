/**
 * Small GIN-style graph classifier with manual gradients.
 *
 * Messages are sum-aggregated with learnable self-weighting and carry a
 * per-edge weight, so the same backward pass yields parameter gradients for
 * training and edge-weight gradients for saliency / integrated gradients:
 *
 *   m1[v] = (1 + eps1) x[v] + sum over in-edges (u,v) of w_e x[u]
 *   h1    = relu(m1 W1^T + b1)
 *   m2[v] = (1 + eps2) h1[v] + sum over in-edges (u,v) of w_e h1[u]
 *   h2    = relu(m2 W2^T + b2)
 *   s     = readout . mean_v h2[v] + bOut,   p_malicious = sigmoid(s)
 */

import { ParsedGraph } from './graph.js';
import { Rng } from './rng.js';

export interface GinParams {
  dIn: number;
  hidden1: number;
  hidden2: number;
  w1: number[][];
  b1: number[];
  eps1: number;
  w2: number[][];
  b2: number[];
  eps2: number;
  readout: number[];
  bOut: number;
}

export interface GinGrads {
  w1: number[][];
  b1: number[];
  eps1: number;
  w2: number[][];
  b2: number[];
  eps2: number;
  readout: number[];
  bOut: number;
  /** d(objective)/d(edge weight), aligned with graph.edges. */
  edges: number[];
}

interface ForwardCache {
  x: number[][];
  m1: number[][];
  z1: number[][];
  h1: number[][];
  m2: number[][];
  z2: number[][];
  h2: number[][];
  pooled: number[];
  s: number;
  pMalicious: number;
  edgeWeights: number[];
}

export function initParams(seed: number, dIn: number, hidden1 = 16, hidden2 = 8): GinParams {
  const rng = new Rng(seed);
  const matrix = (rows: number, cols: number, fanIn: number) =>
    Array.from({ length: rows }, () =>
      Array.from({ length: cols }, () => rng.uniform(1 / Math.sqrt(fanIn))),
    );
  const vector = (len: number, fanIn: number) =>
    Array.from({ length: len }, () => rng.uniform(1 / Math.sqrt(fanIn)));
  return {
    dIn,
    hidden1,
    hidden2,
    w1: matrix(hidden1, dIn, dIn),
    b1: vector(hidden1, dIn),
    eps1: 0,
    w2: matrix(hidden2, hidden1, hidden1),
    b2: vector(hidden2, hidden1),
    eps2: 0,
    readout: vector(hidden2, hidden2),
    bOut: 0,
  };
}

function aggregate(
  g: ParsedGraph,
  h: number[][],
  eps: number,
  edgeWeights: number[],
): number[][] {
  const out: number[][] = [];
  for (let v = 0; v < g.numNodes; v++) {
    const row = h[v]!.map((value) => (1 + eps) * value);
    for (const ei of g.inEdges[v]!) {
      const [u] = g.edges[ei]!;
      const weight = edgeWeights[ei]!;
      const src = h[u]!;
      for (let j = 0; j < row.length; j++) row[j]! += weight * src[j]!;
    }
    out.push(row);
  }
  return out;
}

function dense(m: number[][], weight: number[][], bias: number[]): number[][] {
  return m.map((row) => {
    const out = new Array<number>(weight.length);
    for (let h = 0; h < weight.length; h++) {
      let acc = bias[h]!;
      const wRow = weight[h]!;
      for (let j = 0; j < row.length; j++) acc += wRow[j]! * row[j]!;
      out[h] = acc;
    }
    return out;
  });
}

const relu = (m: number[][]) => m.map((row) => row.map((v) => (v > 0 ? v : 0)));

export function forward(
  params: GinParams,
  g: ParsedGraph,
  x: number[][],
  edgeWeights?: number[],
): ForwardCache {
  if (g.numNodes === 0) throw new Error('cannot classify an empty graph');
  const w = edgeWeights ?? g.edges.map(() => 1);
  const m1 = aggregate(g, x, params.eps1, w);
  const z1 = dense(m1, params.w1, params.b1);
  const h1 = relu(z1);
  const m2 = aggregate(g, h1, params.eps2, w);
  const z2 = dense(m2, params.w2, params.b2);
  const h2 = relu(z2);
  const pooled = new Array<number>(params.hidden2).fill(0);
  for (const row of h2) for (let j = 0; j < row.length; j++) pooled[j]! += row[j]! / g.numNodes;
  let s = params.bOut;
  for (let j = 0; j < params.hidden2; j++) s += params.readout[j]! * pooled[j]!;
  const pMalicious = 1 / (1 + Math.exp(-s));
  return { x, m1, z1, h1, m2, z2, h2, pooled, s, pMalicious, edgeWeights: w };
}

export function predict(params: GinParams, g: ParsedGraph, x: number[][]): [number, number] {
  const { pMalicious } = forward(params, g, x);
  return [1 - pMalicious, pMalicious];
}

/**
 * Backward pass from d(objective)/d(logit). For binary cross-entropy on a
 * label y that seed is (p - y); for explainers seed 1 to get d(logit)/d(·).
 */
export function backward(
  params: GinParams,
  g: ParsedGraph,
  cache: ForwardCache,
  dLogit: number,
): GinGrads {
  const n = g.numNodes;
  const w = cache.edgeWeights;
  const gReadout = cache.pooled.map((v) => dLogit * v);
  const dPooled = params.readout.map((r) => dLogit * r);
  const dH2 = cache.h2.map(() => dPooled.map((v) => v / n));
  const dZ2 = dH2.map((row, v) => row.map((value, j) => (cache.z2[v]![j]! > 0 ? value : 0)));

  const gW2 = params.w2.map((row) => row.map(() => 0));
  const gB2 = new Array<number>(params.hidden2).fill(0);
  for (let v = 0; v < n; v++) {
    for (let h = 0; h < params.hidden2; h++) {
      const d = dZ2[v]![h]!;
      gB2[h]! += d;
      for (let j = 0; j < params.hidden1; j++) gW2[h]![j]! += d * cache.m2[v]![j]!;
    }
  }
  const dM2 = dZ2.map((row) => {
    const out = new Array<number>(params.hidden1).fill(0);
    for (let h = 0; h < params.hidden2; h++) {
      const d = row[h]!;
      for (let j = 0; j < params.hidden1; j++) out[j]! += d * params.w2[h]![j]!;
    }
    return out;
  });

  let gEps2 = 0;
  for (let v = 0; v < n; v++) {
    for (let j = 0; j < params.hidden1; j++) gEps2 += dM2[v]![j]! * cache.h1[v]![j]!;
  }
  const gEdges = g.edges.map(() => 0);
  const dH1 = cache.h1.map((_, v) => dM2[v]!.map((value) => (1 + params.eps2) * value));
  g.edges.forEach(([u, v], ei) => {
    for (let j = 0; j < params.hidden1; j++) {
      gEdges[ei]! += dM2[v]![j]! * cache.h1[u]![j]!;
      dH1[u]![j]! += w[ei]! * dM2[v]![j]!;
    }
  });

  const dZ1 = dH1.map((row, v) => row.map((value, j) => (cache.z1[v]![j]! > 0 ? value : 0)));
  const gW1 = params.w1.map((row) => row.map(() => 0));
  const gB1 = new Array<number>(params.hidden1).fill(0);
  for (let v = 0; v < n; v++) {
    for (let h = 0; h < params.hidden1; h++) {
      const d = dZ1[v]![h]!;
      gB1[h]! += d;
      for (let j = 0; j < params.dIn; j++) gW1[h]![j]! += d * cache.m1[v]![j]!;
    }
  }
  const dM1 = dZ1.map((row) => {
    const out = new Array<number>(params.dIn).fill(0);
    for (let h = 0; h < params.hidden1; h++) {
      const d = row[h]!;
      for (let j = 0; j < params.dIn; j++) out[j]! += d * params.w1[h]![j]!;
    }
    return out;
  });
  let gEps1 = 0;
  for (let v = 0; v < n; v++) {
    for (let j = 0; j < params.dIn; j++) gEps1 += dM1[v]![j]! * cache.x[v]![j]!;
  }
  g.edges.forEach(([u, v], ei) => {
    for (let j = 0; j < params.dIn; j++) gEdges[ei]! += dM1[v]![j]! * cache.x[u]![j]!;
  });

  return {
    w1: gW1,
    b1: gB1,
    eps1: gEps1,
    w2: gW2,
    b2: gB2,
    eps2: gEps2,
    readout: gReadout,
    bOut: dLogit,
    edges: gEdges,
  };
}

/** Binary cross-entropy on p_malicious with its logit-space gradient seed. */
export function bceLoss(pMalicious: number, label: 0 | 1): { loss: number; dLogit: number } {
  const p = Math.min(Math.max(pMalicious, 1e-12), 1 - 1e-12);
  const loss = -(label * Math.log(p) + (1 - label) * Math.log(1 - p));
  return { loss, dLogit: pMalicious - label };
}

export function applySgdStep(params: GinParams, grads: GinGrads, lr: number): void {
  for (let h = 0; h < params.hidden1; h++) {
    params.b1[h]! -= lr * grads.b1[h]!;
    for (let j = 0; j < params.dIn; j++) params.w1[h]![j]! -= lr * grads.w1[h]![j]!;
  }
  for (let h = 0; h < params.hidden2; h++) {
    params.b2[h]! -= lr * grads.b2[h]!;
    for (let j = 0; j < params.hidden1; j++) params.w2[h]![j]! -= lr * grads.w2[h]![j]!;
  }
  for (let j = 0; j < params.hidden2; j++) params.readout[j]! -= lr * grads.readout[j]!;
  params.eps1 -= lr * grads.eps1;
  params.eps2 -= lr * grads.eps2;
  params.bOut -= lr * grads.bOut;
}
