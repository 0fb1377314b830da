/**
 * Edge-attribution explainers over the classifier's edge weights.
 *
 * ig: integrated gradients of p_malicious along the straight path from
 *     all-zero edge weights (messages off) to the actual graph, midpoint
 *     Riemann sum with a fixed number of steps.
 * saliency: |d p_malicious / d w_e| at the actual graph.
 * occlusion: p_c(full) - p_c(edge zeroed), c the predicted class.
 */

import { ParsedGraph } from './graph.js';
import { GinParams, backward, forward } from './gnn.js';

export const EXPLAIN_METHODS = ['ig', 'saliency', 'occlusion'] as const;
export type ExplainMethod = (typeof EXPLAIN_METHODS)[number];

const IG_STEPS = 32;

function sigmoidGrad(p: number): number {
  return p * (1 - p);
}

export function explainEdges(
  params: GinParams,
  g: ParsedGraph,
  x: number[][],
  method: string,
): number[] {
  switch (method) {
    case 'ig':
      return integratedGradients(params, g, x);
    case 'saliency':
      return saliency(params, g, x);
    case 'occlusion':
      return occlusion(params, g, x);
    default:
      throw new Error(`unknown explain method ${JSON.stringify(method)}`);
  }
}

function integratedGradients(params: GinParams, g: ParsedGraph, x: number[][]): number[] {
  const scores = g.edges.map(() => 0);
  for (let step = 0; step < IG_STEPS; step++) {
    const alpha = (step + 0.5) / IG_STEPS;
    const weights = g.edges.map(() => alpha);
    const cache = forward(params, g, x, weights);
    const grads = backward(params, g, cache, sigmoidGrad(cache.pMalicious));
    for (let ei = 0; ei < scores.length; ei++) {
      scores[ei]! += grads.edges[ei]! / IG_STEPS;
    }
  }
  return scores;
}

function saliency(params: GinParams, g: ParsedGraph, x: number[][]): number[] {
  const cache = forward(params, g, x);
  const grads = backward(params, g, cache, sigmoidGrad(cache.pMalicious));
  return grads.edges.map(Math.abs);
}

function occlusion(params: GinParams, g: ParsedGraph, x: number[][]): number[] {
  const base = forward(params, g, x);
  const cls = base.pMalicious > 0.5 ? 1 : 0;
  const baseProb = cls === 1 ? base.pMalicious : 1 - base.pMalicious;
  return g.edges.map((_, ei) => {
    const weights = g.edges.map((__, j) => (j === ei ? 0 : 1));
    const { pMalicious } = forward(params, g, x, weights);
    return baseProb - (cls === 1 ? pMalicious : 1 - pMalicious);
  });
}
