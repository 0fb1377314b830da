/**
 * cfgkit-adapter/1 request loop: newline-delimited JSON over stdin/stdout,
 * one response per request, id echoed back. Malformed or unknown requests
 * produce ok=false without terminating the process.
 */

import { createInterface } from 'node:readline';
import { ModelBundle } from './bundle.js';
import { EXPLAIN_METHODS, explainEdges } from './explainers.js';
import { featureMatrix, parseGraph } from './graph.js';
import { predict } from './gnn.js';

export const ADAPTER_NAME = 'cfgkit-reference-adapter';
export const ADAPTER_VERSION = '0.1.0';

interface AdapterRequest {
  id?: unknown;
  op?: unknown;
  graph?: unknown;
  method?: unknown;
}

export function handleRequest(bundle: ModelBundle, line: string): Record<string, unknown> {
  let request: AdapterRequest;
  try {
    request = JSON.parse(line) as AdapterRequest;
  } catch {
    return { id: null, ok: false, error: 'malformed request: not valid JSON' };
  }
  if (typeof request !== 'object' || request === null) {
    return { id: null, ok: false, error: 'malformed request: not an object' };
  }
  const id = typeof request.id === 'number' ? request.id : null;
  try {
    switch (request.op) {
      case 'hello':
        return {
          id,
          ok: true,
          name: ADAPTER_NAME,
          version: ADAPTER_VERSION,
          ops: ['hello', 'predict', 'explain'],
        };
      case 'predict': {
        const g = parseGraph((request.graph ?? {}) as never);
        const x = featureMatrix(g, bundle.features, bundle.params.dIn);
        const [pBenign, pMalicious] = predict(bundle.params, g, x);
        return { id, ok: true, probs: [pBenign, pMalicious] };
      }
      case 'explain': {
        const method = String(request.method ?? '');
        if (!(EXPLAIN_METHODS as readonly string[]).includes(method)) {
          return { id, ok: false, error: `unknown method ${JSON.stringify(method)}` };
        }
        const g = parseGraph((request.graph ?? {}) as never);
        const x = featureMatrix(g, bundle.features, bundle.params.dIn);
        const scores = explainEdges(bundle.params, g, x, method);
        return {
          id,
          ok: true,
          edge_scores: g.edges.map(([src, dst], ei) => [src, dst, scores[ei]!]),
        };
      }
      default:
        return { id, ok: false, error: `unsupported op ${JSON.stringify(request.op)}` };
    }
  } catch (err) {
    return { id, ok: false, error: err instanceof Error ? err.message : String(err) };
  }
}

/** Serve until stdin closes. */
export async function serve(bundle: ModelBundle): Promise<void> {
  const rl = createInterface({ input: process.stdin });
  for await (const line of rl) {
    if (!line.trim()) continue;
    process.stdout.write(JSON.stringify(handleRequest(bundle, line)) + '\n');
  }
}
