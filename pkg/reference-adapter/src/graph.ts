/**
 * Minimal cfgkit-graph/1 ingestion: parse, validate, and derive the node
 * feature matrix the classifier consumes.
 */

export interface GraphDoc {
  schema?: string;
  nodes?: Array<{ id: number; label?: string; feat?: number[] }>;
  edges?: Array<{ src: number; dst: number }>;
  graph_label?: string;
  meta?: Record<string, string>;
}

export interface ParsedGraph {
  numNodes: number;
  /** [src, dst] pairs, in document order. */
  edges: Array<[number, number]>;
  /** Per-node in-edges as indices into `edges`. */
  inEdges: number[][];
  /** Per-node out-edges as indices into `edges`. */
  outEdges: number[][];
  feats: number[][] | null;
  meta: Record<string, string>;
}

export const DEGREE_FEATURE_DIM = 16;

export function parseGraph(doc: GraphDoc): ParsedGraph {
  if (doc.schema !== 'cfgkit-graph/1') {
    throw new Error(`expected schema cfgkit-graph/1, got ${JSON.stringify(doc.schema)}`);
  }
  const nodes = doc.nodes ?? [];
  const n = nodes.length;
  const ids = nodes.map((r) => r.id).sort((a, b) => a - b);
  for (let i = 0; i < n; i++) {
    if (ids[i] !== i) throw new Error('node ids must be dense integers 0..n-1');
  }
  const edges: Array<[number, number]> = [];
  const seen = new Set<string>();
  for (const e of doc.edges ?? []) {
    const src = e.src | 0;
    const dst = e.dst | 0;
    if (src < 0 || src >= n || dst < 0 || dst >= n) {
      throw new Error(`edge (${src},${dst}) has a dangling endpoint`);
    }
    const key = `${src},${dst}`;
    if (seen.has(key)) throw new Error(`duplicate edge (${src},${dst})`);
    seen.add(key);
    edges.push([src, dst]);
  }
  const inEdges: number[][] = Array.from({ length: n }, () => []);
  const outEdges: number[][] = Array.from({ length: n }, () => []);
  edges.forEach(([src, dst], i) => {
    outEdges[src]!.push(i);
    inEdges[dst]!.push(i);
  });
  let feats: number[][] | null = null;
  const withFeat = nodes.filter((r) => r.feat != null);
  if (withFeat.length > 0) {
    if (withFeat.length !== n) throw new Error('feature vectors must cover all nodes');
    const dim = withFeat[0]!.feat!.length;
    const byId = new Map(nodes.map((r) => [r.id, r.feat!]));
    feats = [];
    for (let v = 0; v < n; v++) {
      const f = byId.get(v)!;
      if (f.length !== dim) throw new Error('feature vectors must share one length');
      feats.push(f.map(Number));
    }
  }
  return { numNodes: n, edges, inEdges, outEdges, feats, meta: doc.meta ?? {} };
}

/** Undirected degree, self-loop counting once (matches the toolkit convention). */
export function undirectedDegree(g: ParsedGraph, v: number): number {
  const neighbors = new Set<number>();
  let selfLoop = 0;
  for (const ei of g.outEdges[v]!) {
    const [, dst] = g.edges[ei]!;
    if (dst === v) selfLoop = 1;
    else neighbors.add(dst);
  }
  for (const ei of g.inEdges[v]!) {
    const [src] = g.edges[ei]!;
    if (src === v) selfLoop = 1;
    else neighbors.add(src);
  }
  return neighbors.size + selfLoop;
}

/**
 * Feature matrix for the classifier. `mode` comes from the model bundle:
 * degree-16 always uses the clipped one-hot of undirected degree; native
 * requires node features of the bundle's input width.
 */
export function featureMatrix(g: ParsedGraph, mode: 'degree-16' | 'native', dIn: number): number[][] {
  if (mode === 'native') {
    if (!g.feats) throw new Error('model expects native node features but the graph has none');
    if (g.feats[0] && g.feats[0].length !== dIn) {
      throw new Error(`model expects ${dIn}-dim features, graph has ${g.feats[0].length}`);
    }
    return g.feats;
  }
  const x: number[][] = [];
  for (let v = 0; v < g.numNodes; v++) {
    const row = new Array<number>(DEGREE_FEATURE_DIM).fill(0);
    row[Math.min(undirectedDegree(g, v), DEGREE_FEATURE_DIM - 1)] = 1;
    x.push(row);
  }
  return x;
}
