/**
 * Model bundle: architecture name, trained weights, featurization mode, and
 * training provenance, serialized as one JSON document.
 */

import { readFileSync, writeFileSync } from 'node:fs';
import { GinParams } from './gnn.js';

export const BUNDLE_SCHEMA = 'cfgkit-bundle/1';

export interface ModelBundle {
  schema: typeof BUNDLE_SCHEMA;
  architecture: 'gin';
  classes: 2;
  features: 'degree-16' | 'native';
  params: GinParams;
  seed: number;
  trainedEpochs: number;
  learningRate: number;
  heldOutAccuracy: number | null;
}

export function saveBundle(bundle: ModelBundle, path: string): void {
  writeFileSync(path, JSON.stringify(bundle, null, 1) + '\n', 'utf-8');
}

export function loadBundle(path: string): ModelBundle {
  const doc = JSON.parse(readFileSync(path, 'utf-8')) as ModelBundle;
  if (doc.schema !== BUNDLE_SCHEMA) {
    throw new Error(`expected schema ${BUNDLE_SCHEMA}, got ${JSON.stringify(doc.schema)}`);
  }
  if (doc.architecture !== 'gin' || doc.classes !== 2 || !doc.params) {
    throw new Error('bundle is missing architecture, class count, or parameters');
  }
  return doc;
}
