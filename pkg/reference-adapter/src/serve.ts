/** Entrypoint: `node dist/serve.js --bundle model.json` */

import { loadBundle } from './bundle.js';
import { serve } from './server.js';

function main(): void {
  const args = process.argv.slice(2);
  const at = args.indexOf('--bundle');
  if (at === -1 || at + 1 >= args.length) {
    process.stderr.write('usage: serve --bundle <model.json>\n');
    process.exit(2);
  }
  let bundle;
  try {
    bundle = loadBundle(args[at + 1]!);
  } catch (err) {
    process.stderr.write(`cannot load bundle: ${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
  void serve(bundle);
}

main();
