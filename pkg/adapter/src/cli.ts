#!/usr/bin/env node
import { Backend, EchoBackend, HttpBackend } from './backends.js';
import { processManifest, SchemaMismatchError } from './process.js';

function usage(): never {
  console.error(
    'usage: maskforge-adapter --manifest <path> [--backend echo|http] ' +
    '[--endpoint URL] [--concurrency N] [--mask-strength X] [--canny-strength X] [--model NAME]',
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      usage();
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  const manifest = args.get('manifest');
  if (!manifest) {
    usage();
  }
  const backendName = args.get('backend') ?? process.env.MASKFORGE_BACKEND ?? 'echo';
  let backend: Backend;
  if (backendName === 'echo') {
    backend = new EchoBackend();
  } else if (backendName === 'http') {
    const endpoint = args.get('endpoint') ?? process.env.MASKFORGE_ENDPOINT;
    if (!endpoint) {
      console.error('http backend needs --endpoint or MASKFORGE_ENDPOINT');
      return 2;
    }
    backend = new HttpBackend({ endpoint });
  } else {
    console.error(`unknown backend: ${backendName}`);
    return 2;
  }
  try {
    const outcome = await processManifest(manifest, backend, {
      concurrency: args.has('concurrency') ? Number(args.get('concurrency')) : undefined,
      settings: {
        maskStrength: args.has('mask-strength') ? Number(args.get('mask-strength')) : undefined,
        cannyStrength: args.has('canny-strength') ? Number(args.get('canny-strength')) : undefined,
        model: args.get('model') ?? process.env.MASKFORGE_MODEL,
      },
    });
    const errors = outcome.status.results.filter((r) => r.status === 'error').length;
    console.log(
      `processed ${outcome.generated} entries with ${backend.name} backend` +
      (errors ? ` (${errors} errors, see backend_status.json)` : ''),
    );
    return 0; // partial failures still exit 0; per-id outcomes are in the status file
  } catch (err) {
    if (err instanceof SchemaMismatchError) {
      console.error(err.message);
      return 2;
    }
    throw err;
  }
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err);
    process.exit(2);
  },
);
