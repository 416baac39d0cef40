import { promises as fs } from 'node:fs';
import path from 'node:path';

import { Backend, BackendSettings } from './backends.js';
import { imageSize } from './png.js';
import {
  BackendResult,
  BackendStatus,
  BackendStatusSchema,
  Manifest,
  ManifestEntry,
  ManifestSchema,
  SCHEMA_VERSION,
} from './schema.js';

export const STATUS_FILENAME = 'backend_status.json';

/** Raised when the manifest (or a prior status file) fails schema validation;
 * the CLI maps it to exit code 2. */
export class SchemaMismatchError extends Error {}

export interface ProcessOptions {
  concurrency?: number;
  settings?: Partial<BackendSettings>;
}

export interface ProcessOutcome {
  status: BackendStatus;
  /** number of generate() calls actually issued this run */
  generated: number;
}

export async function loadManifest(manifestPath: string): Promise<Manifest> {
  let raw: string;
  try {
    raw = await fs.readFile(manifestPath, 'utf-8');
  } catch (err) {
    throw new SchemaMismatchError(`cannot read manifest: ${String(err)}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new SchemaMismatchError(`manifest is not valid JSON: ${String(err)}`);
  }
  const parsed = ManifestSchema.safeParse(doc);
  if (!parsed.success) {
    throw new SchemaMismatchError(`manifest schema mismatch: ${parsed.error.message}`);
  }
  return parsed.data;
}

async function fileExists(p: string): Promise<boolean> {
  try {
    await fs.access(p);
    return true;
  } catch {
    return false;
  }
}

async function priorOkIds(outDir: string): Promise<Set<string>> {
  const statusPath = path.join(outDir, STATUS_FILENAME);
  if (!(await fileExists(statusPath))) {
    return new Set();
  }
  const parsed = BackendStatusSchema.safeParse(JSON.parse(await fs.readFile(statusPath, 'utf-8')));
  if (!parsed.success) {
    throw new SchemaMismatchError(`existing ${STATUS_FILENAME} is invalid: ${parsed.error.message}`);
  }
  return new Set(parsed.data.results.filter((r) => r.status === 'ok').map((r) => r.id));
}

async function atomicWrite(filePath: string, data: Buffer | string): Promise<void> {
  const tmp = `${filePath}.tmp`;
  await fs.writeFile(tmp, data);
  await fs.rename(tmp, filePath);
}

/** Entries that still need an image: the manifest declares an output path,
 * no prior run recorded them ok, and the image file is absent. */
export async function selectPending(
  manifest: Manifest,
  outDir: string,
): Promise<ManifestEntry[]> {
  const done = await priorOkIds(outDir);
  const pending: ManifestEntry[] = [];
  for (const entry of manifest.entries) {
    const image = entry.files.image;
    if (!image || entry.status === 'ok' || entry.status === 'none') {
      continue;
    }
    if (done.has(entry.id)) {
      continue;
    }
    if (await fileExists(path.join(outDir, image))) {
      continue;
    }
    pending.push(entry);
  }
  return pending;
}

async function generateOne(
  entry: ManifestEntry,
  outDir: string,
  backend: Backend,
  settings: BackendSettings,
): Promise<BackendResult> {
  try {
    const maskPath = path.join(outDir, entry.files.mask);
    const maskPng = await fs.readFile(maskPath);
    const cannyPng = await fs.readFile(path.join(outDir, entry.files.canny));
    const prompt = await fs.readFile(path.join(outDir, entry.files.prompt), 'utf-8');
    const imagePng = await backend.generate(
      { id: entry.id, maskPng, cannyPng, prompt },
      settings,
    );
    const maskDims = imageSize(maskPng);
    const outDims = imageSize(imagePng);
    if (outDims.width !== maskDims.width || outDims.height !== maskDims.height) {
      throw new Error(
        `backend returned ${outDims.width}x${outDims.height}, ` +
        `mask is ${maskDims.width}x${maskDims.height}`,
      );
    }
    await atomicWrite(path.join(outDir, entry.files.image as string), imagePng);
    return { id: entry.id, status: 'ok' };
  } catch (err) {
    return { id: entry.id, status: 'error', message: String(err) };
  }
}

/** Process every pending entry of a manifest with bounded concurrency,
 * then write backend_status.json once (atomically). Unreachable backends
 * degrade to per-id error results; the returned status always validates. */
export async function processManifest(
  manifestPath: string,
  backend: Backend,
  options: ProcessOptions = {},
): Promise<ProcessOutcome> {
  const manifest = await loadManifest(manifestPath);
  const outDir = path.dirname(path.resolve(manifestPath));
  const settings: BackendSettings = {
    maskStrength: options.settings?.maskStrength ?? 1.0,
    cannyStrength: options.settings?.cannyStrength ?? 1.0,
    model: options.settings?.model,
  };
  const pending = await selectPending(manifest, outDir);
  const concurrency = Math.max(1, options.concurrency ?? 4);

  const results: BackendResult[] = new Array(pending.length);
  let next = 0;
  async function worker(): Promise<void> {
    for (;;) {
      const index = next++;
      if (index >= pending.length) {
        return;
      }
      results[index] = await generateOne(pending[index], outDir, backend, settings);
    }
  }
  await Promise.all(Array.from({ length: Math.min(concurrency, pending.length || 1) }, worker));

  const status: BackendStatus = {
    schema_version: SCHEMA_VERSION,
    backend: backend.name,
    settings: {
      mask_strength: settings.maskStrength,
      canny_strength: settings.cannyStrength,
      model: settings.model ?? null,
      concurrency,
    },
    results,
  };
  BackendStatusSchema.parse(status);
  await atomicWrite(
    path.join(outDir, STATUS_FILENAME),
    JSON.stringify(status, null, 2) + '\n',
  );
  return { status, generated: pending.length };
}
