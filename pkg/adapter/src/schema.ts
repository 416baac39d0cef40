import { z } from 'zod';

export const SCHEMA_VERSION = 1;

export const ManifestEntrySchema = z.object({
  id: z.string().min(1),
  source_id: z.string(),
  edit: z.object({ kind: z.string() }).passthrough(),
  files: z.object({
    mask: z.string(),
    canny: z.string(),
    prompt: z.string(),
    image: z.string().nullable(),
  }),
  digests: z.record(z.string(), z.string()),
  backend: z.string(),
  status: z.enum(['ok', 'pending', 'none', 'error']),
  error: z.string().nullable(),
  topology: z.object({
    source: z.array(z.number()),
    emitted: z.array(z.number()),
  }),
});

export const ManifestSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  dataset: z.string(),
  config: z.record(z.string(), z.unknown()),
  entries: z.array(ManifestEntrySchema),
});

export type Manifest = z.infer<typeof ManifestSchema>;
export type ManifestEntry = z.infer<typeof ManifestEntrySchema>;

export const BackendResultSchema = z.object({
  id: z.string(),
  status: z.enum(['ok', 'error']),
  message: z.string().optional(),
});

export const BackendStatusSchema = z.object({
  schema_version: z.literal(SCHEMA_VERSION),
  backend: z.string(),
  settings: z.record(z.string(), z.unknown()),
  results: z.array(BackendResultSchema),
});

export type BackendStatus = z.infer<typeof BackendStatusSchema>;
export type BackendResult = z.infer<typeof BackendResultSchema>;
