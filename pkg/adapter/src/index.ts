export { Backend, BackendSettings, EchoBackend, GenerateJob, HttpBackend } from './backends.js';
export { decodeGray, encodeRgb, imageSize } from './png.js';
export {
  loadManifest,
  processManifest,
  ProcessOptions,
  ProcessOutcome,
  SchemaMismatchError,
  selectPending,
  STATUS_FILENAME,
} from './process.js';
export {
  BackendResult,
  BackendStatus,
  BackendStatusSchema,
  Manifest,
  ManifestEntry,
  ManifestSchema,
  SCHEMA_VERSION,
} from './schema.js';
