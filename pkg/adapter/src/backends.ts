import { decodeGray, encodeRgb } from './png.js';

/** One entry's generation inputs, resolved to raw bytes by the processor. */
export interface GenerateJob {
  id: string;
  maskPng: Buffer;
  cannyPng: Buffer;
  prompt: string;
}

/** Per-condition guidance strengths, forwarded to real backends and recorded
 * in backend_status.json. How the two condition branches are weighted is not
 * fixed by the pipeline; these knobs parameterize it. */
export interface BackendSettings {
  maskStrength: number;
  cannyStrength: number;
  model?: string;
}

export interface Backend {
  readonly name: string;
  generate(job: GenerateJob, settings: BackendSettings): Promise<Buffer>;
}

/** Test double: renders the canny condition colorized over a dark backdrop,
 * with the mask region faintly tinted. No network, fully deterministic. */
export class EchoBackend implements Backend {
  readonly name = 'echo';

  async generate(job: GenerateJob, settings: BackendSettings): Promise<Buffer> {
    const mask = decodeGray(job.maskPng);
    const canny = decodeGray(job.cannyPng);
    if (canny.width !== mask.width || canny.height !== mask.height) {
      throw new Error(`${job.id}: canny ${canny.width}x${canny.height} differs from ` +
        `mask ${mask.width}x${mask.height}`);
    }
    const n = mask.width * mask.height;
    const rgb = new Uint8Array(n * 3);
    const tint = Math.round(40 * settings.maskStrength);
    const edgeGain = Math.min(1, settings.cannyStrength);
    for (let i = 0; i < n; i++) {
      const inMask = mask.gray[i] >= 128;
      let r = 24, g = 24, b = 32;
      if (inMask) {
        r += tint; g += tint; b += tint;
      }
      if (canny.gray[i] >= 128) {
        r = Math.round(255 * edgeGain);
        g = Math.round(140 * edgeGain);
        b = 0;
      }
      rgb[i * 3] = r;
      rgb[i * 3 + 1] = g;
      rgb[i * 3 + 2] = b;
    }
    return encodeRgb(mask.width, mask.height, rgb);
  }
}

export interface HttpBackendOptions {
  endpoint: string;
  timeoutMs?: number;
}

/** Client for an external generation service. POSTs the bundle as JSON
 * (base64 images) and expects `{ "image_png": "<base64>" }` back. */
export class HttpBackend implements Backend {
  readonly name = 'http';
  private readonly endpoint: string;
  private readonly timeoutMs: number;

  constructor(options: HttpBackendOptions) {
    this.endpoint = options.endpoint;
    this.timeoutMs = options.timeoutMs ?? 120_000;
  }

  async generate(job: GenerateJob, settings: BackendSettings): Promise<Buffer> {
    const { width, height } = decodeGray(job.maskPng);
    const body = {
      id: job.id,
      prompt: job.prompt,
      width,
      height,
      mask_png: job.maskPng.toString('base64'),
      canny_png: job.cannyPng.toString('base64'),
      mask_strength: settings.maskStrength,
      canny_strength: settings.cannyStrength,
      model: settings.model ?? null,
    };
    const response = await fetch(this.endpoint, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!response.ok) {
      throw new Error(`${job.id}: endpoint returned ${response.status}`);
    }
    const doc = (await response.json()) as { image_png?: string };
    if (!doc.image_png) {
      throw new Error(`${job.id}: response carries no image_png`);
    }
    return Buffer.from(doc.image_png, 'base64');
  }
}
