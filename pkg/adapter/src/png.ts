import { PNG } from 'pngjs';

export interface GrayImage {
  width: number;
  height: number;
  /** one byte per pixel, row-major */
  gray: Uint8Array;
}

export function decodeGray(buffer: Buffer): GrayImage {
  const png = PNG.sync.read(buffer);
  const gray = new Uint8Array(png.width * png.height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] = png.data[i * 4]; // pngjs expands to RGBA; channel 0 suffices for grayscale inputs
  }
  return { width: png.width, height: png.height, gray };
}

export function encodeRgb(width: number, height: number, rgb: Uint8Array): Buffer {
  if (rgb.length !== width * height * 3) {
    throw new Error(`rgb buffer length ${rgb.length} != ${width}x${height}x3`);
  }
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = rgb[i * 3];
    png.data[i * 4 + 1] = rgb[i * 3 + 1];
    png.data[i * 4 + 2] = rgb[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

export function imageSize(buffer: Buffer): { width: number; height: number } {
  const png = PNG.sync.read(buffer);
  return { width: png.width, height: png.height };
}
