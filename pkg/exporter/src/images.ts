/**
 * Image loading and preprocessing: binary PPM (P6) decoding, bilinear
 * resize of the shorter side, center crop, and per-channel normalization.
 * The engine consumes pixels post-normalization, so everything bakes in
 * here.
 */

import { readFileSync } from "node:fs";

// standard CLIP preprocessing statistics
export const DEFAULT_MEAN = [0.48145466, 0.4578275, 0.40821073];
export const DEFAULT_STD = [0.26862954, 0.2613026, 0.27577711];

export interface RawImage {
  width: number;
  height: number;
  data: Float64Array;           // channel-first RGB in [0, 1]
}

export function decodePpm(path: string): RawImage {
  const buf = readFileSync(path);
  let pos = 0;
  const token = (): string => {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {      // '#' comment runs to end of line
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      return token();
    }
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    return buf.subarray(start, pos).toString("ascii");
  };
  const magic = token();
  if (magic !== "P6") throw new Error(`${path}: unsupported PPM magic ${magic}`);
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0 && height > 0) || maxval !== 255) {
    throw new Error(`${path}: bad PPM header`);
  }
  pos++;                         // single whitespace after maxval
  if (buf.length - pos < 3 * width * height) {
    throw new Error(`${path}: truncated PPM payload`);
  }
  const data = new Float64Array(3 * width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < 3; c++) {
        data[c * width * height + y * width + x] =
          buf[pos + 3 * (y * width + x) + c] / 255;
      }
    }
  }
  return { width, height, data };
}

function sample(img: RawImage, c: number, y: number, x: number): number {
  const yy = Math.min(Math.max(y, 0), img.height - 1);
  const xx = Math.min(Math.max(x, 0), img.width - 1);
  return img.data[c * img.width * img.height + yy * img.width + xx];
}

export function resizeBilinear(img: RawImage, width: number, height: number): RawImage {
  const out = new Float64Array(3 * width * height);
  const sy = img.height / height;
  const sx = img.width / width;
  for (let c = 0; c < 3; c++) {
    for (let y = 0; y < height; y++) {
      const fy = (y + 0.5) * sy - 0.5;
      const y0 = Math.floor(fy);
      const wy = fy - y0;
      for (let x = 0; x < width; x++) {
        const fx = (x + 0.5) * sx - 0.5;
        const x0 = Math.floor(fx);
        const wx = fx - x0;
        const v =
          sample(img, c, y0, x0) * (1 - wy) * (1 - wx) +
          sample(img, c, y0, x0 + 1) * (1 - wy) * wx +
          sample(img, c, y0 + 1, x0) * wy * (1 - wx) +
          sample(img, c, y0 + 1, x0 + 1) * wy * wx;
        out[c * width * height + y * width + x] = v;
      }
    }
  }
  return { width, height, data: out };
}

export function centerCrop(img: RawImage, side: number): RawImage {
  const top = Math.floor((img.height - side) / 2);
  const left = Math.floor((img.width - side) / 2);
  if (top < 0 || left < 0) throw new Error("crop larger than image");
  const out = new Float64Array(3 * side * side);
  for (let c = 0; c < 3; c++) {
    for (let y = 0; y < side; y++) {
      for (let x = 0; x < side; x++) {
        out[c * side * side + y * side + x] =
          img.data[c * img.width * img.height + (top + y) * img.width + (left + x)];
      }
    }
  }
  return { width: side, height: side, data: out };
}

/** Resize shorter side to `side`, center-crop, normalize per channel. */
export function preprocess(img: RawImage, side: number,
                           mean = DEFAULT_MEAN, std = DEFAULT_STD): Float32Array {
  const scale = side / Math.min(img.width, img.height);
  const resized = resizeBilinear(img, Math.max(side, Math.round(img.width * scale)),
                                 Math.max(side, Math.round(img.height * scale)));
  const cropped = centerCrop(resized, side);
  const out = new Float32Array(3 * side * side);
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < side * side; i++) {
      out[c * side * side + i] =
        Math.fround((cropped.data[c * side * side + i] - mean[c]) / std[c]);
    }
  }
  return out;
}
