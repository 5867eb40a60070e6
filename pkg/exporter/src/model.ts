/**
 * Visual tower description, seeded toy generator, and an independent
 * reference forward pass used to cross-check the engine.
 *
 * The forward follows the same architecture contract as the engine
 * (pre-norm blocks, per-head scaled dot-product attention, exact-erf GELU,
 * final layernorm + projection of the anchor-position token) but is written
 * from scratch: float64 accumulation, float32 rounding at kernel outputs.
 */

import { Rng } from "./rng.js";

export interface Mat {
  rows: number;
  cols: number;
  data: Float32Array;
}

export function mat(rows: number, cols: number, data?: Float32Array): Mat {
  return { rows, cols, data: data ?? new Float32Array(rows * cols) };
}

export interface BlockWeights {
  ln1g: Float32Array; ln1b: Float32Array;
  wq: Mat; wk: Mat; wv: Mat; wo: Mat;
  ln2g: Float32Array; ln2b: Float32Array;
  mlpInW: Mat; mlpInB: Float32Array;
  mlpOutW: Mat; mlpOutB: Float32Array;
}

export interface VisualModel {
  imageSide: number;
  patchSide: number;
  layers: number;
  heads: number;
  width: number;
  mlpRatio: number;
  embedDim: number;
  patchEmbed: Mat;            // (width, 3 * patch^2)
  posEmbed: Mat;              // (patches + 1, width)
  clsInit: Float32Array;
  blocks: BlockWeights[];
  lnPostG: Float32Array; lnPostB: Float32Array;
  proj: Mat;                  // (embedDim, width)
}

export const TOY = {
  layers: 4, heads: 4, width: 64, embedDim: 32,
  imageSide: 32, patchSide: 8, classes: 5,
};

export function makeToyModel(seed: number): VisualModel {
  const rng = new Rng(seed);
  const { layers, heads, width, embedDim, imageSide, patchSide } = TOY;
  const scale = 1 / Math.sqrt(width);
  const patches = (imageSide / patchSide) ** 2;
  const hidden = 4 * width;
  const blocks: BlockWeights[] = [];
  for (let l = 0; l < layers; l++) {
    blocks.push({
      ln1g: ones(width), ln1b: new Float32Array(width),
      wq: mat(width, width, rng.normals(width * width, scale)),
      wk: mat(width, width, rng.normals(width * width, scale)),
      wv: mat(width, width, rng.normals(width * width, scale)),
      wo: mat(width, width, rng.normals(width * width, scale)),
      ln2g: ones(width), ln2b: new Float32Array(width),
      mlpInW: mat(width, hidden, rng.normals(width * hidden, scale)),
      mlpInB: new Float32Array(hidden),
      mlpOutW: mat(hidden, width, rng.normals(hidden * width, scale)),
      mlpOutB: new Float32Array(width),
    });
  }
  return {
    imageSide, patchSide, layers, heads, width, mlpRatio: 4, embedDim,
    patchEmbed: mat(width, 3 * patchSide * patchSide,
                    rng.normals(width * 3 * patchSide * patchSide, scale)),
    posEmbed: mat(patches + 1, width, rng.normals((patches + 1) * width, scale)),
    clsInit: rng.normals(width, scale),
    blocks,
    lnPostG: ones(width), lnPostB: new Float32Array(width),
    proj: mat(embedDim, width, rng.normals(embedDim * width, scale)),
  };
}

export function makeToyText(seed: number, classes: number, dim: number): Mat {
  const rng = new Rng(seed);
  const t = mat(classes, dim);
  for (let c = 0; c < classes; c++) {
    const row = rng.normals(dim);
    let norm = 0;
    for (let j = 0; j < dim; j++) norm += row[j] * row[j];
    norm = Math.sqrt(norm);
    for (let j = 0; j < dim; j++) t.data[c * dim + j] = Math.fround(row[j] / norm);
  }
  return t;
}

export function makeToyImage(rng: Rng, side: number): Float32Array {
  return rng.normals(3 * side * side);
}

function ones(n: number): Float32Array {
  return new Float32Array(n).fill(1);
}

// --- reference forward pass --------------------------------------------------

function erf(x: number): number {
  // Abramowitz & Stegun 7.1.26, |error| < 1.5e-7
  const sign = x < 0 ? -1 : 1;
  const ax = Math.abs(x);
  const t = 1 / (1 + 0.3275911 * ax);
  const y = 1 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t
    - 0.284496736) * t + 0.254829592) * t * Math.exp(-ax * ax);
  return sign * y;
}

function layernormRow(row: Float64Array, g: Float32Array, b: Float32Array): Float64Array {
  const n = row.length;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += row[i];
  mean /= n;
  let varSum = 0;
  for (let i = 0; i < n; i++) varSum += (row[i] - mean) ** 2;
  const inv = 1 / Math.sqrt(varSum / n + 1e-5);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround((row[i] - mean) * inv * g[i] + b[i]);
  return out;
}

/** rows x cols result of X (rows x inner) @ W (inner x cols), f32-rounded. */
function matmulRight(x: Float64Array[], w: Mat): Float64Array[] {
  const out: Float64Array[] = [];
  for (const row of x) {
    const o = new Float64Array(w.cols);
    for (let j = 0; j < w.cols; j++) {
      let acc = 0;
      for (let k = 0; k < w.rows; k++) acc += row[k] * w.data[k * w.cols + j];
      o[j] = Math.fround(acc);
    }
    out.push(o);
  }
  return out;
}

export function referenceForward(model: VisualModel, pixels: Float32Array): Float64Array {
  const { imageSide: s, patchSide: p, width, heads } = model;
  const grid = s / p;
  const n = grid * grid;
  const dh = width / heads;

  // patchify: row-major grid, each patch flattened channel-first
  let tokens: Float64Array[] = [new Float64Array(width)];
  for (let i = 0; i < width; i++) tokens[0][i] = model.clsInit[i];
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      const patch = new Float64Array(3 * p * p);
      let idx = 0;
      for (let c = 0; c < 3; c++) {
        for (let y = 0; y < p; y++) {
          for (let x = 0; x < p; x++) {
            patch[idx++] = pixels[c * s * s + (gy * p + y) * s + (gx * p + x)];
          }
        }
      }
      const tok = new Float64Array(width);
      for (let d = 0; d < width; d++) {
        let acc = 0;
        for (let k = 0; k < patch.length; k++) {
          acc += patch[k] * model.patchEmbed.data[d * patch.length + k];
        }
        tok[d] = Math.fround(acc);
      }
      tokens.push(tok);
    }
  }
  for (let i = 0; i <= n; i++) {
    for (let d = 0; d < width; d++) {
      tokens[i][d] = Math.fround(tokens[i][d] + model.posEmbed.data[i * width + d]);
    }
  }

  for (const blk of model.blocks) {
    const xn = tokens.map((row) => layernormRow(row, blk.ln1g, blk.ln1b));
    const q = matmulRight(xn, blk.wq);
    const k = matmulRight(xn, blk.wk);
    const v = matmulRight(xn, blk.wv);
    const ctx = tokens.map(() => new Float64Array(width));
    for (let h = 0; h < heads; h++) {
      const off = h * dh;
      for (let i = 0; i < tokens.length; i++) {
        const logits = new Float64Array(tokens.length);
        for (let j = 0; j < tokens.length; j++) {
          let acc = 0;
          for (let d = 0; d < dh; d++) acc += q[i][off + d] * k[j][off + d];
          logits[j] = Math.fround(Math.fround(acc) / Math.fround(Math.sqrt(dh)));
        }
        let mx = -Infinity;
        for (const l of logits) mx = Math.max(mx, l);
        let z = 0;
        const e = new Float64Array(tokens.length);
        for (let j = 0; j < tokens.length; j++) {
          e[j] = Math.exp(logits[j] - mx);
          z += e[j];
        }
        for (let j = 0; j < tokens.length; j++) {
          const w = Math.fround(e[j] / z);
          for (let d = 0; d < dh; d++) ctx[i][off + d] += w * v[j][off + d];
        }
        for (let d = 0; d < dh; d++) ctx[i][off + d] = Math.fround(ctx[i][off + d]);
      }
    }
    const attnOut = matmulRight(ctx, blk.wo);
    tokens = tokens.map((row, i) => {
      const out = new Float64Array(width);
      for (let d = 0; d < width; d++) out[d] = Math.fround(row[d] + attnOut[i][d]);
      return out;
    });

    const xn2 = tokens.map((row) => layernormRow(row, blk.ln2g, blk.ln2b));
    const hidden = matmulRight(xn2, blk.mlpInW);
    for (const row of hidden) {
      for (let j = 0; j < row.length; j++) {
        const a = Math.fround(row[j] + blk.mlpInB[j]);
        row[j] = Math.fround(a * 0.5 * (1 + erf(a / Math.SQRT2)));
      }
    }
    const mlpOut = matmulRight(hidden, blk.mlpOutW);
    tokens = tokens.map((row, i) => {
      const out = new Float64Array(width);
      for (let d = 0; d < width; d++) {
        out[d] = Math.fround(row[d] + Math.fround(mlpOut[i][d] + blk.mlpOutB[d]));
      }
      return out;
    });
  }

  const final = layernormRow(tokens[0], model.lnPostG, model.lnPostB);
  const z = new Float64Array(model.embedDim);
  for (let d = 0; d < model.embedDim; d++) {
    let acc = 0;
    for (let k = 0; k < width; k++) acc += model.proj.data[d * width + k] * final[k];
    z[d] = Math.fround(acc);
  }
  return z;
}

export function zeroShotProbs(z: Float64Array, text: Mat, tau: number): number[] {
  const sims: number[] = [];
  let zn = 0;
  for (const v of z) zn += v * v;
  zn = Math.sqrt(zn);
  for (let c = 0; c < text.rows; c++) {
    let dot = 0;
    let tn = 0;
    for (let d = 0; d < text.cols; d++) {
      dot += z[d] * text.data[c * text.cols + d];
      tn += text.data[c * text.cols + d] ** 2;
    }
    sims.push(Math.max(-1, Math.min(1, dot / (zn * Math.sqrt(tn)))));
  }
  const mx = Math.max(...sims.map((s) => s / tau));
  const e = sims.map((s) => Math.exp(s / tau - mx));
  const sum = e.reduce((a, b) => a + b, 0);
  return e.map((v) => v / sum);
}
