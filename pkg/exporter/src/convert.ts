/**
 * Weight conversion into the archive naming scheme, plus the loader used by
 * the reference forward pass. Torch-style linear weights are (out, in) and
 * applied as x @ W^T; the engine right-multiplies (in, out) matrices, so
 * every linear weight is transposed on the way through.
 */

import { ArchiveWriter, TensorArchive } from "./archive.js";
import { BlockWeights, Mat, VisualModel, mat } from "./model.js";
import { SafeTensors, Tensor } from "./safetensors.js";

export function transpose(t: Tensor): Tensor {
  const [r, c] = t.shape;
  const out = new Float32Array(r * c);
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < c; j++) out[j * r + i] = t.data[i * c + j];
  }
  return { shape: [c, r], data: out };
}

function sliceRows(t: Tensor, start: number, end: number): Tensor {
  const [, cols] = t.shape;
  return { shape: [end - start, cols], data: t.data.slice(start * cols, end * cols) };
}

export function saveModel(w: ArchiveWriter, model: VisualModel): void {
  const put = (name: string, m: Mat) => w.addF32(name, m.data, [m.rows, m.cols]);
  put("visual/patch_embed", model.patchEmbed);
  put("visual/pos_embed", model.posEmbed);
  w.addF32("visual/cls", model.clsInit, [model.width]);
  w.addI64("visual/meta/heads", model.heads);
  model.blocks.forEach((blk, i) => {
    const pre = `visual/blocks/${i}/`;
    w.addF32(pre + "ln1.g", blk.ln1g, [model.width]);
    w.addF32(pre + "ln1.b", blk.ln1b, [model.width]);
    put(pre + "wq", blk.wq);
    put(pre + "wk", blk.wk);
    put(pre + "wv", blk.wv);
    put(pre + "wo", blk.wo);
    w.addF32(pre + "ln2.g", blk.ln2g, [model.width]);
    w.addF32(pre + "ln2.b", blk.ln2b, [model.width]);
    put(pre + "mlp_in.w", blk.mlpInW);
    w.addF32(pre + "mlp_in.b", blk.mlpInB, [blk.mlpInB.length]);
    put(pre + "mlp_out.w", blk.mlpOutW);
    w.addF32(pre + "mlp_out.b", blk.mlpOutB, [model.width]);
  });
  w.addF32("visual/ln_post.g", model.lnPostG, [model.width]);
  w.addF32("visual/ln_post.b", model.lnPostB, [model.width]);
  put("visual/proj", model.proj);
}

export function loadModel(ar: TensorArchive): VisualModel {
  const readMat = (name: string): Mat => {
    const { shape, data } = ar.readF32(name);
    return mat(shape[0], shape[1], data);
  };
  const patchEmbed = readMat("visual/patch_embed");
  const posEmbed = readMat("visual/pos_embed");
  const width = patchEmbed.rows;
  const patchSide = Math.round(Math.sqrt(patchEmbed.cols / 3));
  const grid = Math.round(Math.sqrt(posEmbed.rows - 1));
  let layers = 0;
  while (ar.has(`visual/blocks/${layers}/wq`)) layers++;
  const blocks: BlockWeights[] = [];
  for (let i = 0; i < layers; i++) {
    const pre = `visual/blocks/${i}/`;
    blocks.push({
      ln1g: ar.readF32(pre + "ln1.g").data, ln1b: ar.readF32(pre + "ln1.b").data,
      wq: readMat(pre + "wq"), wk: readMat(pre + "wk"),
      wv: readMat(pre + "wv"), wo: readMat(pre + "wo"),
      ln2g: ar.readF32(pre + "ln2.g").data, ln2b: ar.readF32(pre + "ln2.b").data,
      mlpInW: readMat(pre + "mlp_in.w"), mlpInB: ar.readF32(pre + "mlp_in.b").data,
      mlpOutW: readMat(pre + "mlp_out.w"), mlpOutB: ar.readF32(pre + "mlp_out.b").data,
    });
  }
  const proj = readMat("visual/proj");
  return {
    imageSide: grid * patchSide, patchSide, layers,
    heads: ar.readScalar("visual/meta/heads"), width,
    mlpRatio: blocks[0].mlpInW.cols / width, embedDim: proj.rows,
    patchEmbed, posEmbed, clsInit: ar.readF32("visual/cls").data,
    blocks, lnPostG: ar.readF32("visual/ln_post.g").data,
    lnPostB: ar.readF32("visual/ln_post.b").data, proj,
  };
}

const BLOCK_SUFFIXES = ["ln1.g", "ln1.b", "wq", "wk", "wv", "wo", "ln2.g",
                        "ln2.b", "mlp_in.w", "mlp_in.b", "mlp_out.w", "mlp_out.b"];

/** Copy tensors already named per the archive scheme. */
export function convertPlain(w: ArchiveWriter, st: SafeTensors, heads: number): void {
  const missing: string[] = [];
  const need = ["visual/patch_embed", "visual/pos_embed", "visual/cls",
                "visual/ln_post.g", "visual/ln_post.b", "visual/proj"];
  let layers = 0;
  while (st.has(`visual/blocks/${layers}/wq`)) layers++;
  if (layers === 0) missing.push("visual/blocks/0/wq");
  for (let i = 0; i < layers; i++) {
    need.push(...BLOCK_SUFFIXES.map((s) => `visual/blocks/${i}/${s}`));
  }
  for (const name of need) {
    if (!st.has(name)) missing.push(name);
  }
  if (missing.length) throw new Error(`missing tensors: ${missing.join(", ")}`);
  for (const name of need) {
    const t = st.read(name);
    w.addF32(name, t.data, t.shape);
  }
  w.addI64("visual/meta/heads", heads);
}

/** Map a CLIP visual tower state dict into the archive scheme.
 *
 * The archive schema carries no pre-transformer layernorm and no attention
 * biases, so those tensors are dropped (reported on stderr); the export is
 * an approximation of the source tower to that extent.
 */
export function convertClip(w: ArchiveWriter, st: SafeTensors, heads: number): string[] {
  const missing: string[] = [];
  const grab = (name: string): Tensor => {
    if (!st.has(name)) {
      missing.push(name);
      return { shape: [0], data: new Float32Array(0) };
    }
    return st.read(name);
  };

  const conv = grab("visual.conv1.weight");          // (width, 3, p, p)
  const cls = grab("visual.class_embedding");
  const pos = grab("visual.positional_embedding");
  let layers = 0;
  while (st.has(`visual.transformer.resblocks.${layers}.ln_1.weight`)) layers++;
  if (layers === 0) missing.push("visual.transformer.resblocks.0.ln_1.weight");

  const blockTensors: Record<string, Tensor>[] = [];
  for (let i = 0; i < layers; i++) {
    const pre = `visual.transformer.resblocks.${i}.`;
    blockTensors.push({
      ln1w: grab(pre + "ln_1.weight"), ln1b: grab(pre + "ln_1.bias"),
      inProj: grab(pre + "attn.in_proj_weight"),
      outProj: grab(pre + "attn.out_proj.weight"),
      ln2w: grab(pre + "ln_2.weight"), ln2b: grab(pre + "ln_2.bias"),
      fcW: grab(pre + "mlp.c_fc.weight"), fcB: grab(pre + "mlp.c_fc.bias"),
      projW: grab(pre + "mlp.c_proj.weight"), projB: grab(pre + "mlp.c_proj.bias"),
    });
  }
  const lnPostW = grab("visual.ln_post.weight");
  const lnPostB = grab("visual.ln_post.bias");
  const proj = grab("visual.proj");                  // (width, embed)
  if (missing.length) throw new Error(`missing tensors: ${missing.join(", ")}`);

  const width = conv.shape[0];
  w.addF32("visual/patch_embed", conv.data,
           [width, conv.shape[1] * conv.shape[2] * conv.shape[3]]);
  w.addF32("visual/pos_embed", pos.data, pos.shape);
  w.addF32("visual/cls", cls.data, cls.shape);
  w.addI64("visual/meta/heads", heads);
  blockTensors.forEach((t, i) => {
    const pre = `visual/blocks/${i}/`;
    const qT = transpose(sliceRows(t.inProj, 0, width));
    const kT = transpose(sliceRows(t.inProj, width, 2 * width));
    const vT = transpose(sliceRows(t.inProj, 2 * width, 3 * width));
    w.addF32(pre + "ln1.g", t.ln1w.data, t.ln1w.shape);
    w.addF32(pre + "ln1.b", t.ln1b.data, t.ln1b.shape);
    w.addF32(pre + "wq", qT.data, qT.shape);
    w.addF32(pre + "wk", kT.data, kT.shape);
    w.addF32(pre + "wv", vT.data, vT.shape);
    const oT = transpose(t.outProj);
    w.addF32(pre + "wo", oT.data, oT.shape);
    w.addF32(pre + "ln2.g", t.ln2w.data, t.ln2w.shape);
    w.addF32(pre + "ln2.b", t.ln2b.data, t.ln2b.shape);
    const fcT = transpose(t.fcW);
    w.addF32(pre + "mlp_in.w", fcT.data, fcT.shape);
    w.addF32(pre + "mlp_in.b", t.fcB.data, t.fcB.shape);
    const prT = transpose(t.projW);
    w.addF32(pre + "mlp_out.w", prT.data, prT.shape);
    w.addF32(pre + "mlp_out.b", t.projB.data, t.projB.shape);
  });
  w.addF32("visual/ln_post.g", lnPostW.data, lnPostW.shape);
  w.addF32("visual/ln_post.b", lnPostB.data, lnPostB.shape);
  const projT = transpose(proj);
  w.addF32("visual/proj", projT.data, projT.shape);

  const dropped = ["visual.ln_pre.weight", "visual.ln_pre.bias"];
  for (let i = 0; i < layers; i++) {
    dropped.push(`visual.transformer.resblocks.${i}.attn.in_proj_bias`,
                 `visual.transformer.resblocks.${i}.attn.out_proj.bias`);
  }
  return dropped.filter((name) => st.has(name));
}
