/**
 * Export jobs: toy bundles, text embeddings, datasets, reference logits.
 */

import { readFileSync, readdirSync, statSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { ArchiveWriter, TensorArchive } from "./archive.js";
import { loadModel, saveModel } from "./convert.js";
import { DEFAULT_MEAN, DEFAULT_STD, decodePpm, preprocess } from "./images.js";
import { TOY, Mat, makeToyImage, makeToyModel, makeToyText, mat,
         referenceForward, zeroShotProbs } from "./model.js";
import { Rng } from "./rng.js";

export function addTextEntries(w: ArchiveWriter, classnames: string[],
                               embeddings: Mat): void {
  if (classnames.length < 2) throw new Error("need at least 2 classes");
  if (new Set(classnames).size !== classnames.length) {
    throw new Error("duplicate classnames");
  }
  if (embeddings.rows !== classnames.length) {
    throw new Error(`${embeddings.rows} embedding rows for ${classnames.length} classnames`);
  }
  const out = new Float32Array(embeddings.data.length);
  for (let c = 0; c < embeddings.rows; c++) {
    let norm = 0;
    for (let j = 0; j < embeddings.cols; j++) {
      norm += embeddings.data[c * embeddings.cols + j] ** 2;
    }
    norm = Math.sqrt(norm);
    if (norm === 0) throw new Error(`class ${classnames[c]}: zero embedding`);
    for (let j = 0; j < embeddings.cols; j++) {
      out[c * embeddings.cols + j] =
        Math.fround(embeddings.data[c * embeddings.cols + j] / norm);
    }
  }
  w.addF32("text/embeddings", out, [embeddings.rows, embeddings.cols]);
  w.addUtf8("text/classnames", classnames);
}

export function addDatasetEntries(w: ArchiveWriter, side: number,
                                  samples: { pixels: Float32Array; label: number }[]): void {
  if (samples.length === 0) throw new Error("dataset must contain at least one sample");
  w.addI64("meta/count", samples.length);
  w.addI64("meta/image_side", side);
  samples.forEach((s, i) => {
    if (s.pixels.length !== 3 * side * side) {
      throw new Error(`sample ${i}: expected ${3 * side * side} values`);
    }
    w.addF32(`sample/${i}/pixels`, s.pixels, [3, side, side]);
    w.addI64(`sample/${i}/label`, s.label);
  });
}

/** One archive with a seeded toy model, class embeddings, and a stream. */
export function exportToy(out: string, seed: number, sampleCount: number): void {
  const w = new ArchiveWriter();
  const model = makeToyModel(seed);
  saveModel(w, model);
  const text = makeToyText(seed + 1, TOY.classes, TOY.embedDim);
  const classnames = [...Array(TOY.classes)].map((_, c) => `class-${c}`);
  addTextEntries(w, classnames, text);
  const rng = new Rng(seed + 2);
  const samples = [...Array(sampleCount)].map(() => ({
    pixels: makeToyImage(rng, TOY.imageSide),
    label: rng.int(TOY.classes),
  }));
  addDatasetEntries(w, TOY.imageSide, samples);
  w.write(out);
}

export interface TextSource {
  classnames: string[];
  embeddings: number[][];
}

export function exportText(sourcePath: string, out: string): void {
  const spec: TextSource = JSON.parse(readFileSync(sourcePath, "utf-8"));
  const rows = spec.embeddings.length;
  const cols = rows ? spec.embeddings[0].length : 0;
  const m = mat(rows, cols);
  spec.embeddings.forEach((row, c) => {
    if (row.length !== cols) throw new Error(`embedding row ${c}: ragged width`);
    row.forEach((v, j) => { m.data[c * cols + j] = Math.fround(v); });
  });
  const w = new ArchiveWriter();
  addTextEntries(w, spec.classnames, m);
  w.write(out);
}

/** Directory of .ppm files; class subdirectories give labels, flat files
 * are unlabeled (-1). Ordering is lexicographic for determinism. */
export function exportData(dir: string, side: number, out: string,
                           mean = DEFAULT_MEAN, std = DEFAULT_STD): string[] {
  const entries = readdirSync(dir).sort();
  const classDirs = entries.filter((e) => statSync(join(dir, e)).isDirectory());
  const files: { path: string; label: number }[] = [];
  if (classDirs.length) {
    classDirs.forEach((cls, label) => {
      for (const f of readdirSync(join(dir, cls)).sort()) {
        if (f.endsWith(".ppm")) files.push({ path: join(dir, cls, f), label });
      }
    });
  } else {
    for (const f of entries) {
      if (f.endsWith(".ppm")) files.push({ path: join(dir, f), label: -1 });
    }
  }
  if (!files.length) throw new Error(`no .ppm files under ${dir}`);
  const w = new ArchiveWriter();
  addDatasetEntries(w, side, files.map((f) => ({
    pixels: preprocess(decodePpm(f.path), side, mean, std),
    label: f.label,
  })));
  w.write(out);
  return classDirs;
}

/** Zero-shot probabilities from this package's own forward pass. */
export function referenceLogits(archivePath: string, sampleCount: number,
                                tau: number, out: string): void {
  const ar = new TensorArchive(archivePath);
  const model = loadModel(ar);
  const text = ar.readF32("text/embeddings");
  const textMat = mat(text.shape[0], text.shape[1], text.data);
  const total = ar.readScalar("meta/count");
  if (sampleCount > total) {
    throw new Error(`asked for ${sampleCount} samples, archive has ${total}`);
  }
  const probs: number[][] = [];
  const preds: number[] = [];
  for (let i = 0; i < sampleCount; i++) {
    const { data } = ar.readF32(`sample/${i}/pixels`);
    const z = referenceForward(model, data);
    const p = zeroShotProbs(z, textMat, tau);
    probs.push(p);
    preds.push(p.indexOf(Math.max(...p)));
  }
  const report = { tau, count: sampleCount, probs, preds };
  writeFileSync(out, JSON.stringify(report, null, 1) + "\n");
}
