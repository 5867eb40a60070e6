import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { ArchiveWriter, TensorArchive } from "../src/archive.js";
import { addTextEntries, exportData, exportToy } from "../src/export.js";
import { decodePpm, preprocess } from "../src/images.js";
import { mat } from "../src/model.js";

const dir = mkdtempSync(join(tmpdir(), "tca-export-"));

describe("toy export", () => {
  it("is deterministic for a fixed seed", () => {
    const a = join(dir, "toy-a.tca");
    const b = join(dir, "toy-b.tca");
    exportToy(a, 7, 5);
    exportToy(b, 7, 5);
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
    exportToy(b, 8, 5);
    expect(readFileSync(a).equals(readFileSync(b))).toBe(false);
  });

  it("writes a loadable bundle", () => {
    const path = join(dir, "toy.tca");
    exportToy(path, 0, 4);
    const ar = new TensorArchive(path);
    expect(ar.readScalar("meta/count")).toBe(4);
    expect(ar.readScalar("visual/meta/heads")).toBe(4);
    expect(ar.readF32("visual/pos_embed").shape).toEqual([17, 64]);
    expect(ar.readUtf8("text/classnames")).toHaveLength(5);
  });
});

describe("text embeddings", () => {
  it("normalizes rows to unit length", () => {
    const w = new ArchiveWriter();
    const m = mat(3, 4, new Float32Array([1, 2, 3, 4, -5, 0, 0, 0, 0.1, 0.1, 0.1, 0.1]));
    addTextEntries(w, ["a", "b", "c"], m);
    const path = join(dir, "text.tca");
    w.write(path);
    const rows = new TensorArchive(path).readF32("text/embeddings");
    for (let c = 0; c < 3; c++) {
      let norm = 0;
      for (let j = 0; j < 4; j++) norm += rows.data[c * 4 + j] ** 2;
      expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-5);
    }
  });

  it("rejects duplicates, tiny class sets, and count mismatches", () => {
    const m = mat(2, 2, new Float32Array([1, 0, 0, 1]));
    expect(() => addTextEntries(new ArchiveWriter(), ["a", "a"], m)).toThrow(/duplicate/);
    expect(() => addTextEntries(new ArchiveWriter(), ["a"], mat(1, 2, new Float32Array([1, 0]))))
      .toThrow(/at least 2/);
    expect(() => addTextEntries(new ArchiveWriter(), ["a", "b", "c"], m)).toThrow(/rows/);
  });
});

function writePpm(path: string, width: number, height: number,
                  pixel: (x: number, y: number) => [number, number, number]): void {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const body = Buffer.alloc(3 * width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      body[3 * (y * width + x)] = r;
      body[3 * (y * width + x) + 1] = g;
      body[3 * (y * width + x) + 2] = b;
    }
  }
  writeFileSync(path, Buffer.concat([header, body]));
}

describe("image preprocessing", () => {
  it("decodes PPM into channel-first [0,1]", () => {
    const path = join(dir, "img.ppm");
    writePpm(path, 4, 2, (x, y) => [255, 0, x === 0 && y === 0 ? 51 : 0]);
    const img = decodePpm(path);
    expect(img.width).toBe(4);
    expect(img.height).toBe(2);
    expect(img.data[0]).toBeCloseTo(1.0);              // R channel
    expect(img.data[8]).toBeCloseTo(0.0);              // G channel
    expect(img.data[16]).toBeCloseTo(0.2, 5);          // B channel, 51/255
  });

  it("resizes, crops, and normalizes to the requested side", () => {
    const path = join(dir, "big.ppm");
    writePpm(path, 20, 12, () => [128, 128, 128]);
    const out = preprocess(decodePpm(path), 8);
    expect(out.length).toBe(3 * 8 * 8);
    // a constant gray image stays constant per channel after normalization
    for (let c = 0; c < 3; c++) {
      const first = out[c * 64];
      for (let i = 0; i < 64; i++) expect(out[c * 64 + i]).toBeCloseTo(first, 6);
    }
  });
});

describe("dataset export", () => {
  it("stores unlabeled flat directories with label -1, sorted", () => {
    const flat = join(dir, "flat");
    mkdirSync(flat);
    for (const name of ["c.ppm", "a.ppm", "b.ppm"]) {
      writePpm(join(flat, name), 10, 10,
               () => [name.charCodeAt(0), 0, 0]);
    }
    const out = join(dir, "flat.tca");
    exportData(flat, 8, out);
    const ar = new TensorArchive(out);
    expect(ar.readScalar("meta/count")).toBe(3);
    expect(ar.readScalar("meta/image_side")).toBe(8);
    const reds = [0, 1, 2].map((i) => ar.readF32(`sample/${i}/pixels`).data[0]);
    expect(reds[0]).toBeLessThan(reds[1]);             // a < b < c lexicographic
    expect(reds[1]).toBeLessThan(reds[2]);
    for (let i = 0; i < 3; i++) {
      expect(ar.readScalar(`sample/${i}/label`)).toBe(-1);
    }
  });

  it("maps class subdirectories to sorted label ids", () => {
    const root = join(dir, "labeled");
    for (const [cls, n] of [["bee", 2], ["ant", 1]] as const) {
      mkdirSync(join(root, cls), { recursive: true });
      for (let i = 0; i < n; i++) {
        writePpm(join(root, cls, `${i}.ppm`), 8, 8, () => [0, 255, 0]);
      }
    }
    const out = join(dir, "labeled.tca");
    const classes = exportData(root, 8, out);
    expect(classes).toEqual(["ant", "bee"]);
    const ar = new TensorArchive(out);
    expect(ar.readScalar("meta/count")).toBe(3);
    expect(ar.readScalar("sample/0/label")).toBe(0);   // ant first
    expect(ar.readScalar("sample/1/label")).toBe(1);
    expect(ar.readScalar("sample/2/label")).toBe(1);
  });

  it("refuses empty directories", () => {
    const empty = join(dir, "empty");
    mkdirSync(empty);
    expect(() => exportData(empty, 8, join(dir, "never.tca"))).toThrow(/no .ppm/);
  });
});
