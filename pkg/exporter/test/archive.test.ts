import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { ArchiveWriter, TensorArchive } from "../src/archive.js";

const dir = mkdtempSync(join(tmpdir(), "tca-archive-"));

describe("archive round trip", () => {
  it("reproduces f32, i64, and utf8 entries bitwise", () => {
    const w = new ArchiveWriter();
    const values = new Float32Array([1.5, -2.25, 3.125, 0.1, -0.0001, 9e8]);
    w.addF32("a/matrix", values, [2, 3]);
    w.addI64("meta/count", 7);
    w.addI64("meta/list", [-1, 0, 42]);
    w.addUtf8("names", ["cat", "dog", "plane"]);
    const path = join(dir, "roundtrip.tca");
    w.write(path);

    const ar = new TensorArchive(path);
    const m = ar.readF32("a/matrix");
    expect(m.shape).toEqual([2, 3]);
    expect([...m.data]).toEqual([...values]);
    expect(ar.readScalar("meta/count")).toBe(7);
    expect(ar.readI64("meta/list")).toEqual([-1, 0, 42]);
    expect(ar.readUtf8("names")).toEqual(["cat", "dog", "plane"]);
  });

  it("aligns every entry to 64 bytes", () => {
    const w = new ArchiveWriter();
    w.addF32("x", new Float32Array([1]), [1]);
    w.addF32("y", new Float32Array([2, 3]), [2]);
    const path = join(dir, "aligned.tca");
    w.write(path);
    const ar = new TensorArchive(path);
    for (const name of ar.names()) {
      expect(ar.manifest[name].offset % 64).toBe(0);
    }
  });

  it("rejects duplicate entries and embedded newlines", () => {
    const w = new ArchiveWriter();
    w.addI64("x", 1);
    expect(() => w.addI64("x", 2)).toThrow(/duplicate/);
    expect(() => w.addUtf8("names", ["bad\nname"])).toThrow(/newline/);
  });

  it("rejects junk files", () => {
    const path = join(dir, "junk.tca");
    writeFileSync(path, Buffer.from("NOPE" + "\0".repeat(64), "ascii"));
    expect(() => new TensorArchive(path)).toThrow(/not a TCA1 archive/);
  });

  it("reports shape mismatches at write time", () => {
    const w = new ArchiveWriter();
    expect(() => w.addF32("bad", new Float32Array(5), [2, 3])).toThrow(/shape/);
  });
});
