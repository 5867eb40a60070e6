/**
 * Cross-ecosystem checks against the Python engine, driven only through its
 * command line and the shared archive format.
 */

import { execFileSync } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { TensorArchive } from "../src/archive.js";
import { exportToy, referenceLogits } from "../src/export.js";

const dir = mkdtempSync(join(tmpdir(), "tca-cross-"));
const toy = join(dir, "toy.tca");
exportToy(toy, 0, 32);

function engine(args: string[]): { code: number; stdout: string; stderr: string } {
  try {
    const stdout = execFileSync("python3", ["-m", "tokadapt.cli", ...args],
                                { encoding: "utf-8" });
    return { code: 0, stdout, stderr: "" };
  } catch (err: any) {
    return { code: err.status ?? 1, stdout: err.stdout ?? "", stderr: err.stderr ?? "" };
  }
}

describe("engine accepts exported archives", () => {
  it("inspect reports zero violations", () => {
    const res = engine(["inspect", toy]);
    expect(res.code).toBe(0);
    expect(res.stdout).toContain("0 violations");
  });

  it("engine re-reads arrays bitwise identically", () => {
    const ours = new TensorArchive(toy).readF32("visual/patch_embed");
    const thisSide = createHash("sha256")
      .update(Buffer.from(new Float32Array(ours.data).buffer))
      .digest("hex");
    const py = [
      "import hashlib, sys",
      "from tokadapt import TensorArchive",
      `arr = TensorArchive(${JSON.stringify(toy)}).read_f32('visual/patch_embed')`,
      "print(hashlib.sha256(arr.tobytes()).hexdigest())",
    ].join("\n");
    const theirs = execFileSync("python3", ["-c", py], { encoding: "utf-8" }).trim();
    expect(theirs).toBe(thisSide);
  });
});

describe("cross-implementation oracle", () => {
  it("vanilla engine probabilities match reference logits within 1e-3", () => {
    const ref = join(dir, "ref.json");
    referenceLogits(toy, 32, 0.01, ref);
    const out = join(dir, "engine-run");
    const res = engine(["run", "--model", toy, "--text", toy, "--data", toy,
                        "--mode", "vanilla", "--out", out]);
    expect(res.code).toBe(0);

    const reference = JSON.parse(readFileSync(ref, "utf-8"));
    const lines = readFileSync(out + ".jsonl", "utf-8").trim().split("\n");
    expect(lines).toHaveLength(32);
    let worst = 0;
    lines.forEach((line, i) => {
      const record = JSON.parse(line);
      const probs: number[] = record.probs;
      reference.probs[i].forEach((p: number, c: number) => {
        worst = Math.max(worst, Math.abs(p - probs[c]));
      });
      expect(record.pred).toBe(reference.preds[i]);
    });
    expect(worst).toBeLessThan(1e-3);
  }, 120_000);
});
