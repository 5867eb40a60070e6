/**
 * TCA1 tensor container: the byte-exact interchange format with the engine.
 *
 * Layout: 4-byte magic "TCA1", 8-byte little-endian manifest length, UTF-8
 * JSON manifest mapping entry name -> {dtype, shape, offset, length}, then
 * raw little-endian row-major buffers at absolute 64-byte-aligned offsets.
 * Dtypes: f32, i64, utf8 (newline-separated lines). Scalars use shape [1].
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = Buffer.from("TCA1", "ascii");
const ALIGN = 64;

export type Dtype = "f32" | "i64" | "utf8";

export interface ManifestEntry {
  dtype: Dtype;
  shape: number[];
  offset: number;
  length: number;
}

interface Pending {
  dtype: Dtype;
  shape: number[];
  raw: Buffer;
}

function alignUp(n: number): number {
  return Math.ceil(n / ALIGN) * ALIGN;
}

export class ArchiveWriter {
  private entries = new Map<string, Pending>();

  addF32(name: string, data: Float32Array, shape: number[]): void {
    const count = shape.reduce((a, b) => a * b, 1);
    if (count !== data.length) {
      throw new Error(`${name}: shape [${shape}] does not match ${data.length} values`);
    }
    const raw = Buffer.alloc(4 * data.length);
    for (let i = 0; i < data.length; i++) raw.writeFloatLE(data[i], 4 * i);
    this.add(name, "f32", shape, raw);
  }

  addI64(name: string, value: number | number[]): void {
    const values = Array.isArray(value) ? value : [value];
    const raw = Buffer.alloc(8 * values.length);
    values.forEach((v, i) => raw.writeBigInt64LE(BigInt(Math.trunc(v)), 8 * i));
    this.add(name, "i64", [values.length], raw);
  }

  addUtf8(name: string, lines: string[]): void {
    for (const line of lines) {
      if (line.includes("\n")) throw new Error(`${name}: embedded newline in ${JSON.stringify(line)}`);
    }
    this.add(name, "utf8", [lines.length], Buffer.from(lines.join("\n"), "utf-8"));
  }

  private add(name: string, dtype: Dtype, shape: number[], raw: Buffer): void {
    if (this.entries.has(name)) throw new Error(`duplicate archive entry ${name}`);
    this.entries.set(name, { dtype, shape, raw });
  }

  toBuffer(): Buffer {
    const names = [...this.entries.keys()].sort();
    // offsets appear inside the manifest and move with its length; iterate
    // to a fixed point (digit growth only ever lengthens the JSON)
    let manifestLen = 0;
    let manifest: Record<string, ManifestEntry> = {};
    for (let pass = 0; pass < 8; pass++) {
      let offset = alignUp(4 + 8 + manifestLen);
      manifest = {};
      for (const name of names) {
        const ent = this.entries.get(name)!;
        manifest[name] = { dtype: ent.dtype, shape: ent.shape, offset, length: ent.raw.length };
        offset = alignUp(offset + ent.raw.length);
      }
      const blob = Buffer.from(JSON.stringify(manifest), "utf-8");
      if (blob.length === manifestLen) break;
      manifestLen = blob.length;
      if (pass === 7) throw new Error("manifest layout did not converge");
    }
    const blob = Buffer.from(JSON.stringify(manifest), "utf-8");
    const last = names.at(-1);
    const total = last
      ? alignUp(manifest[last].offset + manifest[last].length)
      : alignUp(4 + 8 + blob.length);
    const out = Buffer.alloc(total);
    MAGIC.copy(out, 0);
    out.writeBigUInt64LE(BigInt(blob.length), 4);
    blob.copy(out, 12);
    for (const name of names) {
      this.entries.get(name)!.raw.copy(out, manifest[name].offset);
    }
    return out;
  }

  write(path: string): void {
    writeFileSync(path, this.toBuffer());
  }
}

export class TensorArchive {
  readonly manifest: Record<string, ManifestEntry>;
  private data: Buffer;

  constructor(path: string) {
    this.data = readFileSync(path);
    if (this.data.length < 12 || !this.data.subarray(0, 4).equals(MAGIC)) {
      throw new Error(`${path}: not a TCA1 archive`);
    }
    const mlen = Number(this.data.readBigUInt64LE(4));
    this.manifest = JSON.parse(this.data.subarray(12, 12 + mlen).toString("utf-8"));
  }

  names(): string[] {
    return Object.keys(this.manifest).sort();
  }

  has(name: string): boolean {
    return name in this.manifest;
  }

  private raw(name: string, dtype: Dtype): { ent: ManifestEntry; buf: Buffer } {
    const ent = this.manifest[name];
    if (!ent) throw new Error(`missing archive entry ${name}`);
    if (ent.dtype !== dtype) throw new Error(`${name}: dtype ${ent.dtype}, expected ${dtype}`);
    return { ent, buf: this.data.subarray(ent.offset, ent.offset + ent.length) };
  }

  readF32(name: string): { shape: number[]; data: Float32Array } {
    const { ent, buf } = this.raw(name, "f32");
    const data = new Float32Array(ent.length / 4);
    for (let i = 0; i < data.length; i++) data[i] = buf.readFloatLE(4 * i);
    return { shape: ent.shape, data };
  }

  readI64(name: string): number[] {
    const { ent, buf } = this.raw(name, "i64");
    const out: number[] = [];
    for (let i = 0; i < ent.length / 8; i++) out.push(Number(buf.readBigInt64LE(8 * i)));
    return out;
  }

  readScalar(name: string): number {
    const values = this.readI64(name);
    if (values.length !== 1) throw new Error(`${name} is not a scalar`);
    return values[0];
  }

  readUtf8(name: string): string[] {
    const { buf } = this.raw(name, "utf8");
    return buf.length ? buf.toString("utf-8").split("\n") : [];
  }
}
