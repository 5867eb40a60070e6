/**
 * Minimal safetensors reader: 8-byte little-endian header length, JSON
 * header mapping tensor name -> {dtype, shape, data_offsets}, raw payload.
 * F32, F16, and BF16 tensors are converted to float32.
 */

import { readFileSync } from "node:fs";

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

function halfToFloat(bits: number): number {
  const sign = (bits & 0x8000) >> 15;
  const exp = (bits & 0x7c00) >> 10;
  const frac = bits & 0x03ff;
  let value: number;
  if (exp === 0) value = frac * 2 ** -24;
  else if (exp === 0x1f) value = frac ? NaN : Infinity;
  else value = (1 + frac / 1024) * 2 ** (exp - 15);
  return sign ? -value : value;
}

export class SafeTensors {
  private header: Record<string, HeaderEntry>;
  private payload: Buffer;

  constructor(path: string) {
    const buf = readFileSync(path);
    const hlen = Number(buf.readBigUInt64LE(0));
    const parsed = JSON.parse(buf.subarray(8, 8 + hlen).toString("utf-8"));
    delete parsed.__metadata__;
    this.header = parsed;
    this.payload = buf.subarray(8 + hlen);
  }

  names(): string[] {
    return Object.keys(this.header);
  }

  has(name: string): boolean {
    return name in this.header;
  }

  read(name: string): Tensor {
    const ent = this.header[name];
    if (!ent) throw new Error(`missing tensor ${name}`);
    const [start, end] = ent.data_offsets;
    const raw = this.payload.subarray(start, end);
    const count = ent.shape.reduce((a, b) => a * b, 1);
    const data = new Float32Array(count);
    switch (ent.dtype) {
      case "F32":
        for (let i = 0; i < count; i++) data[i] = raw.readFloatLE(4 * i);
        break;
      case "F16":
        for (let i = 0; i < count; i++) data[i] = Math.fround(halfToFloat(raw.readUInt16LE(2 * i)));
        break;
      case "BF16":
        for (let i = 0; i < count; i++) {
          const bits = raw.readUInt16LE(2 * i) << 16;
          const view = new DataView(new ArrayBuffer(4));
          view.setUint32(0, bits);
          data[i] = view.getFloat32(0);
        }
        break;
      default:
        throw new Error(`${name}: unsupported safetensors dtype ${ent.dtype}`);
    }
    return { shape: ent.shape, data };
  }
}
