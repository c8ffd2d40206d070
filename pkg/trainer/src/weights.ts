/**
 * NLW1 weight files, byte-compatible with the codec's loader.
 *
 * Layout: magic "NLW1", version byte, u32-LE metadata length, UTF-8 JSON
 * metadata ({network, hash, tensors:[{name, shape, offset}]}), then raw
 * little-endian float32 payloads. Tensors are serialized in sorted-name
 * order so the payload and its 8-byte SHA-256 prefix are canonical.
 */

import * as crypto from "node:crypto";
import * as fs from "node:fs";

import { NetworkSpec, parameterShapes } from "./nn.js";

const MAGIC = "NLW1";
const VERSION = 1;

export interface WeightFile {
  network: NetworkSpec;
  tensors: Map<string, Float64Array>;
  /** 8-byte payload hash, hex. */
  hash: string;
}

function payloadOf(names: string[],
                   tensors: Map<string, Float64Array>): Buffer {
  let total = 0;
  for (const name of names) total += tensors.get(name)!.length * 4;
  const buf = Buffer.alloc(total);
  let off = 0;
  for (const name of names) {
    const t = tensors.get(name)!;
    for (let i = 0; i < t.length; i++) {
      buf.writeFloatLE(Math.fround(t[i]), off);
      off += 4;
    }
  }
  return buf;
}

export function contentHash(network: NetworkSpec,
                            tensors: Map<string, Float64Array>): string {
  const names = [...tensors.keys()].sort();
  const payload = payloadOf(names, tensors);
  return crypto.createHash("sha256").update(payload).digest()
    .subarray(0, 8).toString("hex");
}

export function saveWeights(file: string, network: NetworkSpec,
                            tensors: Map<string, Float64Array>): string {
  const expected = parameterShapes(network);
  for (const [name, shape] of expected) {
    const t = tensors.get(name);
    const size = shape.reduce((a, b) => a * b, 1);
    if (!t || t.length !== size) {
      throw new Error(`tensor ${name} missing or mis-sized`);
    }
  }
  if (tensors.size !== expected.size) {
    throw new Error("tensor set does not match the network description");
  }
  const names = [...tensors.keys()].sort();
  const payload = payloadOf(names, tensors);
  const hash = crypto.createHash("sha256").update(payload).digest()
    .subarray(0, 8).toString("hex");
  const meta: { name: string; shape: number[]; offset: number }[] = [];
  let off = 0;
  for (const name of names) {
    const shape = expected.get(name)!;
    meta.push({ name, shape, offset: off });
    off += tensors.get(name)!.length * 4;
  }
  const metaJson = Buffer.from(JSON.stringify({
    network, hash, tensors: meta,
  }), "utf-8");
  const head = Buffer.alloc(9);
  head.write(MAGIC, 0, "ascii");
  head.writeUInt8(VERSION, 4);
  head.writeUInt32LE(metaJson.length, 5);
  fs.writeFileSync(file, Buffer.concat([head, metaJson, payload]));
  return hash;
}

export function loadWeights(file: string): WeightFile {
  const buf = fs.readFileSync(file);
  if (buf.length < 9 || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${file}: not an NLW1 weight file`);
  }
  if (buf.readUInt8(4) !== VERSION) {
    throw new Error(`${file}: unsupported version`);
  }
  const metaLen = buf.readUInt32LE(5);
  const meta = JSON.parse(buf.toString("utf-8", 9, 9 + metaLen)) as {
    network: NetworkSpec;
    hash: string;
    tensors: { name: string; shape: number[]; offset: number }[];
  };
  const payload = buf.subarray(9 + metaLen);
  const digest = crypto.createHash("sha256").update(payload).digest()
    .subarray(0, 8).toString("hex");
  if (digest !== meta.hash) {
    throw new Error(`${file}: payload hash mismatch`);
  }
  const tensors = new Map<string, Float64Array>();
  for (const rec of meta.tensors) {
    const size = rec.shape.reduce((a, b) => a * b, 1);
    const t = new Float64Array(size);
    for (let i = 0; i < size; i++) {
      t[i] = payload.readFloatLE(rec.offset + 4 * i);
    }
    tensors.set(rec.name, t);
  }
  return { network: meta.network, tensors, hash: meta.hash };
}
