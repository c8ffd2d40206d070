/**
 * Training data: synthetic gradient/checker/noise textures, PPM image
 * folders, and seeded random crops. Images are (3, H, W) float64 in [0, 1].
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Rng } from "./rng.js";

export interface Image {
  data: Float64Array;
  channels: number;
  height: number;
  width: number;
}

export function syntheticImage(height: number, width: number, seed: number,
                               kind: "gradient" | "checker" | "noise" | "mix"
                               = "mix"): Image {
  const rng = new Rng(seed * 7919 + 17);
  const data = new Float64Array(3 * height * width);
  const plane = height * width;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const p = y * width + x;
      let r: number;
      let g: number;
      let b: number;
      if (kind === "gradient") {
        r = x / Math.max(width - 1, 1);
        g = y / Math.max(height - 1, 1);
        b = (x + y) / Math.max(width + height - 2, 1);
      } else if (kind === "checker") {
        const block = Math.max(4, Math.floor(Math.min(height, width) / 8));
        const v = (Math.floor(y / block) + Math.floor(x / block)) % 2;
        r = v;
        g = 1 - v;
        b = v;
      } else if (kind === "noise") {
        r = rng.uniform();
        g = rng.uniform();
        b = rng.uniform();
      } else {
        const texture = Math.sin(y / 3) * Math.cos(x / 5) * 0.12;
        r = (x / Math.max(width - 1, 1)) * 0.8 + texture + rng.normal() * 0.02;
        g = (y / Math.max(height - 1, 1)) * 0.8 + texture + rng.normal() * 0.02;
        b = Math.sin(x / 7) * 0.25 + 0.5 + texture + rng.normal() * 0.02;
      }
      data[p] = Math.min(1, Math.max(0, r));
      data[plane + p] = Math.min(1, Math.max(0, g));
      data[2 * plane + p] = Math.min(1, Math.max(0, b));
    }
  }
  return { data, channels: 3, height, width };
}

export function syntheticDataset(count: number, size: number,
                                 seed: number): Image[] {
  const kinds = ["gradient", "checker", "noise", "mix"] as const;
  const images: Image[] = [];
  for (let i = 0; i < count; i++) {
    images.push(syntheticImage(size, size, seed + i, kinds[i % kinds.length]));
  }
  return images;
}

export function readPpm(file: string): Image {
  const buf = fs.readFileSync(file);
  let pos = 0;
  const token = (): string => {
    while (pos < buf.length) {
      const ch = buf[pos];
      if (ch === 0x23) { // '#'
        while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        pos++;
      } else break;
    }
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    return buf.subarray(start, pos).toString("ascii");
  };
  if (token() !== "P6") throw new Error(`${file}: not a P6 PPM`);
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (maxval !== 255) throw new Error(`${file}: maxval must be 255`);
  pos++;
  const plane = height * width;
  const data = new Float64Array(3 * plane);
  for (let p = 0; p < plane; p++) {
    data[p] = buf[pos + 3 * p] / 255;
    data[plane + p] = buf[pos + 3 * p + 1] / 255;
    data[2 * plane + p] = buf[pos + 3 * p + 2] / 255;
  }
  return { data, channels: 3, height, width };
}

export function writePpm(file: string, img: Image): void {
  const plane = img.height * img.width;
  const head = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  const body = Buffer.alloc(3 * plane);
  for (let p = 0; p < plane; p++) {
    for (let c = 0; c < 3; c++) {
      const v = Math.round(img.data[c * plane + p] * 255);
      body[3 * p + c] = Math.min(255, Math.max(0, v));
    }
  }
  fs.writeFileSync(file, Buffer.concat([head, body]));
}

export function loadFolder(dir: string): Image[] {
  const files = fs.readdirSync(dir).filter((f) => f.endsWith(".ppm")).sort();
  if (!files.length) throw new Error(`${dir}: no .ppm images found`);
  return files.map((f) => readPpm(path.join(dir, f)));
}

/** Random patch, reflect-padded when the image is smaller than the patch. */
export function randomCrop(img: Image, patch: number, rng: Rng): Float64Array {
  const plane = img.height * img.width;
  const out = new Float64Array(3 * patch * patch);
  const y0 = img.height > patch ? rng.int(img.height - patch + 1) : 0;
  const x0 = img.width > patch ? rng.int(img.width - patch + 1) : 0;
  const reflect = (v: number, size: number): number => {
    if (size === 1) return 0;
    const period = 2 * size - 2;
    let m = v % period;
    if (m < 0) m += period;
    return m < size ? m : period - m;
  };
  for (let c = 0; c < 3; c++) {
    for (let y = 0; y < patch; y++) {
      const sy = reflect(y0 + y, img.height);
      for (let x = 0; x < patch; x++) {
        const sx = reflect(x0 + x, img.width);
        out[(c * patch + y) * patch + x] = img.data[c * plane + sy * img.width + sx];
      }
    }
  }
  return out;
}
