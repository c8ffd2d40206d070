/**
 * The trainable codec model: analysis/synthesis/scale-predictor stacks,
 * the relaxed rate-distortion loss, and its deterministic discrete
 * counterpart used for validation and reporting.
 *
 * Rounding is relaxed by additive uniform noise on [-0.5, 0.5) during
 * training; scale predictors consume the relaxed latents and emit log
 * scales. Rate terms are unit-width bin masses of the standard logistic
 * (top layer) or zero-mean Gaussians (lower layers), floored at 1e-9,
 * measured in bits.
 */

import {
  Var, add, addScalar, backward, div, exp, leaf, log, maxScalar, meanAll,
  mul, normalCdf, normalCdfScalar, scale, sigmoid, square, sub, sumAll,
  sizeOf,
} from "./tensor.js";
import {
  GDN_BETA_FLOOR, NetworkSpec, parameterShapes, runStack, totalDownsampling,
} from "./nn.js";
import { Rng } from "./rng.js";
import { msSsim } from "./ssim.js";

export type QuantizeMode = "noise" | "identity" | "round";
export type DistortionKind = "mse" | "ms-ssim";

const LOG2 = Math.log(2);
const RATE_FLOOR = 1e-9;
const BIN_LO = -512;
const BIN_HI = 511;

export interface ForwardResult {
  loss: Var;
  rateBits: Var;
  distortion: Var;
  bppValue: number;
  distortionValue: number;
}

export interface DiscreteReport {
  bits: number;
  bpp: number;
  mse: number;
}

function roundHalfAway(v: number): number {
  const r = Math.floor(Math.abs(v) + 0.5);
  return Math.min(BIN_HI, Math.max(BIN_LO, v < 0 ? -r : r));
}

/** Bits of a relaxed latent under the standard logistic prior. */
export function logisticRateBits(zTilde: Var): Var {
  const upper = sigmoid(addScalar(zTilde, 0.5));
  const lower = sigmoid(addScalar(zTilde, -0.5));
  const mass = maxScalar(sub(upper, lower), RATE_FLOOR);
  return scale(sumAll(log(mass)), -1 / LOG2);
}

/** Bits of a relaxed latent under zero-mean Gaussians with scales sigma. */
export function gaussianRateBits(zTilde: Var, sigma: Var): Var {
  const upper = normalCdf(div(addScalar(zTilde, 0.5), sigma));
  const lower = normalCdf(div(addScalar(zTilde, -0.5), sigma));
  const mass = maxScalar(sub(upper, lower), RATE_FLOOR);
  return scale(sumAll(log(mass)), -1 / LOG2);
}

export class CodecModel {
  readonly spec: NetworkSpec;
  readonly params: Map<string, Var>;
  /** Deep synthesis stacks are structural only; they receive no updates. */
  readonly trainableNames: string[];

  constructor(spec: NetworkSpec, params: Map<string, Var>) {
    this.spec = spec;
    this.params = params;
    this.trainableNames = [...params.keys()].filter(
      (n) => !/^synthesis\.[1-9]\d*\./.test(n)).sort();
  }

  static init(spec: NetworkSpec, seed: number): CodecModel {
    const rng = new Rng(seed * 2654435761 + 97);
    const params = new Map<string, Var>();
    for (const [name, shape] of parameterShapes(spec)) {
      const size = sizeOf(shape);
      const data = new Float64Array(size);
      if (name.endsWith(".kernel")) {
        const fanIn = shape.length === 4
          ? (name.includes("deconv") ? shape[0] : shape[1]) * shape[2] * shape[3]
          : 1;
        const std = 1 / Math.sqrt(fanIn);
        for (let i = 0; i < size; i++) data[i] = rng.normal() * std;
      } else if (name.endsWith(".bias")) {
        for (let i = 0; i < size; i++) data[i] = (rng.uniform() - 0.5) * 0.1;
      } else if (name.endsWith(".beta")) {
        data.fill(1.0);
      } else if (name.endsWith(".gamma")) {
        const c = shape[0];
        for (let i = 0; i < c; i++) data[i * c + i] = 0.05;
      }
      params.set(name, leaf(data, shape));
    }
    return new CodecModel(spec, params);
  }

  zeroGrads(): void {
    for (const v of this.params.values()) v.grad = null;
  }

  /** Continuous analysis chain: z_1 from the image, z_{l+1} from z_l. */
  private analysisChain(x: Var): Var[] {
    const latents: Var[] = [];
    let cur = x;
    this.spec.analysis.forEach((stack, i) => {
      cur = runStack(cur, stack, this.params, `analysis.${i}`);
      latents.push(cur);
    });
    return latents;
  }

  private relax(z: Var, mode: QuantizeMode, rng: Rng | null): Var {
    if (mode === "identity") return z;
    if (mode === "round") {
      const data = new Float64Array(z.size);
      for (let i = 0; i < z.size; i++) data[i] = roundHalfAway(z.data[i]);
      return leaf(data, z.shape);
    }
    if (!rng) throw new Error("noise mode needs an rng");
    const noise = new Float64Array(z.size);
    for (let i = 0; i < z.size; i++) noise[i] = rng.uniform() - 0.5;
    return add(z, leaf(noise, z.shape));
  }

  forward(image: Float64Array, height: number, width: number,
          mode: QuantizeMode, lambda: number, distortion: DistortionKind,
          rng: Rng | null = null): ForwardResult {
    const f = totalDownsampling(this.spec);
    if (height % f || width % f) {
      throw new Error(`patch ${height}x${width} not divisible by ${f}`);
    }
    const x = leaf(image, [3, height, width]);
    const latents = this.analysisChain(x);
    const relaxed = latents.map((z) => this.relax(z, mode, rng));
    const levels = this.spec.levels;

    let rateBits = logisticRateBits(relaxed[levels - 1]);
    for (let l = levels - 1; l >= 1; l--) {
      const raw = runStack(relaxed[l], this.spec.sigma[l - 1], this.params,
                           `sigma.${l - 1}`);
      const sigma = exp(raw);
      rateBits = add(rateBits, gaussianRateBits(relaxed[l - 1], sigma));
    }

    const xhat = runStack(relaxed[0], this.spec.synthesis[0], this.params,
                          "synthesis.0");
    let dist: Var;
    if (distortion === "mse") {
      // MSE on the 8-bit scale, like the reported metric.
      dist = scale(meanAll(square(sub(xhat, x))), 255 * 255);
    } else {
      dist = sub(leaf([1.0], [1]), msSsim(xhat, x, height, width));
    }
    const bpp = scale(rateBits, 1 / (height * width));
    const loss = add(bpp, scale(dist, lambda));
    return {
      loss, rateBits, distortion: dist,
      bppValue: bpp.item(), distortionValue: dist.item(),
    };
  }

  trainStep(batch: Float64Array[], height: number, width: number,
            lambda: number, distortion: DistortionKind, rng: Rng):
      { loss: number; bpp: number; distortion: number } {
    this.zeroGrads();
    let lossSum = 0;
    let bppSum = 0;
    let distSum = 0;
    for (const image of batch) {
      const res = this.forward(image, height, width, "noise", lambda,
                               distortion, rng);
      const perImage = scale(res.loss, 1 / batch.length);
      backward(perImage);
      lossSum += res.loss.item();
      bppSum += res.bppValue;
      distSum += res.distortionValue;
    }
    const n = batch.length;
    return { loss: lossSum / n, bpp: bppSum / n, distortion: distSum / n };
  }

  /** Deterministic loss on hard-rounded latents (validation objective). */
  evalLoss(images: Float64Array[], height: number, width: number,
           lambda: number, distortion: DistortionKind): number {
    let total = 0;
    for (const image of images) {
      const res = this.forward(image, height, width, "round", lambda,
                               distortion, null);
      total += res.loss.item();
    }
    return total / images.length;
  }

  /**
   * Deterministic discrete measurement: hard-rounded latents, tail-absorbed
   * bin masses (the codec's idealized rate), and 8-bit-scale MSE.
   */
  measure(image: Float64Array, height: number, width: number): DiscreteReport {
    const x = leaf(image, [3, height, width]);
    const latents = this.analysisChain(x);
    const rounded = latents.map((z) => this.relax(z, "round", null));
    const levels = this.spec.levels;

    const logisticMass = (z: number): number => {
      const upper = z >= BIN_HI ? 1 : 1 / (1 + Math.exp(-(z + 0.5)));
      const lower = z <= BIN_LO ? 0 : 1 / (1 + Math.exp(-(z - 0.5)));
      return upper - lower;
    };
    const gaussMass = (z: number, s: number): number => {
      const upper = z >= BIN_HI ? 1 : normalCdfScalar((z + 0.5) / s);
      const lower = z <= BIN_LO ? 0 : normalCdfScalar((z - 0.5) / s);
      return upper - lower;
    };

    let bits = 0;
    const top = rounded[levels - 1];
    for (let i = 0; i < top.size; i++) {
      bits -= Math.log2(Math.max(logisticMass(top.data[i]), RATE_FLOOR));
    }
    for (let l = levels - 1; l >= 1; l--) {
      const raw = runStack(rounded[l], this.spec.sigma[l - 1], this.params,
                           `sigma.${l - 1}`);
      const z = rounded[l - 1];
      for (let i = 0; i < z.size; i++) {
        const s = Math.exp(raw.data[i]);
        bits -= Math.log2(Math.max(gaussMass(z.data[i], s), RATE_FLOOR));
      }
    }

    const xhat = runStack(rounded[0], this.spec.synthesis[0], this.params,
                          "synthesis.0");
    let mse = 0;
    for (let i = 0; i < xhat.size; i++) {
      const d = (xhat.data[i] - image[i]) * 255;
      mse += d * d;
    }
    mse /= xhat.size;
    return { bits, bpp: bits / (height * width), mse };
  }

  snapshot(): Map<string, Float64Array> {
    const copy = new Map<string, Float64Array>();
    for (const [name, v] of this.params) {
      copy.set(name, Float64Array.from(v.data));
    }
    return copy;
  }

  restore(snap: Map<string, Float64Array>): void {
    for (const [name, data] of snap) {
      this.params.get(name)!.data.set(data);
    }
  }

  /** Keep GDN parameters in their feasible region after a gradient step. */
  project(): void {
    for (const [name, v] of this.params) {
      if (name.endsWith(".beta")) {
        for (let i = 0; i < v.size; i++) {
          if (v.data[i] < GDN_BETA_FLOOR) v.data[i] = GDN_BETA_FLOOR;
        }
      } else if (name.endsWith(".gamma")) {
        for (let i = 0; i < v.size; i++) {
          if (v.data[i] < 0) v.data[i] = 0;
        }
      }
    }
  }

  exportTensors(): Map<string, Float64Array> {
    return this.snapshot();
  }
}
