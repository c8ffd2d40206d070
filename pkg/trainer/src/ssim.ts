/**
 * Differentiable multi-scale SSIM on BT.601 luma, built from the engine's
 * convolution and elementwise primitives so it can serve as a distortion
 * term. Constants follow the standard construction (11x11 Gaussian window,
 * sigma 1.5, K1=0.01, K2=0.03, dyadic scale weights); when a patch is too
 * small for all five scales, the leading weights are renormalized over the
 * scales that fit.
 */

import {
  Var, add, addScalar, div, exp, leaf, log, maxScalar, meanAll, mul, scale,
  sub,
} from "./tensor.js";
import { conv2d } from "./nn.js";

function conv2dFixed(x: Var, kernel: Float64Array, shape: number[],
                     stride: number, padding: number): Var {
  return conv2d(x, leaf(kernel, shape),
                leaf(new Float64Array(shape[0]), [shape[0]]), stride, padding);
}

const WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const K1 = 0.01;
const K2 = 0.03;
const RANGE = 255.0;
const WIN = 11;
const SIGMA = 1.5;

function gaussKernel(): Float64Array {
  const g = new Float64Array(WIN);
  let total = 0;
  for (let i = 0; i < WIN; i++) {
    g[i] = Math.exp(-((i - 5) * (i - 5)) / (2 * SIGMA * SIGMA));
    total += g[i];
  }
  const k = new Float64Array(WIN * WIN);
  for (let i = 0; i < WIN; i++) {
    for (let j = 0; j < WIN; j++) k[i * WIN + j] = (g[i] / total) * (g[j] / total);
  }
  return k;
}

const GAUSS = gaussKernel();
const LUMA = Float64Array.of(0.299, 0.587, 0.114);
const POOL = Float64Array.of(0.25, 0.25, 0.25, 0.25);

function toLuma255(img: Var): Var {
  return scale(conv2dFixed(img, LUMA, [1, 3, 1, 1], 1, 0), RANGE);
}

function filter(img: Var): Var {
  return conv2dFixed(img, GAUSS, [1, 1, WIN, WIN], 1, 0);
}

function downsample(img: Var): Var {
  return conv2dFixed(img, POOL, [1, 1, 2, 2], 2, 0);
}

function ssimTerms(x: Var, y: Var): { lum: Var; cs: Var } {
  const c1 = (K1 * RANGE) ** 2;
  const c2 = (K2 * RANGE) ** 2;
  const mx = filter(x);
  const my = filter(y);
  const sxx = sub(filter(mul(x, x)), mul(mx, mx));
  const syy = sub(filter(mul(y, y)), mul(my, my));
  const sxy = sub(filter(mul(x, y)), mul(mx, my));
  const lum = div(addScalar(scale(mul(mx, my), 2), c1),
                  addScalar(add(mul(mx, mx), mul(my, my)), c1));
  const cs = div(addScalar(scale(sxy, 2), c2),
                 addScalar(add(sxx, syy), c2));
  return { lum: meanAll(lum), cs: meanAll(cs) };
}

export function fittingScales(height: number, width: number): number {
  let side = Math.min(height, width);
  let scales = 0;
  while (side >= WIN && scales < WEIGHTS.length) {
    scales++;
    side = Math.floor(side / 2);
  }
  if (scales === 0) throw new Error(`patch too small for an ${WIN}px window`);
  return scales;
}

/** MS-SSIM score in (0, 1]; both images are (3,H,W) in [0,1]. */
export function msSsim(a: Var, b: Var, height: number, width: number): Var {
  const scales = fittingScales(height, width);
  const wsum = WEIGHTS.slice(0, scales).reduce((x, y) => x + y, 0);
  let x = toLuma255(a);
  let y = toLuma255(b);
  let logScore: Var | null = null;
  for (let s = 0; s < scales; s++) {
    const { lum, cs } = ssimTerms(x, y);
    const weight = WEIGHTS[s] / wsum;
    const factor = s === scales - 1 ? mul(lum, cs) : cs;
    const term = scale(log(maxScalar(factor, 1e-12)), weight);
    logScore = logScore ? add(logScore, term) : term;
    if (s < scales - 1) {
      x = downsample(x);
      y = downsample(y);
    }
  }
  return exp(logScore!);
}
