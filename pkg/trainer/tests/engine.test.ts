/**
 * Engine tests: special functions against high-precision references, and
 * every hand-derived backward against central finite differences.
 */

import { describe, expect, it } from "vitest";

import {
  Var, add, backward, div, erf, exp, leaf, log, maxScalar, meanAll, mul,
  normalCdf, normalCdfScalar, relu, scale, sigmoid, sqrt, square, sub,
  sumAll,
} from "../src/tensor.js";
import { conv2d, deconv2d, gdn, igdn } from "../src/nn.js";
import { Rng } from "../src/rng.js";

function randArr(n: number, rng: Rng, scale = 1): Float64Array {
  const a = new Float64Array(n);
  for (let i = 0; i < n; i++) a[i] = rng.normal() * scale;
  return a;
}

/**
 * Central-difference check of d(sum(f(inputs)))/d(inputs) for every input
 * element, returning the max relative error.
 */
function gradCheck(inputs: Var[], f: (vs: Var[]) => Var, h = 1e-6): number {
  for (const v of inputs) v.grad = null;
  backward(f(inputs));
  let worst = 0;
  for (const v of inputs) {
    const g = v.grad ?? new Float64Array(v.size);
    for (let i = 0; i < v.size; i++) {
      const orig = v.data[i];
      v.data[i] = orig + h;
      const fp = f(inputs).item();
      v.data[i] = orig - h;
      const fm = f(inputs).item();
      v.data[i] = orig;
      const fd = (fp - fm) / (2 * h);
      const rel = Math.abs(g[i] - fd) /
        Math.max(Math.abs(g[i]), Math.abs(fd), 1e-7);
      worst = Math.max(worst, rel);
    }
  }
  return worst;
}

describe("special functions", () => {
  it("matches high-precision normal CDF values", () => {
    expect(normalCdfScalar(0.5)).toBeCloseTo(0.6914624612740131, 15);
    expect(normalCdfScalar(-3)).toBeCloseTo(0.0013498980316300945, 16);
    expect(normalCdfScalar(7)).toBeCloseTo(0.99999999999872019, 14);
    expect(normalCdfScalar(-0.1)).toBeCloseTo(0.46017216272297102, 15);
    expect(normalCdfScalar(0)).toBe(0.5);
  });

  it("matches high-precision erf values", () => {
    expect(erf(1)).toBeCloseTo(0.84270079294971487, 15);
    expect(erf(2.5)).toBeCloseTo(0.99959304798255504, 15);
    expect(erf(0.25)).toBeCloseTo(0.27632639016823693, 15);
    expect(erf(-1)).toBeCloseTo(-0.84270079294971487, 15);
  });

  it("normal CDF is symmetric and monotone", () => {
    const rng = new Rng(1);
    for (let i = 0; i < 200; i++) {
      const x = rng.normal() * 4;
      expect(normalCdfScalar(-x) + normalCdfScalar(x)).toBeCloseTo(1, 14);
    }
  });
});

describe("elementwise gradients", () => {
  it("checks a deep elementwise composite", () => {
    const rng = new Rng(2);
    const err = gradCheck(
      [leaf(randArr(24, rng), [2, 3, 4]), leaf(randArr(24, rng), [2, 3, 4])],
      ([a, b]) => {
        const t = add(mul(sigmoid(a), normalCdf(b)),
                      sqrt(exp(scale(a, 0.3))));
        const u = div(square(t), maxScalar(sub(t, scale(b, 0.1)), 0.05));
        return meanAll(log(maxScalar(u, 1e-6)));
      });
    expect(err).toBeLessThan(1e-6);
  });

  it("checks relu away from the kink", () => {
    const rng = new Rng(3);
    const data = randArr(30, rng);
    for (let i = 0; i < data.length; i++) {
      if (Math.abs(data[i]) < 1e-3) data[i] = 0.1;
    }
    const err = gradCheck([leaf(data, [30])],
                          ([a]) => sumAll(square(relu(a))));
    expect(err).toBeLessThan(1e-6);
  });
});

describe("convolution gradients", () => {
  it("checks conv2d against finite differences", () => {
    const rng = new Rng(4);
    for (const [stride, pad, k] of [[1, 0, 3], [2, 2, 5], [2, 1, 3]]) {
      const x = leaf(randArr(2 * 6 * 6, rng), [2, 6, 6]);
      const kern = leaf(randArr(3 * 2 * k * k, rng, 0.5), [3, 2, k, k]);
      const bias = leaf(randArr(3, rng, 0.1), [3]);
      const err = gradCheck([x, kern, bias],
                            ([a, b, c]) => sumAll(square(conv2d(a, b, c,
                                                                stride, pad))));
      expect(err).toBeLessThan(1e-6);
    }
  });

  it("checks deconv2d against finite differences", () => {
    const rng = new Rng(5);
    for (const [stride, pad, k, op] of [[1, 0, 3, 0], [2, 2, 5, 1],
                                        [2, 1, 3, 1]]) {
      const x = leaf(randArr(3 * 4 * 4, rng), [3, 4, 4]);
      const kern = leaf(randArr(3 * 2 * k * k, rng, 0.5), [3, 2, k, k]);
      const bias = leaf(randArr(2, rng, 0.1), [2]);
      const err = gradCheck([x, kern, bias],
                            ([a, b, c]) => sumAll(square(
                              deconv2d(a, b, c, stride, pad, op))));
      expect(err).toBeLessThan(1e-6);
    }
  });

  it("matches shapes of the strided conventions", () => {
    const rng = new Rng(6);
    const x = leaf(randArr(1 * 8 * 8, rng), [1, 8, 8]);
    const kern = leaf(randArr(4 * 1 * 25, rng), [4, 1, 5, 5]);
    const bias = leaf(new Float64Array(4), [4]);
    expect(conv2d(x, kern, bias, 2, 2).shape).toEqual([4, 4, 4]);
    const dk = leaf(randArr(1 * 4 * 25, rng), [1, 4, 5, 5]);
    const db = leaf(new Float64Array(4), [4]);
    expect(deconv2d(x, dk, db, 2, 2, 1).shape).toEqual([4, 16, 16]);
  });
});

describe("gdn", () => {
  function gdnParams(c: number, rng: Rng): [Var, Var] {
    const beta = new Float64Array(c);
    const gamma = new Float64Array(c * c);
    for (let i = 0; i < c; i++) {
      beta[i] = 0.6 + rng.uniform();
      for (let j = 0; j < c; j++) {
        gamma[i * c + j] = (i === j ? 0.1 : 0) + 0.04 * rng.uniform();
      }
    }
    return [leaf(beta, [c]), leaf(gamma, [c, c])];
  }

  it("checks forward gradients", () => {
    const rng = new Rng(7);
    const [beta, gamma] = gdnParams(3, rng);
    const x = leaf(randArr(3 * 4 * 4, rng, 2), [3, 4, 4]);
    const err = gradCheck([x, beta, gamma],
                          ([a, b, g]) => sumAll(square(gdn(a, b, g))));
    expect(err).toBeLessThan(1e-6);
  });

  it("checks exact-inverse gradients", () => {
    const rng = new Rng(8);
    const [beta, gamma] = gdnParams(3, rng);
    const u = leaf(randArr(3 * 3 * 3, rng, 0.8), [3, 3, 3]);
    const err = gradCheck([u, beta, gamma],
                          ([a, b, g]) => sumAll(square(igdn(a, b, g))));
    expect(err).toBeLessThan(1e-6);
  });

  it("igdn inverts gdn to float64 precision", () => {
    const rng = new Rng(9);
    const [beta, gamma] = gdnParams(4, rng);
    const x = leaf(randArr(4 * 5 * 5, rng, 3), [4, 5, 5]);
    const back = igdn(gdn(x, beta, gamma), beta, gamma);
    for (let i = 0; i < x.size; i++) {
      expect(back.data[i]).toBeCloseTo(x.data[i], 10);
    }
  });
});

describe("rng", () => {
  it("is reproducible and roughly uniform", () => {
    const a = new Rng(42);
    const b = new Rng(42);
    const seq = Array.from({ length: 8 }, () => a.uniform());
    expect(Array.from({ length: 8 }, () => b.uniform())).toEqual(seq);
    const c = new Rng(43);
    expect(c.uniform()).not.toBe(seq[0]);
    let mean = 0;
    for (let i = 0; i < 10000; i++) mean += a.uniform() / 10000;
    expect(mean).toBeGreaterThan(0.48);
    expect(mean).toBeLessThan(0.52);
  });
});
