/**
 * Differentiable transform layers over (C, H, W) tensors, plus the
 * data-driven network description shared with the codec through the NLW1
 * metadata. Conventions match the codec exactly: cross-correlation,
 * symmetric padding, stride-2 transposed convolutions with output padding 1,
 * GDN dividing by the root normalization pool, and IGDN inverting it
 * exactly through a per-position linear solve.
 */

import { Var, relu } from "./tensor.js";

export type LayerKind = "conv" | "deconv" | "gdn" | "igdn" | "relu";

export interface LayerSpec {
  kind: LayerKind;
  in: number;
  out: number;
  kernel?: number;
  stride?: number;
  padding?: number;
}

export interface NetworkSpec {
  levels: number;
  latent_channels: number;
  analysis: LayerSpec[][];
  synthesis: LayerSpec[][];
  sigma: LayerSpec[][];
}

export const GDN_BETA_FLOOR = 1e-6;

export function defaultNetworkSpec(levels: number, latentChannels = 150,
                                   hiddenChannels = 70,
                                   imageChannels = 3): NetworkSpec {
  const m = latentChannels;
  const mid = hiddenChannels;
  const analysis: LayerSpec[][] = [[
    { kind: "conv", in: imageChannels, out: mid, kernel: 5, stride: 2, padding: 2 },
    { kind: "gdn", in: mid, out: mid },
    { kind: "conv", in: mid, out: m, kernel: 5, stride: 2, padding: 2 },
  ]];
  const synthesis: LayerSpec[][] = [[
    { kind: "deconv", in: m, out: mid, kernel: 5, stride: 2, padding: 2 },
    { kind: "igdn", in: mid, out: mid },
    { kind: "deconv", in: mid, out: imageChannels, kernel: 5, stride: 2, padding: 2 },
  ]];
  const sigma: LayerSpec[][] = [];
  for (let l = 1; l < levels; l++) {
    analysis.push([
      { kind: "conv", in: m, out: m, kernel: 3, stride: 2, padding: 1 },
      { kind: "relu", in: m, out: m },
    ]);
    synthesis.push([
      { kind: "deconv", in: m, out: m, kernel: 3, stride: 2, padding: 1 },
      { kind: "relu", in: m, out: m },
    ]);
    sigma.push([
      { kind: "deconv", in: m, out: m, kernel: 3, stride: 2, padding: 1 },
      { kind: "relu", in: m, out: m },
      { kind: "conv", in: m, out: m, kernel: 3, stride: 1, padding: 1 },
    ]);
  }
  return { levels, latent_channels: m, analysis, synthesis, sigma };
}

export function totalDownsampling(spec: NetworkSpec): number {
  let f = 1;
  for (const stack of spec.analysis) {
    for (const layer of stack) {
      if (layer.kind === "conv" || layer.kind === "deconv") {
        f *= layer.stride ?? 1;
      }
    }
  }
  return f;
}

/** Parameter names and shapes, identical to the codec's weight naming. */
export function parameterShapes(spec: NetworkSpec): Map<string, number[]> {
  const shapes = new Map<string, number[]>();
  const families: Array<[string, LayerSpec[][]]> = [
    ["analysis", spec.analysis], ["synthesis", spec.synthesis],
    ["sigma", spec.sigma]];
  for (const [family, stacks] of families) {
    stacks.forEach((stack, si) => {
      stack.forEach((layer, li) => {
        const key = `${family}.${si}.${li}`;
        if (layer.kind === "conv") {
          shapes.set(`${key}.kernel`,
                     [layer.out, layer.in, layer.kernel!, layer.kernel!]);
          shapes.set(`${key}.bias`, [layer.out]);
        } else if (layer.kind === "deconv") {
          shapes.set(`${key}.kernel`,
                     [layer.in, layer.out, layer.kernel!, layer.kernel!]);
          shapes.set(`${key}.bias`, [layer.out]);
        } else if (layer.kind === "gdn" || layer.kind === "igdn") {
          shapes.set(`${key}.beta`, [layer.in]);
          shapes.set(`${key}.gamma`, [layer.in, layer.in]);
        }
      });
    });
  }
  return shapes;
}

export function conv2d(x: Var, kernel: Var, bias: Var, stride: number,
                       padding: number): Var {
  const [c, h, w] = x.shape;
  const [oc, ic, kh, kw] = kernel.shape;
  if (c !== ic) throw new Error(`conv2d: ${c} channels, kernel wants ${ic}`);
  const oh = Math.floor((h + 2 * padding - kh) / stride) + 1;
  const ow = Math.floor((w + 2 * padding - kw) / stride) + 1;
  const out = new Float64Array(oc * oh * ow);
  const xd = x.data;
  const kd = kernel.data;
  for (let o = 0; o < oc; o++) {
    const b = bias.data[o];
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let acc = b;
        for (let ci = 0; ci < c; ci++) {
          const kbase = ((o * ic + ci) * kh) * kw;
          const xbase = ci * h * w;
          for (let i = 0; i < kh; i++) {
            const yy = oy * stride - padding + i;
            if (yy < 0 || yy >= h) continue;
            for (let j = 0; j < kw; j++) {
              const xx = ox * stride - padding + j;
              if (xx < 0 || xx >= w) continue;
              acc += xd[xbase + yy * w + xx] * kd[kbase + i * kw + j];
            }
          }
        }
        out[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
  const node = new Var(out, [oc, oh, ow], [x, kernel, bias], null);
  node.backfn = () => {
    const g = node.grad!;
    const gx = x.ensureGrad();
    const gk = kernel.ensureGrad();
    const gb = bias.ensureGrad();
    for (let o = 0; o < oc; o++) {
      for (let oy = 0; oy < oh; oy++) {
        for (let ox = 0; ox < ow; ox++) {
          const go = g[(o * oh + oy) * ow + ox];
          if (go === 0) continue;
          gb[o] += go;
          for (let ci = 0; ci < c; ci++) {
            const kbase = ((o * ic + ci) * kh) * kw;
            const xbase = ci * h * w;
            for (let i = 0; i < kh; i++) {
              const yy = oy * stride - padding + i;
              if (yy < 0 || yy >= h) continue;
              for (let j = 0; j < kw; j++) {
                const xx = ox * stride - padding + j;
                if (xx < 0 || xx >= w) continue;
                gx[xbase + yy * w + xx] += go * kd[kbase + i * kw + j];
                gk[kbase + i * kw + j] += go * xd[xbase + yy * w + xx];
              }
            }
          }
        }
      }
    }
  };
  return node;
}

export function deconv2d(x: Var, kernel: Var, bias: Var, stride: number,
                         padding: number, outputPadding: number): Var {
  const [c, h, w] = x.shape;
  const [ic, oc, kh, kw] = kernel.shape;
  if (c !== ic) throw new Error(`deconv2d: ${c} channels, kernel wants ${ic}`);
  const oh = (h - 1) * stride - 2 * padding + kh + outputPadding;
  const ow = (w - 1) * stride - 2 * padding + kw + outputPadding;
  const out = new Float64Array(oc * oh * ow);
  const xd = x.data;
  const kd = kernel.data;
  for (let o = 0; o < oc; o++) {
    const b = bias.data[o];
    for (let i = 0; i < oh * ow; i++) out[o * oh * ow + i] = b;
  }
  for (let ci = 0; ci < c; ci++) {
    for (let y = 0; y < h; y++) {
      for (let xcol = 0; xcol < w; xcol++) {
        const v = xd[(ci * h + y) * w + xcol];
        if (v === 0) continue;
        for (let o = 0; o < oc; o++) {
          const kbase = ((ci * oc + o) * kh) * kw;
          const obase = o * oh * ow;
          for (let i = 0; i < kh; i++) {
            const oy = y * stride - padding + i;
            if (oy < 0 || oy >= oh) continue;
            for (let j = 0; j < kw; j++) {
              const ox = xcol * stride - padding + j;
              if (ox < 0 || ox >= ow) continue;
              out[obase + oy * ow + ox] += v * kd[kbase + i * kw + j];
            }
          }
        }
      }
    }
  }
  const node = new Var(out, [oc, oh, ow], [x, kernel, bias], null);
  node.backfn = () => {
    const g = node.grad!;
    const gx = x.ensureGrad();
    const gk = kernel.ensureGrad();
    const gb = bias.ensureGrad();
    for (let o = 0; o < oc; o++) {
      const obase = o * oh * ow;
      for (let i = 0; i < oh * ow; i++) gb[o] += g[obase + i];
    }
    for (let ci = 0; ci < c; ci++) {
      for (let y = 0; y < h; y++) {
        for (let xcol = 0; xcol < w; xcol++) {
          const xidx = (ci * h + y) * w + xcol;
          const v = xd[xidx];
          let accx = 0;
          for (let o = 0; o < oc; o++) {
            const kbase = ((ci * oc + o) * kh) * kw;
            const obase = o * oh * ow;
            for (let i = 0; i < kh; i++) {
              const oy = y * stride - padding + i;
              if (oy < 0 || oy >= oh) continue;
              for (let j = 0; j < kw; j++) {
                const ox = xcol * stride - padding + j;
                if (ox < 0 || ox >= ow) continue;
                const go = g[obase + oy * ow + ox];
                accx += go * kd[kbase + i * kw + j];
                gk[kbase + i * kw + j] += go * v;
              }
            }
          }
          gx[xidx] += accx;
        }
      }
    }
  };
  return node;
}

/** Solve a dense C x C system in place (Gaussian elimination, partial pivot). */
function solveInPlace(a: Float64Array, b: Float64Array, n: number): void {
  for (let col = 0; col < n; col++) {
    let piv = col;
    for (let r = col + 1; r < n; r++) {
      if (Math.abs(a[r * n + col]) > Math.abs(a[piv * n + col])) piv = r;
    }
    if (Math.abs(a[piv * n + col]) < 1e-300) {
      throw new Error("igdn: singular normalization system");
    }
    if (piv !== col) {
      for (let k = col; k < n; k++) {
        const t = a[col * n + k];
        a[col * n + k] = a[piv * n + k];
        a[piv * n + k] = t;
      }
      const t = b[col];
      b[col] = b[piv];
      b[piv] = t;
    }
    const d = a[col * n + col];
    for (let r = col + 1; r < n; r++) {
      const f = a[r * n + col] / d;
      if (f === 0) continue;
      for (let k = col; k < n; k++) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  for (let r = n - 1; r >= 0; r--) {
    let s = b[r];
    for (let k = r + 1; k < n; k++) s -= a[r * n + k] * b[k];
    b[r] = s / a[r * n + r];
  }
}

export function gdn(x: Var, beta: Var, gamma: Var): Var {
  const [c, h, w] = x.shape;
  const n = h * w;
  const xd = x.data;
  const bd = beta.data;
  const gd = gamma.data;
  const denom = new Float64Array(c * n);
  const out = new Float64Array(c * n);
  for (let p = 0; p < n; p++) {
    for (let i = 0; i < c; i++) {
      let d = bd[i];
      for (let j = 0; j < c; j++) {
        const xj = xd[j * n + p];
        d += gd[i * c + j] * xj * xj;
      }
      denom[i * n + p] = d;
      out[i * n + p] = xd[i * n + p] / Math.sqrt(d);
    }
  }
  const node = new Var(out, x.shape, [x, beta, gamma], null);
  node.backfn = () => {
    const g = node.grad!;
    const gx = x.ensureGrad();
    const gb = beta.ensureGrad();
    const gg = gamma.ensureGrad();
    const t = new Float64Array(c);
    for (let p = 0; p < n; p++) {
      for (let i = 0; i < c; i++) {
        const d = denom[i * n + p];
        t[i] = g[i * n + p] * xd[i * n + p] / (d * Math.sqrt(d));
        gb[i] -= 0.5 * t[i];
      }
      for (let k = 0; k < c; k++) {
        const xk = xd[k * n + p];
        let s = 0;
        for (let i = 0; i < c; i++) {
          s += t[i] * gd[i * c + k];
          gg[i * c + k] -= 0.5 * t[i] * xk * xk;
        }
        gx[k * n + p] += g[k * n + p] / Math.sqrt(denom[k * n + p])
          - xk * s;
      }
    }
  };
  return node;
}

/**
 * Exact GDN inverse: per position solve (I - Gamma diag(u^2)) e = beta,
 * then x_i = u_i sqrt(e_i). Gradients follow the implicit function theorem
 * with an adjoint solve against the transposed system.
 */
export function igdn(u: Var, beta: Var, gamma: Var): Var {
  const [c, h, w] = u.shape;
  const n = h * w;
  const ud = u.data;
  const bd = beta.data;
  const gd = gamma.data;
  const energy = new Float64Array(c * n);
  const out = new Float64Array(c * n);
  const a = new Float64Array(c * c);
  const rhs = new Float64Array(c);
  for (let p = 0; p < n; p++) {
    for (let i = 0; i < c; i++) {
      for (let j = 0; j < c; j++) {
        const uj = ud[j * n + p];
        a[i * c + j] = (i === j ? 1 : 0) - gd[i * c + j] * uj * uj;
      }
      rhs[i] = bd[i];
    }
    solveInPlace(a, rhs, c);
    for (let i = 0; i < c; i++) {
      const e = rhs[i];
      if (!(e > 0)) throw new Error("igdn: non-positive energy");
      energy[i * n + p] = e;
      out[i * n + p] = ud[i * n + p] * Math.sqrt(e);
    }
  }
  const node = new Var(out, u.shape, [u, beta, gamma], null);
  node.backfn = () => {
    const g = node.grad!;
    const gu = u.ensureGrad();
    const gb = beta.ensureGrad();
    const gg = gamma.ensureGrad();
    const at = new Float64Array(c * c);
    const wvec = new Float64Array(c);
    for (let p = 0; p < n; p++) {
      // Adjoint solve: A^T w = dL/de, with A_ij = delta_ij - Gamma_ij u_j^2.
      for (let i = 0; i < c; i++) {
        for (let j = 0; j < c; j++) {
          const uj = ud[j * n + p];
          at[j * c + i] = (i === j ? 1 : 0) - gd[i * c + j] * uj * uj;
        }
      }
      for (let i = 0; i < c; i++) {
        const e = energy[i * n + p];
        wvec[i] = g[i * n + p] * ud[i * n + p] * 0.5 / Math.sqrt(e);
      }
      solveInPlace(at, wvec, c);
      for (let i = 0; i < c; i++) {
        gb[i] += wvec[i];
        gu[i * n + p] += g[i * n + p] * Math.sqrt(energy[i * n + p]);
      }
      for (let j = 0; j < c; j++) {
        const uj = ud[j * n + p];
        const ej = energy[j * n + p];
        let gtw = 0;
        for (let i = 0; i < c; i++) {
          gtw += gd[i * c + j] * wvec[i];
          gg[i * c + j] += wvec[i] * uj * uj * ej;
        }
        gu[j * n + p] += 2 * uj * ej * gtw;
      }
    }
  };
  return node;
}

/** Apply a stack, resolving parameters by name from the given map. */
export function runStack(x: Var, layers: LayerSpec[],
                         params: Map<string, Var>, prefix: string): Var {
  let cur = x;
  layers.forEach((layer, i) => {
    const key = `${prefix}.${i}`;
    const get = (p: string): Var => {
      const v = params.get(`${key}.${p}`);
      if (!v) throw new Error(`missing parameter ${key}.${p}`);
      return v;
    };
    if (layer.kind === "conv") {
      cur = conv2d(cur, get("kernel"), get("bias"), layer.stride ?? 1,
                   layer.padding ?? 0);
    } else if (layer.kind === "deconv") {
      const stride = layer.stride ?? 1;
      cur = deconv2d(cur, get("kernel"), get("bias"), stride,
                     layer.padding ?? 0, stride - 1);
    } else if (layer.kind === "gdn") {
      cur = gdn(cur, get("beta"), get("gamma"));
    } else if (layer.kind === "igdn") {
      cur = igdn(cur, get("beta"), get("gamma"));
    } else {
      cur = relu(cur);
    }
  });
  return cur;
}
