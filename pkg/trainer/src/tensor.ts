/**
 * Minimal reverse-mode autodiff over float64 tensors.
 *
 * Tensors are flat Float64Arrays with an explicit shape; elementwise ops
 * require identical shapes (no broadcasting). Gradients are accumulated by
 * walking the tape in reverse topological order from a scalar loss.
 */

export type Shape = readonly number[];

export function sizeOf(shape: Shape): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function sameShape(a: Shape, b: Shape): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

let nextId = 0;

export class Var {
  readonly id: number;
  readonly shape: Shape;
  readonly data: Float64Array;
  grad: Float64Array | null = null;
  readonly parents: Var[];
  backfn: (() => void) | null;

  constructor(data: Float64Array, shape: Shape, parents: Var[] = [],
              backfn: (() => void) | null = null) {
    if (data.length !== sizeOf(shape)) {
      throw new Error(`data length ${data.length} != shape ${shape}`);
    }
    this.id = nextId++;
    this.data = data;
    this.shape = shape;
    this.parents = parents;
    this.backfn = backfn;
  }

  get size(): number {
    return this.data.length;
  }

  ensureGrad(): Float64Array {
    if (!this.grad) this.grad = new Float64Array(this.size);
    return this.grad;
  }

  item(): number {
    if (this.size !== 1) throw new Error("item() needs a scalar");
    return this.data[0];
  }
}

export function leaf(data: Float64Array | number[], shape: Shape): Var {
  const arr = data instanceof Float64Array ? data : Float64Array.from(data);
  return new Var(arr, shape);
}

export function zerosLike(v: Var): Float64Array {
  return new Float64Array(v.size);
}

/** Backpropagate from a scalar node, filling .grad on every tape node. */
export function backward(root: Var): void {
  if (root.size !== 1) throw new Error("backward() needs a scalar loss");
  const topo: Var[] = [];
  const seen = new Set<number>();
  const stack: Array<[Var, number]> = [[root, 0]];
  while (stack.length) {
    const top = stack[stack.length - 1];
    const [node, idx] = top;
    if (idx < node.parents.length) {
      top[1] += 1;
      const p = node.parents[idx];
      if (!seen.has(p.id)) {
        seen.add(p.id);
        stack.push([p, 0]);
      }
    } else {
      stack.pop();
      topo.push(node);
    }
  }
  root.ensureGrad()[0] = 1.0;
  for (let i = topo.length - 1; i >= 0; i--) {
    const node = topo[i];
    if (node.backfn && node.grad) node.backfn();
  }
}

function unaryOp(a: Var, fwd: (x: number) => number,
                 dfdx: (x: number, y: number) => number): Var {
  const out = new Float64Array(a.size);
  for (let i = 0; i < a.size; i++) out[i] = fwd(a.data[i]);
  const node = new Var(out, a.shape, [a], null);
  node.backfn = () => {
    const g = node.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < a.size; i++) {
      ga[i] += g[i] * dfdx(a.data[i], out[i]);
    }
  };
  return node;
}

function binaryOp(a: Var, b: Var, fwd: (x: number, y: number) => number,
                  dfdx: (x: number, y: number) => number,
                  dfdy: (x: number, y: number) => number): Var {
  if (!sameShape(a.shape, b.shape)) {
    throw new Error(`shape mismatch: ${a.shape} vs ${b.shape}`);
  }
  const out = new Float64Array(a.size);
  for (let i = 0; i < a.size; i++) out[i] = fwd(a.data[i], b.data[i]);
  const node = new Var(out, a.shape, [a, b], null);
  node.backfn = () => {
    const g = node.grad!;
    const ga = a.ensureGrad();
    const gb = b.ensureGrad();
    for (let i = 0; i < a.size; i++) {
      ga[i] += g[i] * dfdx(a.data[i], b.data[i]);
      gb[i] += g[i] * dfdy(a.data[i], b.data[i]);
    }
  };
  return node;
}

export const add = (a: Var, b: Var) =>
  binaryOp(a, b, (x, y) => x + y, () => 1, () => 1);
export const sub = (a: Var, b: Var) =>
  binaryOp(a, b, (x, y) => x - y, () => 1, () => -1);
export const mul = (a: Var, b: Var) =>
  binaryOp(a, b, (x, y) => x * y, (_x, y) => y, (x) => x);
export const div = (a: Var, b: Var) =>
  binaryOp(a, b, (x, y) => x / y, (_x, y) => 1 / y,
           (x, y) => -x / (y * y));

export const exp = (a: Var) => unaryOp(a, Math.exp, (_x, y) => y);
export const log = (a: Var) => unaryOp(a, Math.log, (x) => 1 / x);
export const sqrt = (a: Var) => unaryOp(a, Math.sqrt, (_x, y) => 0.5 / y);
export const square = (a: Var) => unaryOp(a, (x) => x * x, (x) => 2 * x);
export const neg = (a: Var) => unaryOp(a, (x) => -x, () => -1);
export const relu = (a: Var) =>
  unaryOp(a, (x) => (x > 0 ? x : 0), (x) => (x > 0 ? 1 : 0));
export const sigmoid = (a: Var) =>
  unaryOp(a, (x) => 1 / (1 + Math.exp(-x)), (_x, y) => y * (1 - y));

export const addScalar = (a: Var, c: number) =>
  unaryOp(a, (x) => x + c, () => 1);
export const scale = (a: Var, c: number) =>
  unaryOp(a, (x) => x * c, () => c);
/** max(x, c); the subgradient at the boundary is 0. */
export const maxScalar = (a: Var, c: number) =>
  unaryOp(a, (x) => (x > c ? x : c), (x) => (x > c ? 1 : 0));

export function sumAll(a: Var): Var {
  let s = 0;
  for (let i = 0; i < a.size; i++) s += a.data[i];
  const node = new Var(Float64Array.of(s), [1], [a], null);
  node.backfn = () => {
    const g = node.grad![0];
    const ga = a.ensureGrad();
    for (let i = 0; i < a.size; i++) ga[i] += g;
  };
  return node;
}

export function meanAll(a: Var): Var {
  return scale(sumAll(a), 1 / a.size);
}

// ---------------------------------------------------------------------------
// Double-precision normal CDF (Cephes-style rational approximations).

const T_ERF = [9.60497373987051638749e0, 9.00260197203842689217e1,
  2.23200534594684319226e3, 7.00332514112805075473e3,
  5.55923013010394962768e4];
const U_ERF = [3.35617141647503099647e1, 5.21357949780152679795e2,
  4.59432382970980127987e3, 2.26290000613890934246e4,
  4.92673942608635921086e4];
const P_ERFC = [2.46196981473530512524e-10, 5.64189564831068821977e-1,
  7.46321056442269912687e0, 4.86371970985681366614e1,
  1.96520832956077098242e2, 5.26445194995477358631e2,
  9.3452852717195760754e2, 1.02755188689515710272e3,
  5.57535335369399327526e2];
const Q_ERFC = [1.32281951154744992508e1, 8.67072140885989742329e1,
  3.54937778887819891062e2, 9.75708501743205489753e2,
  1.82390916687909736289e3, 2.24633760818710981792e3,
  1.65666309194161350182e3, 5.57535340817727675546e2];
const R_ERFC = [5.64189583547755073984e-1, 1.27536670759978104416e0,
  5.01905042251180477414e0, 6.16021097993053585195e0,
  7.4097426995044893916e0, 2.9788666537210024067e0];
const S_ERFC = [2.2605286322011727659e0, 9.39603524938001434673e0,
  1.20489539808096656605e1, 4.33113462741049715279e1,
  6.28895549861555005414e1, 7.69285127928585421396e1];
const MAXLOG = 708.396418532264;

function polevl(x: number, coef: number[]): number {
  let ans = coef[0];
  for (let i = 1; i < coef.length; i++) ans = ans * x + coef[i];
  return ans;
}

function p1evl(x: number, coef: number[]): number {
  let ans = x + coef[0];
  for (let i = 1; i < coef.length; i++) ans = ans * x + coef[i];
  return ans;
}

export function erf(x: number): number {
  if (Math.abs(x) > 1.0) return 1.0 - erfc(x);
  const z = x * x;
  return (x * polevl(z, T_ERF)) / p1evl(z, U_ERF);
}

export function erfc(a: number): number {
  const x = Math.abs(a);
  if (x < 1.0) return 1.0 - erf(a);
  let z = -a * a;
  if (z < -MAXLOG) return a < 0 ? 2.0 : 0.0;
  z = Math.exp(z);
  let p: number;
  let q: number;
  if (x < 8.0) {
    p = polevl(x, P_ERFC);
    q = p1evl(x, Q_ERFC);
  } else {
    p = polevl(x, R_ERFC);
    q = p1evl(x, S_ERFC);
  }
  let y = (z * p) / q;
  if (a < 0) y = 2.0 - y;
  return y;
}

const SQRTH = Math.SQRT1_2;
const INV_SQRT_2PI = 0.3989422804014327;

export function normalCdfScalar(a: number): number {
  const x = a * SQRTH;
  const z = Math.abs(x);
  if (z < SQRTH) return 0.5 + 0.5 * erf(x);
  let y = 0.5 * erfc(z);
  if (x > 0) y = 1.0 - y;
  return y;
}

export function normalPdfScalar(x: number): number {
  return INV_SQRT_2PI * Math.exp(-0.5 * x * x);
}

export const normalCdf = (a: Var) =>
  unaryOp(a, normalCdfScalar, (x) => normalPdfScalar(x));
