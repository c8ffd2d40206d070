/**
 * Adam training loop with per-epoch validation, early stopping that
 * restores the best parameters, and line-oriented structured logging.
 */

import { CodecModel, DistortionKind } from "./model.js";
import { Image, randomCrop } from "./data.js";
import { NetworkSpec, defaultNetworkSpec, totalDownsampling } from "./nn.js";
import { Rng } from "./rng.js";

export interface TrainConfig {
  lambda: number;
  distortion: DistortionKind;
  levels: number;
  latentChannels: number;
  hiddenChannels: number;
  lr: number;
  patch: number;
  batch: number;
  epochs: number;
  stepsPerEpoch: number;
  patience: number;
  seed: number;
}

export function defaultConfig(overrides: Partial<TrainConfig> = {}): TrainConfig {
  return {
    lambda: 0.01,
    distortion: "mse",
    levels: 2,
    latentChannels: 8,
    hiddenChannels: 6,
    lr: 1e-4,
    patch: 64,
    batch: 2,
    epochs: 10,
    stepsPerEpoch: 20,
    patience: 10,
    seed: 0,
    ...overrides,
  };
}

export class Adam {
  private readonly m = new Map<string, Float64Array>();
  private readonly v = new Map<string, Float64Array>();
  private t = 0;
  readonly beta1 = 0.9;
  readonly beta2 = 0.999;
  readonly eps = 1e-8;

  constructor(readonly lr: number) {}

  step(model: CodecModel): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (const name of model.trainableNames) {
      const p = model.params.get(name)!;
      if (!p.grad) continue;
      let m = this.m.get(name);
      let v = this.v.get(name);
      if (!m) {
        m = new Float64Array(p.size);
        v = new Float64Array(p.size);
        this.m.set(name, m);
        this.v.set(name, v!);
      }
      const g = p.grad;
      for (let i = 0; i < p.size; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v![i] = this.beta2 * v![i] + (1 - this.beta2) * g[i] * g[i];
        p.data[i] -= this.lr * (m[i] / c1) /
          (Math.sqrt(v![i] / c2) + this.eps);
      }
    }
    model.project();
  }
}

/** Tracks the best validation loss and restores those parameters on stop. */
export class EarlyStopper {
  best = Infinity;
  bestSnapshot: Map<string, Float64Array> | null = null;
  private wait = 0;

  constructor(readonly patience: number) {}

  /** Returns true when training should stop. */
  update(valLoss: number, snapshot: Map<string, Float64Array>): boolean {
    if (valLoss < this.best) {
      this.best = valLoss;
      this.bestSnapshot = snapshot;
      this.wait = 0;
      return false;
    }
    this.wait += 1;
    return this.wait >= this.patience;
  }
}

export interface EpochLog {
  epoch: number;
  rateBpp: number;
  distortion: number;
  loss: number;
  valLoss: number;
}

export function formatLog(entry: EpochLog): string {
  return `epoch=${entry.epoch} rate_bpp=${entry.rateBpp.toFixed(4)} ` +
    `distortion=${entry.distortion.toFixed(4)} loss=${entry.loss.toFixed(4)} ` +
    `val_loss=${entry.valLoss.toFixed(4)}`;
}

export interface TrainResult {
  model: CodecModel;
  spec: NetworkSpec;
  logs: EpochLog[];
  bestValLoss: number;
  /** Validation loss of the freshly initialized model, before any update. */
  initialValLoss: number;
}

function centerCrop(img: Image, patch: number, rng: Rng): Float64Array {
  return randomCrop(img, patch, rng);
}

export function train(config: TrainConfig, images: Image[],
                      onLog?: (line: string) => void): TrainResult {
  if (!images.length) throw new Error("training needs at least one image");
  const spec = defaultNetworkSpec(config.levels, config.latentChannels,
                                  config.hiddenChannels);
  const f = totalDownsampling(spec);
  if (config.patch % f) {
    throw new Error(`patch ${config.patch} not divisible by factor ${f}`);
  }
  const model = CodecModel.init(spec, config.seed);
  const adam = new Adam(config.lr);
  const stopper = new EarlyStopper(config.patience);
  const rng = new Rng(config.seed + 1);

  const nVal = Math.max(1, Math.floor(images.length / 8));
  const trainSet = images.length > nVal ? images.slice(0, -nVal) : images;
  const valSet = images.slice(-nVal);
  const valRng = new Rng(9999);
  const valCrops = valSet.map((im) => centerCrop(im, config.patch, valRng));
  const initialValLoss = model.evalLoss(valCrops, config.patch, config.patch,
                                        config.lambda, config.distortion);

  const logs: EpochLog[] = [];
  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    let lossAcc = 0;
    let bppAcc = 0;
    let distAcc = 0;
    for (let step = 0; step < config.stepsPerEpoch; step++) {
      const batch: Float64Array[] = [];
      for (let b = 0; b < config.batch; b++) {
        const img = trainSet[rng.int(trainSet.length)];
        batch.push(randomCrop(img, config.patch, rng));
      }
      const stats = model.trainStep(batch, config.patch, config.patch,
                                    config.lambda, config.distortion, rng);
      adam.step(model);
      lossAcc += stats.loss;
      bppAcc += stats.bpp;
      distAcc += stats.distortion;
    }
    const valLoss = model.evalLoss(valCrops, config.patch, config.patch,
                                   config.lambda, config.distortion);
    const entry: EpochLog = {
      epoch,
      rateBpp: bppAcc / config.stepsPerEpoch,
      distortion: distAcc / config.stepsPerEpoch,
      loss: lossAcc / config.stepsPerEpoch,
      valLoss,
    };
    logs.push(entry);
    onLog?.(formatLog(entry));
    if (stopper.update(valLoss, model.snapshot())) break;
  }
  if (stopper.bestSnapshot) model.restore(stopper.bestSnapshot);
  return { model, spec, logs, bestValLoss: stopper.best, initialValLoss };
}
