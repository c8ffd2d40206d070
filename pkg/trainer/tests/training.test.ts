/**
 * Training behavior: the 200-step sanity run, early-stopping restore
 * semantics, log format, and the rate-distortion trade-off sweep.
 */

import { describe, expect, it } from "vitest";

import { syntheticDataset, randomCrop } from "../src/data.js";
import {
  EarlyStopper, defaultConfig, formatLog, train,
} from "../src/train.js";
import { Rng } from "../src/rng.js";

describe("training sanity", () => {
  it("200 steps on 16 synthetic 64x64 images strictly reduce the loss", () => {
    const images = syntheticDataset(16, 64, 1000);
    const config = defaultConfig({
      lambda: 0.01, levels: 2, latentChannels: 6, hiddenChannels: 4,
      patch: 64, batch: 2, epochs: 10, stepsPerEpoch: 20, seed: 0,
    });
    const result = train(config, images);
    const final = result.logs[result.logs.length - 1].valLoss;
    expect(result.logs.length).toBe(10);
    expect(final).toBeLessThan(result.initialValLoss);
  }, 120_000);

  it("writes line-oriented structured logs", () => {
    const line = formatLog({ epoch: 3, rateBpp: 1.25, distortion: 42.5,
                             loss: 3.5, valLoss: 3.25 });
    expect(line).toBe(
      "epoch=3 rate_bpp=1.2500 distortion=42.5000 loss=3.5000 " +
      "val_loss=3.2500");
  });
});

describe("early stopping", () => {
  it("stops after patience exhausts and keeps the best snapshot", () => {
    const stopper = new EarlyStopper(3);
    const snap = (v: number) =>
      new Map([["w", Float64Array.of(v)]]);
    expect(stopper.update(5.0, snap(1))).toBe(false);
    expect(stopper.update(4.0, snap(2))).toBe(false);
    expect(stopper.update(4.5, snap(3))).toBe(false);
    expect(stopper.update(4.6, snap(4))).toBe(false);
    expect(stopper.update(4.7, snap(5))).toBe(true);
    expect(stopper.best).toBe(4.0);
    expect(stopper.bestSnapshot!.get("w")![0]).toBe(2);
  });

  it("restores the best parameters, not the last", () => {
    // A raised learning rate makes validation drift upward after its best
    // epoch; the returned parameters must reproduce the best loss, not the
    // final one.
    const images = syntheticDataset(8, 32, 3000);
    const config = defaultConfig({
      lambda: 0.01, levels: 1, latentChannels: 4, hiddenChannels: 3,
      patch: 32, batch: 1, epochs: 6, stepsPerEpoch: 5, seed: 2, lr: 0.003,
      patience: 50,
    });
    const result = train(config, images);
    const vals = result.logs.map((l) => l.valLoss);
    expect(Math.min(...vals)).toBeLessThan(vals[vals.length - 1]);
    const valRng = new Rng(9999);
    const valCrops = images.slice(-1).map((im) => randomCrop(im, 32, valRng));
    const lossNow = result.model.evalLoss(valCrops, 32, 32, config.lambda,
                                          config.distortion);
    expect(lossNow).toBeCloseTo(result.bestValLoss, 8);
    const minLogged = Math.min(...result.logs.map((l) => l.valLoss));
    expect(result.bestValLoss).toBeCloseTo(minLogged, 10);
  }, 60_000);
});

describe("lambda sweep", () => {
  function sweep(seed: number) {
    const images = syntheticDataset(12, 64, 500);
    const evalRng = new Rng(777);
    const crops = images.slice(0, 6).map((im) => randomCrop(im, 32, evalRng));
    const points: { lambda: number; bpp: number; mse: number }[] = [];
    for (const lambda of [0.001, 0.01, 0.1]) {
      const config = defaultConfig({
        lambda, levels: 2, latentChannels: 4, hiddenChannels: 3,
        patch: 32, batch: 2, epochs: 20, stepsPerEpoch: 40, seed, lr: 5e-4,
      });
      const result = train(config, images);
      let bpp = 0;
      let mse = 0;
      for (const crop of crops) {
        const m = result.model.measure(crop, 32, 32);
        bpp += m.bpp / crops.length;
        mse += m.mse / crops.length;
      }
      points.push({ lambda, bpp, mse });
    }
    return points;
  }

  function monotone(points: { bpp: number; mse: number }[]): boolean {
    // Larger lambda must not lower the rate or raise the distortion;
    // allow 0.5% measurement noise.
    for (let i = 1; i < points.length; i++) {
      if (points[i].bpp < points[i - 1].bpp * 0.995) return false;
      if (points[i].mse > points[i - 1].mse * 1.005) return false;
    }
    return true;
  }

  it("trades rate for distortion monotonically (one retry)", () => {
    let points = sweep(3);
    if (!monotone(points)) points = sweep(4);
    expect(monotone(points)).toBe(true);
    // The spread itself must be real: the extreme lambdas differ in rate.
    expect(points[2].bpp).toBeGreaterThan(points[0].bpp * 1.05);
  }, 300_000);
});
