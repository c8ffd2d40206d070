/**
 * Trainer command line.
 *
 *   node dist/cli.js train --lambda 0.01 --distortion mse --levels 2 \
 *        --data synthetic --out model.nlw --seed 0 [--epochs N] [--steps N]
 *        [--patch N] [--batch N] [--lr X] [--latent-channels N]
 *        [--hidden-channels N] [--patience N]
 *
 * --data is either "synthetic" (a built-in gradient/checker/noise set) or a
 * folder of .ppm images.
 */

import { loadFolder, syntheticDataset } from "./data.js";
import { defaultConfig, formatLog, train } from "./train.js";
import { saveWeights } from "./weights.js";
import { DistortionKind } from "./model.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--")) throw new Error(`unexpected argument ${a}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${a}`);
    args.set(a.slice(2), value);
    i++;
  }
  return args;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== "train") {
    console.error("usage: cli.js train --lambda L --data PATH --out FILE ...");
    return 2;
  }
  let args: Map<string, string>;
  try {
    args = parseArgs(rest);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const out = args.get("out");
  if (!out) {
    console.error("--out is required");
    return 2;
  }
  const num = (key: string, dflt: number): number =>
    args.has(key) ? Number(args.get(key)) : dflt;
  const config = defaultConfig({
    lambda: num("lambda", 0.01),
    distortion: (args.get("distortion") ?? "mse") as DistortionKind,
    levels: num("levels", 2),
    latentChannels: num("latent-channels", 8),
    hiddenChannels: num("hidden-channels", 6),
    lr: num("lr", 1e-4),
    patch: num("patch", 64),
    batch: num("batch", 2),
    epochs: num("epochs", 10),
    stepsPerEpoch: num("steps", 20),
    patience: num("patience", 10),
    seed: num("seed", 0),
  });
  if (!["mse", "ms-ssim"].includes(config.distortion)) {
    console.error(`unknown distortion ${config.distortion}`);
    return 2;
  }
  const dataArg = args.get("data") ?? "synthetic";
  let images;
  try {
    images = dataArg === "synthetic"
      ? syntheticDataset(16, Math.max(config.patch, 64), config.seed + 1000)
      : loadFolder(dataArg);
  } catch (err) {
    console.error(String(err));
    return 2;
  }

  const result = train(config, images, (line) => console.log(line));
  const hash = saveWeights(out, result.spec, result.model.exportTensors());
  console.log(`wrote ${out} hash=${hash} ` +
    `best_val_loss=${result.bestValLoss.toFixed(4)}`);
  if (result.logs.length) {
    console.log(formatLog(result.logs[result.logs.length - 1]));
  }
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
