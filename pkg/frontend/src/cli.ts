/**
 * Training harness CLI.
 *
 *   ts-node src/cli.ts train --variant shared-source-dirac --epochs 20 \
 *       --seed 0 --out runs/ssd0
 *
 * Writes accuracy.csv (epoch, loss, train_acc, test_acc), the exported
 * .hegraph/.hetensors pair, and meta.json. `--dataset cifar10 --data-dir
 * <dir>` switches to locally provided CIFAR-10 binaries.
 */

import * as fs from "fs";
import * as path from "path";

import { ensureBackend } from "./backend";
import { cifarTask, syntheticTask, ToyTask } from "./dataset";
import { exportModel } from "./export";
import { Variant, VARIANTS, disposeModel } from "./model";
import { DEFAULT_TRAIN, TrainConfig, curveCsv, trainVariant } from "./train";

interface Args {
  variant: Variant;
  epochs: number;
  seed: number;
  out: string;
  dataset: "synthetic" | "cifar10";
  dataDir?: string;
  batchSize: number;
  learningRate: number;
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== "train") {
    throw new Error(`unknown command ${argv[0] ?? "(none)"}; expected "train"`);
  }
  const out: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed option ${key}`);
    }
    out[key.slice(2)] = argv[i + 1];
  }
  const variant = (out["variant"] ?? "shared-source-dirac") as Variant;
  if (!VARIANTS.includes(variant)) {
    throw new Error(`unknown variant ${variant}; expected one of ${VARIANTS.join(", ")}`);
  }
  const dataset = (out["dataset"] ?? "synthetic") as Args["dataset"];
  if (dataset !== "synthetic" && dataset !== "cifar10") {
    throw new Error(`unknown dataset ${dataset}`);
  }
  return {
    variant,
    epochs: Number(out["epochs"] ?? DEFAULT_TRAIN.epochs),
    seed: Number(out["seed"] ?? 0),
    out: out["out"] ?? "runs/latest",
    dataset,
    dataDir: out["data-dir"],
    batchSize: Number(out["batch-size"] ?? DEFAULT_TRAIN.batchSize),
    learningRate: Number(out["lr"] ?? DEFAULT_TRAIN.learningRate),
  };
}

export async function main(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  console.log(`backend: ${await ensureBackend()}`);
  const task: ToyTask = args.dataset === "cifar10"
    ? cifarTask(args.dataDir ?? "./cifar-10-batches-bin", args.seed)
    : syntheticTask({ seed: args.seed });
  const cfg: TrainConfig = {
    ...DEFAULT_TRAIN,
    epochs: args.epochs,
    seed: args.seed,
    batchSize: args.batchSize,
    learningRate: args.learningRate,
  };
  console.log(`training ${args.variant} for ${cfg.epochs} epochs (seed ${cfg.seed})`);
  const result = trainVariant(args.variant, task, cfg, (s) => {
    console.log(`epoch ${s.epoch}: loss=${s.loss.toFixed(4)} ` +
                `train=${(s.trainAcc * 100).toFixed(1)}% test=${(s.testAcc * 100).toFixed(1)}%`);
  });
  fs.mkdirSync(args.out, { recursive: true });
  fs.writeFileSync(path.join(args.out, "accuracy.csv"), curveCsv(result.curve), "utf-8");
  const paths = exportModel(result.model, args.out);
  fs.writeFileSync(path.join(args.out, "meta.json"), JSON.stringify({
    variant: args.variant,
    seed: args.seed,
    epochs: cfg.epochs,
    final_test_acc: result.finalTestAcc,
    graph: path.basename(paths.graph),
    weights: path.basename(paths.weights),
  }, null, 2) + "\n", "utf-8");
  console.log(`final test accuracy ${(result.finalTestAcc * 100).toFixed(2)}%`);
  console.log(`wrote ${args.out}/accuracy.csv, ${paths.graph}, ${paths.weights}`);
  disposeModel(result.model);
  return 0;
}

if (require.main === module) {
  main(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(String(err));
      process.exit(err instanceof Error && err.name === "DivergenceError" ? 1 : 2);
    });
}
