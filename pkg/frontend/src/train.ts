/**
 * Training loop: Adam with decoupled weight decay, cross-entropy loss,
 * per-epoch train/test accuracy. Deterministic given (variant, seed).
 */

import * as tf from "@tensorflow/tfjs";

import { ToyTask } from "./dataset";
import { ToyModel, Variant, forward, initModel, trainableParams } from "./model";

export class DivergenceError extends Error {}

export interface TrainConfig {
  epochs: number;
  batchSize: number;
  learningRate: number;
  weightDecay: number;
  optimizer: "adamw";
  seed: number;
  polyDegree: number;
  baseChannels: number;
  blocksPerStage?: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  epochs: 20,
  batchSize: 50,
  learningRate: 1e-3,
  weightDecay: 0.01,
  optimizer: "adamw",
  seed: 0,
  polyDegree: 8,
  baseChannels: 8,
  blocksPerStage: 1,
};

export interface EpochStats {
  epoch: number;
  loss: number;
  trainAcc: number;
  testAcc: number;
}

export interface TrainResult {
  model: ToyModel;
  curve: EpochStats[];
  finalTestAcc: number;
}

function batchTensor(task: ToyTask, images: Float32Array, labels: Int32Array,
                     idx: number[], start: number, size: number):
  { x: tf.Tensor4D; y: tf.Tensor1D } {
  const pixels = task.height * task.width * task.channels;
  const n = Math.min(size, idx.length - start);
  const xs = new Float32Array(n * pixels);
  const ys = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    const s = idx[start + i];
    xs.set(images.subarray(s * pixels, (s + 1) * pixels), i * pixels);
    ys[i] = labels[s];
  }
  return {
    x: tf.tensor4d(xs, [n, task.height, task.width, task.channels]),
    y: tf.tensor1d(ys, "int32"),
  };
}

export function accuracy(model: ToyModel, task: ToyTask,
                         images: Float32Array, labels: Int32Array,
                         batch = 200): number {
  const n = labels.length;
  const idx = Array.from({ length: n }, (_, i) => i);
  let hits = 0;
  for (let at = 0; at < n; at += batch) {
    const { x, y } = batchTensor(task, images, labels, idx, at, batch);
    const pred = tf.tidy(() => forward(model, x, false).argMax(1));
    const ok = tf.tidy(() => pred.equal(y).sum());
    hits += ok.dataSync()[0];
    x.dispose(); y.dispose(); pred.dispose(); ok.dispose();
  }
  return hits / n;
}

export function trainVariant(variant: Variant, task: ToyTask,
                             cfg: TrainConfig = DEFAULT_TRAIN,
                             onEpoch?: (s: EpochStats) => void): TrainResult {
  const model = initModel({
    variant,
    polyDegree: cfg.polyDegree,
    baseChannels: cfg.baseChannels,
    inputDims: [task.channels, task.height, task.width],
    numClasses: task.numClasses,
    blocksPerStage: cfg.blocksPerStage,
  }, cfg.seed);
  const optimizer: tf.Optimizer = tf.train.adam(cfg.learningRate);
  const trainables = trainableParams(model);
  const nTrain = task.trainLabels.length;
  const curve: EpochStats[] = [];

  // deterministic epoch shuffles from the run seed
  let shuffleState = (cfg.seed * 2654435761 + 1013904223) >>> 0;
  const nextShuffle = () => {
    shuffleState = (Math.imul(shuffleState, 1664525) + 1013904223) >>> 0;
    return shuffleState / 4294967296;
  };

  const record = (epoch: number, loss: number) => {
    const stats: EpochStats = {
      epoch,
      loss,
      trainAcc: accuracy(model, task, task.trainImages, task.trainLabels),
      testAcc: accuracy(model, task, task.testImages, task.testLabels),
    };
    curve.push(stats);
    onEpoch?.(stats);
    return stats;
  };

  if (cfg.epochs === 0) {
    record(0, NaN);
    optimizer.dispose();
    return { model, curve, finalTestAcc: curve[curve.length - 1].testAcc };
  }

  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    const idx = Array.from({ length: nTrain }, (_, i) => i);
    for (let i = nTrain - 1; i > 0; i--) {
      const j = Math.floor(nextShuffle() * (i + 1));
      [idx[i], idx[j]] = [idx[j], idx[i]];
    }
    let lossSum = 0;
    let steps = 0;
    for (let at = 0; at < nTrain; at += cfg.batchSize) {
      const { x, y } = batchTensor(task, task.trainImages, task.trainLabels,
                                   idx, at, cfg.batchSize);
      const lossFn = (): tf.Scalar => {
        const logits = forward(model, x, true);
        const oneHot = tf.oneHot(y, task.numClasses);
        return tf.losses.softmaxCrossEntropy(oneHot, logits).asScalar();
      };
      const { value, grads } = tf.variableGrads(lossFn, trainables);
      optimizer.applyGradients(grads);
      // decoupled weight decay on conv/dense kernels only; norm gains,
      // biases, and identity-path scales stay undecayed
      if (cfg.weightDecay > 0) {
        const keep = 1 - cfg.learningRate * cfg.weightDecay;
        for (const v of trainables) {
          if (v.name.endsWith(".kernel")) {
            tf.tidy(() => v.assign(v.mul(keep)));
          }
        }
      }
      const lossVal = value.dataSync()[0];
      value.dispose();
      Object.values(grads).forEach((g) => g.dispose());
      x.dispose(); y.dispose();
      if (!Number.isFinite(lossVal)) {
        optimizer.dispose();
        throw new DivergenceError(
          `loss became ${lossVal} at epoch ${epoch}, step ${steps}`);
      }
      lossSum += lossVal;
      steps += 1;
    }
    record(epoch, lossSum / steps);
  }
  optimizer.dispose();
  return { model, curve, finalTestAcc: curve[curve.length - 1].testAcc };
}

export function curveCsv(curve: EpochStats[]): string {
  const lines = ["epoch,loss,train_acc,test_acc"];
  for (const s of curve) {
    lines.push(`${s.epoch},${Number.isFinite(s.loss) ? s.loss.toFixed(6) : ""},` +
               `${s.trainAcc.toFixed(4)},${s.testAcc.toFixed(4)}`);
  }
  return lines.join("\n") + "\n";
}
