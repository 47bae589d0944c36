/**
 * Toy classification task: ten fixed spatial templates under heavy noise.
 *
 * Everything is generated from explicit seeds with a local PRNG, so splits
 * and samples are bit-reproducible across runs and platforms. An optional
 * CIFAR-10 mode reads the standard binary batches from a local directory
 * and downscales them to the toy geometry.
 */

import * as fs from "fs";
import * as path from "path";

export interface ToyTask {
  height: number;
  width: number;
  channels: number;
  numClasses: number;
  trainImages: Float32Array; // [n, h, w, c] row-major
  trainLabels: Int32Array;
  testImages: Float32Array;
  testLabels: Int32Array;
}

/** mulberry32: small, fast, reproducible. */
export function makeRng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rng: () => number): number {
  // Box-Muller; rejects the zero corner to stay finite
  let u = 0;
  while (u === 0) u = rng();
  const v = rng();
  return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
}

export interface SyntheticOptions {
  seed?: number;
  trainPerClass?: number;
  testPerClass?: number;
  noiseSigma?: number;
  size?: number;
  templateStyle?: "dense" | "sparse";
}

/**
 * Class templates are either unit-normalized noise images ("dense") or a
 * few strong class-specific spikes ("sparse"); samples scale a template
 * and bury it in Gaussian noise. The sparse style keeps the signal in
 * fine spatial detail, which indiscriminate mixing destroys.
 */
export function syntheticTask(opts: SyntheticOptions = {}): ToyTask {
  const seed = opts.seed ?? 0;
  const trainPerClass = opts.trainPerClass ?? 100;
  const testPerClass = opts.testPerClass ?? 40;
  const sigma = opts.noiseSigma ?? 1.0;
  const size = opts.size ?? 8;
  const style = opts.templateStyle ?? "sparse";
  const numClasses = 10;
  const pixels = size * size;

  const templateRng = makeRng(0xbeef); // templates shared across seeds
  const templates: Float32Array[] = [];
  for (let c = 0; c < numClasses; c++) {
    const t = new Float32Array(pixels);
    if (style === "sparse") {
      const spikes = 6;
      for (let s = 0; s < spikes; s++) {
        const at = Math.floor(templateRng() * pixels);
        t[at] += templateRng() < 0.5 ? -2.5 : 2.5;
      }
    } else {
      let norm = 0;
      for (let i = 0; i < pixels; i++) {
        t[i] = gaussian(templateRng);
        norm += t[i] * t[i];
      }
      norm = Math.sqrt(norm / pixels);
      for (let i = 0; i < pixels; i++) t[i] /= norm;
    }
    templates.push(t);
  }

  const sample = (rng: () => number, label: number, out: Float32Array, at: number) => {
    const amp = 0.8 + 0.4 * rng();
    const t = templates[label];
    for (let i = 0; i < pixels; i++) {
      out[at + i] = amp * t[i] + sigma * gaussian(rng);
    }
  };

  const make = (perClass: number, rng: () => number) => {
    const n = perClass * numClasses;
    const images = new Float32Array(n * pixels);
    const labels = new Int32Array(n);
    // label-balanced, then shuffled deterministically
    const order = Array.from({ length: n }, (_, i) => i);
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    for (let i = 0; i < n; i++) {
      const label = i % numClasses;
      const slot = order[i];
      labels[slot] = label;
      sample(rng, label, images, slot * pixels);
    }
    return { images, labels };
  };

  const train = make(trainPerClass, makeRng(1000 + seed));
  const test = make(testPerClass, makeRng(2000 + seed));
  return {
    height: size,
    width: size,
    channels: 1,
    numClasses,
    trainImages: train.images,
    trainLabels: train.labels,
    testImages: test.images,
    testLabels: test.labels,
  };
}

/**
 * CIFAR-10 from the standard binary batches, grayscaled and average-pooled
 * down to the toy geometry. Exists behind a flag for anyone with the data
 * locally; this repository ships no datasets.
 */
export function cifarTask(dataDir: string, seed: number, size = 8,
                          trainCap = 10_000, testCap = 2_000): ToyTask {
  const trainFiles = [1, 2].map((i) => path.join(dataDir, `data_batch_${i}.bin`));
  const testFile = path.join(dataDir, "test_batch.bin");
  for (const f of [...trainFiles, testFile]) {
    if (!fs.existsSync(f)) {
      throw new Error(
        `CIFAR-10 binary batch not found: ${f}. Download and extract ` +
        `cifar-10-binary.tar.gz locally and pass --data-dir.`);
    }
  }
  const read = (file: string, cap: number) => {
    const raw = fs.readFileSync(file);
    const record = 1 + 3072;
    const n = Math.min(Math.floor(raw.length / record), cap);
    const images = new Float32Array(n * size * size);
    const labels = new Int32Array(n);
    const factor = 32 / size;
    for (let i = 0; i < n; i++) {
      labels[i] = raw[i * record];
      const base = i * record + 1;
      for (let y = 0; y < size; y++) {
        for (let x = 0; x < size; x++) {
          let acc = 0;
          for (let dy = 0; dy < factor; dy++) {
            for (let dx = 0; dx < factor; dx++) {
              const yy = y * factor + dy;
              const xx = x * factor + dx;
              const r = raw[base + yy * 32 + xx];
              const g = raw[base + 1024 + yy * 32 + xx];
              const b = raw[base + 2048 + yy * 32 + xx];
              acc += (r + g + b) / 3;
            }
          }
          images[(i * size + y) * size + x] =
            acc / (factor * factor * 127.5) - 1.0;
        }
      }
    }
    return { images, labels };
  };
  const parts = trainFiles.map((f) => read(f, Math.ceil(trainCap / trainFiles.length)));
  const trainN = parts.reduce((a, p) => a + p.labels.length, 0);
  const trainImages = new Float32Array(trainN * size * size);
  const trainLabels = new Int32Array(trainN);
  let at = 0;
  for (const p of parts) {
    trainImages.set(p.images, at * size * size);
    trainLabels.set(p.labels, at);
    at += p.labels.length;
  }
  const test = read(testFile, testCap);
  return {
    height: size,
    width: size,
    channels: 1,
    numClasses: 10,
    trainImages,
    trainLabels,
    testImages: test.images,
    testLabels: test.labels,
  };
}
