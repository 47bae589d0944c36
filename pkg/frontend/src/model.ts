/**
 * HE-friendly ResNet variants at toy scale, held as an explicit op graph.
 *
 * The graph mirrors the inference toolchain's .hegraph semantics node for
 * node (SAME-padded convs, valid pooling where kernel equals stride,
 * polynomial activations, folded-affine batch norm), so exporting a
 * trained model is a direct serialization of this structure.
 */

import * as tf from "@tensorflow/tfjs";

import { polyAct } from "./poly";

export type Variant = "reference" | "skipless" | "dirac" | "shared-source-dirac";
export const VARIANTS: Variant[] = [
  "reference", "skipless", "dirac", "shared-source-dirac",
];

export type OpSpec =
  | { kind: "Input"; dims: [number, number, number] } // C,H,W
  | { kind: "Conv"; outChannels: number; kernel: number; stride: number; dirac: boolean }
  | { kind: "BatchNorm"; channels: number }
  | { kind: "PolyAct"; degree: number }
  | { kind: "AvgPool"; kernel: number; stride: number }
  | { kind: "Add" }
  | { kind: "Dense"; outFeatures: number }
  | { kind: "Output" };

export interface NodeSpec {
  id: string;
  op: OpSpec;
  inputs: string[];
}

export interface ArchOptions {
  variant: Variant;
  polyDegree?: number;
  baseChannels?: number;
  inputDims?: [number, number, number]; // C,H,W
  numClasses?: number;
  blocksPerStage?: number;
}

export interface ToyModel {
  name: string;
  variant: Variant;
  nodes: NodeSpec[];
  output: string;
  params: Map<string, tf.Variable>;
  bnEps: number;
  /** cached constant identity kernels for dirac convs, keyed by node id */
  diracMasks: Map<string, tf.Tensor>;
}

const BN_EPS = 1e-5;
const BN_MOMENTUM = 0.9;
const EXPANSION = 4;

function convOutSize(size: number, stride: number): number {
  return Math.max(1, Math.ceil(size / stride));
}

/** Build the node list for one variant; ids mirror the inference factory. */
export function buildArch(opts: ArchOptions): { nodes: NodeSpec[]; output: string } {
  const degree = opts.polyDegree ?? 8;
  const base = opts.baseChannels ?? 8;
  const [inC, inH] = opts.inputDims ?? [1, 8, 8];
  const numClasses = opts.numClasses ?? 10;
  const variant = opts.variant;
  const nodes: NodeSpec[] = [];
  const add = (id: string, op: OpSpec, inputs: string[]): string => {
    nodes.push({ id, op, inputs });
    return id;
  };

  let x = add("in", { kind: "Input", dims: [inC, inH, inH] }, []);
  x = add("stem.conv", { kind: "Conv", outChannels: base, kernel: 3, stride: 2, dirac: false }, [x]);
  const stemOut = add("stem.bn", { kind: "BatchNorm", channels: base }, [x]);
  x = add("stem.act", { kind: "PolyAct", degree }, [stemOut]);
  x = add("stem.pool", { kind: "AvgPool", kernel: 2, stride: 2 }, [x]);

  const stemSize = convOutSize(inH, 2);
  let size = Math.floor((stemSize - 2) / 2) + 1;

  let inCh = base;
  const blocks = opts.blocksPerStage ?? 1;
  for (let stage = 0; stage < 4; stage++) {
    const mid = base * 2 ** stage;
    const out = mid * EXPANSION;
    for (let b = 0; b < blocks; b++) {
      const stride = stage > 0 && b === 0 ? 2 : 1;
      const dirac = variant !== "reference" && variant !== "skipless" && stride === 1;
      const p = `s${stage + 1}.b${b + 1}`;
      const entry = x;

      const conv = (tag: string, src: string, oc: number, k: number, s: number,
                    dd: boolean): string => {
        const c = add(`${p}.${tag}`, { kind: "Conv", outChannels: oc, kernel: k, stride: s, dirac: dd }, [src]);
        return add(`${p}.${tag}_bn`, { kind: "BatchNorm", channels: oc }, [c]);
      };

      x = conv("conv1", entry, mid, 1, 1, dirac);
      x = add(`${p}.act1`, { kind: "PolyAct", degree }, [x]);
      x = conv("conv2", x, mid, 3, stride, dirac);
      x = add(`${p}.act2`, { kind: "PolyAct", degree }, [x]);
      x = conv("conv3", x, out, 1, 1, false);

      if (variant === "reference") {
        const shortcut = (stride !== 1 || inCh !== out)
          ? conv("proj", entry, out, 1, stride, false)
          : entry;
        x = add(`${p}.add`, { kind: "Add" }, [shortcut, x]);
      }
      x = add(`${p}.act3`, { kind: "PolyAct", degree }, [x]);
      size = convOutSize(size, stride);
      inCh = out;
    }

    if (variant === "shared-source-dirac") {
      if (stemSize % size !== 0) {
        throw new Error(`stage ${stage + 1} size ${size} does not divide stem size ${stemSize}`);
      }
      const ratio = stemSize / size;
      let a = add(`ssrc.s${stage + 1}.conv`,
                  { kind: "Conv", outChannels: out, kernel: 1, stride: 1, dirac: false },
                  [stemOut]);
      a = add(`ssrc.s${stage + 1}.pool`, { kind: "AvgPool", kernel: ratio, stride: ratio }, [a]);
      x = add(`ssrc.s${stage + 1}.add`, { kind: "Add" }, [a, x]);
    }
  }

  x = add("head.pool", { kind: "AvgPool", kernel: size, stride: size }, [x]);
  x = add("head.fc", { kind: "Dense", outFeatures: numClasses }, [x]);
  const output = add("out", { kind: "Output" }, [x]);
  return { nodes, output };
}

/** Spatial C of each node's output, for initializer shapes. */
function inferChannels(nodes: NodeSpec[]): Map<string, number> {
  const ch = new Map<string, number>();
  for (const node of nodes) {
    switch (node.op.kind) {
      case "Input": ch.set(node.id, node.op.dims[0]); break;
      case "Conv": ch.set(node.id, node.op.outChannels); break;
      case "Dense": ch.set(node.id, node.op.outFeatures); break;
      default: ch.set(node.id, ch.get(node.inputs[0])!);
    }
  }
  return ch;
}

let modelInstances = 0;

export function initModel(opts: ArchOptions, seed: number): ToyModel {
  const { nodes, output } = buildArch(opts);
  const channels = inferChannels(nodes);
  const params = new Map<string, tf.Variable>();
  let next = seed * 7919 + 17;
  const draw = () => next++;
  // tf variable names are engine-global; scope them per model instance
  const scope = `m${modelInstances++}`;
  const mkvar = (key: string, init: tf.Tensor, trainable: boolean) => {
    params.set(key, tf.variable(init, trainable, `${scope}/${key}`));
  };

  for (const node of nodes) {
    const op = node.op;
    if (op.kind === "Conv") {
      const inCh = channels.get(node.inputs[0])!;
      const fanIn = inCh * op.kernel * op.kernel;
      // identity-dominant start for dirac convs: small kernel noise next to
      // a unit identity path, so the net begins near a shallow pass-through
      const scale = (op.dirac ? 0.15 : 1.0) / Math.sqrt(fanIn);
      const kernel = tf.randomNormal(
        [op.kernel, op.kernel, inCh, op.outChannels], 0, scale, "float32", draw());
      mkvar(`${node.id}.kernel`, kernel, true);
      if (op.dirac) {
        mkvar(`${node.id}.dirac`, tf.ones([op.outChannels]), true);
      }
    } else if (op.kind === "BatchNorm") {
      const c = op.channels;
      mkvar(`${node.id}.gamma`, tf.ones([c]), true);
      mkvar(`${node.id}.beta`, tf.zeros([c]), true);
      mkvar(`${node.id}.mmean`, tf.zeros([c]), false);
      mkvar(`${node.id}.mvar`, tf.ones([c]), false);
    } else if (op.kind === "Dense") {
      const inCh = channels.get(node.inputs[0])!;
      mkvar(`${node.id}.kernel`,
            tf.randomNormal([inCh, op.outFeatures], 0, 1 / Math.sqrt(inCh),
                            "float32", draw()), true);
      mkvar(`${node.id}.bias`, tf.zeros([op.outFeatures]), true);
    }
  }
  const name = `toy-${opts.variant}-deg${opts.polyDegree ?? 8}`;
  return { name, variant: opts.variant, nodes, output, params, bnEps: BN_EPS,
           diracMasks: new Map() };
}

function diracKernel(model: ToyModel, node: NodeSpec): tf.Tensor {
  const kernel = model.params.get(`${node.id}.kernel`)!;
  const scale = model.params.get(`${node.id}.dirac`)!;
  const [kh, kw, inCh, outCh] = kernel.shape;
  let mask = model.diracMasks.get(node.id);
  if (!mask) {
    const center = Math.floor(kh / 2);
    const buf = tf.buffer([kh, kw, inCh, outCh]);
    for (let o = 0; o < outCh; o++) {
      buf.set(1, center, center, o % inCh, o);
    }
    mask = tf.keep(buf.toTensor());
    model.diracMasks.set(node.id, mask);
  }
  return kernel.add(mask.mul(scale.reshape([1, 1, 1, outCh])));
}

/** Subsample rows and columns by ``stride`` using reshape + slice only. */
function subsample(x: tf.Tensor4D, stride: number): tf.Tensor4D {
  if (stride === 1) return x;
  const [n, h, w, c] = x.shape;
  const rows = Math.ceil(h / stride);
  const cols = Math.ceil(w / stride);
  let y: tf.Tensor = x;
  if (rows * stride !== h) {
    y = y.pad([[0, 0], [0, rows * stride - h], [0, 0], [0, 0]]);
  }
  y = y.reshape([n, rows, stride, w, c]).slice(
    [0, 0, 0, 0, 0], [n, rows, 1, w, c]).reshape([n, rows, w, c]);
  if (cols * stride !== w) {
    y = y.pad([[0, 0], [0, 0], [0, cols * stride - w], [0, 0]]);
  }
  y = y.reshape([n, rows, cols, stride, c]).slice(
    [0, 0, 0, 0, 0], [n, rows, cols, 1, c]).reshape([n, rows, cols, c]);
  return y as tf.Tensor4D;
}

/**
 * SAME-padded convolution built from pad/slice/concat/matMul so gradients
 * work on backends without dedicated conv-backprop kernels. Semantics
 * match tf.conv2d(x, kernel, stride, "same") exactly.
 */
export function convSame(x: tf.Tensor4D, kernel: tf.Tensor, stride: number): tf.Tensor4D {
  const [n, h, w] = x.shape;
  const [kh, kw, inC, outC] = kernel.shape as [number, number, number, number];
  if (kh === 1 && kw === 1 && stride === 1) {
    const flat = x.reshape([n * h * w, inC]);
    return flat.matMul(kernel.reshape([inC, outC])).reshape([n, h, w, outC]) as tf.Tensor4D;
  }
  const outH = Math.ceil(h / stride);
  const outW = Math.ceil(w / stride);
  const padH = Math.max((outH - 1) * stride + kh - h, 0);
  const padW = Math.max((outW - 1) * stride + kw - w, 0);
  const top = Math.floor(padH / 2);
  const left = Math.floor(padW / 2);
  const padded = x.pad([[0, 0], [top, padH - top], [left, padW - left], [0, 0]]);
  const spanH = (outH - 1) * stride + 1;
  const spanW = (outW - 1) * stride + 1;
  const windows: tf.Tensor[] = [];
  for (let dy = 0; dy < kh; dy++) {
    for (let dx = 0; dx < kw; dx++) {
      const win = padded.slice([0, dy, dx, 0], [n, spanH, spanW, inC]) as tf.Tensor4D;
      windows.push(subsample(win, stride));
    }
  }
  const patches = tf.concat(windows, 3).reshape([n * outH * outW, kh * kw * inC]);
  const flatKernel = kernel.reshape([kh * kw * inC, outC]);
  return patches.matMul(flatKernel).reshape([n, outH, outW, outC]) as tf.Tensor4D;
}

/** Non-overlapping average pooling via reshape + mean (kernel == stride). */
export function avgPoolValid(x: tf.Tensor4D, kernel: number): tf.Tensor4D {
  if (kernel === 1) return x;
  const [n, h, w, c] = x.shape;
  const outH = Math.floor(h / kernel);
  const outW = Math.floor(w / kernel);
  const trimmed = (outH * kernel === h && outW * kernel === w)
    ? x
    : x.slice([0, 0, 0, 0], [n, outH * kernel, outW * kernel, c]) as tf.Tensor4D;
  return trimmed
    .reshape([n, outH, kernel, outW, kernel, c])
    .mean([2, 4]) as tf.Tensor4D;
}

/**
 * Forward pass over NHWC batches. With ``training`` set, batch norm uses
 * batch moments and updates its moving statistics in place.
 */
export function forward(model: ToyModel, x: tf.Tensor4D, training: boolean): tf.Tensor2D {
  const values = new Map<string, tf.Tensor>();
  for (const node of model.nodes) {
    const op = node.op;
    let y: tf.Tensor;
    switch (op.kind) {
      case "Input":
        y = x;
        break;
      case "Conv": {
        const kernel = op.dirac
          ? diracKernel(model, node)
          : model.params.get(`${node.id}.kernel`)!;
        y = convSame(values.get(node.inputs[0]) as tf.Tensor4D, kernel, op.stride);
        break;
      }
      case "BatchNorm": {
        const inp = values.get(node.inputs[0])!;
        const gamma = model.params.get(`${node.id}.gamma`)!;
        const beta = model.params.get(`${node.id}.beta`)!;
        if (training) {
          const { mean, variance } = tf.moments(inp, [0, 1, 2]);
          const mmean = model.params.get(`${node.id}.mmean`)!;
          const mvar = model.params.get(`${node.id}.mvar`)!;
          tf.tidy(() => {
            mmean.assign(mmean.mul(BN_MOMENTUM).add(mean.mul(1 - BN_MOMENTUM)));
            mvar.assign(mvar.mul(BN_MOMENTUM).add(variance.mul(1 - BN_MOMENTUM)));
          });
          y = inp.sub(mean).div(variance.add(model.bnEps).sqrt()).mul(gamma).add(beta);
        } else {
          const mmean = model.params.get(`${node.id}.mmean`)!;
          const mvar = model.params.get(`${node.id}.mvar`)!;
          y = inp.sub(mmean).div(mvar.add(model.bnEps).sqrt()).mul(gamma).add(beta);
        }
        break;
      }
      case "PolyAct":
        y = polyAct(values.get(node.inputs[0])!, op.degree);
        break;
      case "AvgPool":
        if (op.kernel !== op.stride) {
          throw new Error(`toy pools are non-overlapping; got kernel ${op.kernel} stride ${op.stride}`);
        }
        y = avgPoolValid(values.get(node.inputs[0]) as tf.Tensor4D, op.kernel);
        break;
      case "Add":
        y = values.get(node.inputs[0])!.add(values.get(node.inputs[1])!);
        break;
      case "Dense": {
        const inp = values.get(node.inputs[0]) as tf.Tensor4D;
        const [, h, w] = inp.shape;
        if (h !== 1 || w !== 1) {
          throw new Error("dense expects globally pooled 1x1 spatial input");
        }
        const flat = inp.reshape([inp.shape[0], -1]);
        y = flat.matMul(model.params.get(`${node.id}.kernel`) as tf.Tensor2D)
          .add(model.params.get(`${node.id}.bias`)!);
        break;
      }
      case "Output":
        y = values.get(node.inputs[0])!;
        break;
    }
    values.set(node.id, y!);
  }
  return values.get(model.output) as tf.Tensor2D;
}

export function trainableParams(model: ToyModel): tf.Variable[] {
  return [...model.params.values()].filter((v) => v.trainable);
}

export function disposeModel(model: ToyModel): void {
  for (const v of model.params.values()) v.dispose();
  for (const m of model.diracMasks.values()) m.dispose();
  model.params.clear();
  model.diracMasks.clear();
}
