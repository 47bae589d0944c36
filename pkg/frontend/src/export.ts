/**
 * Export a trained toy model as a .hegraph document plus a .hetensors
 * weight container, the file formats the inference toolchain consumes.
 *
 * Layout conversions at the boundary: conv kernels go from [kh,kw,in,out]
 * to [out,in,kh,kw]; dense kernels from [in,out] to [out,in] (the dense
 * input is globally pooled to 1x1, so flattening order is moot); batch
 * norm is folded into per-channel scale/shift using the moving statistics.
 */

import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";

import { NodeSpec, ToyModel } from "./model";

export class ExportError extends Error {}

interface HegraphNode {
  id: string;
  op: string;
  attrs: Record<string, unknown>;
  inputs: string[];
}

function nodeToHegraph(node: NodeSpec): HegraphNode {
  const { id, op, inputs } = node;
  switch (op.kind) {
    case "Input":
      return { id, op: "Input", attrs: { dims: op.dims }, inputs };
    case "Conv":
      return {
        id, op: "Conv",
        attrs: { out_channels: op.outChannels, kernel: op.kernel,
                 stride: op.stride, dirac: op.dirac },
        inputs,
      };
    case "BatchNorm":
      return { id, op: "BatchNorm", attrs: {}, inputs };
    case "PolyAct":
      return { id, op: "PolyAct", attrs: { degree: op.degree }, inputs };
    case "AvgPool":
      return { id, op: "AvgPool", attrs: { kernel: op.kernel, stride: op.stride }, inputs };
    case "Add":
      return { id, op: "Add", attrs: {}, inputs };
    case "Dense":
      return { id, op: "Dense", attrs: { out_features: op.outFeatures }, inputs };
    case "Output":
      return { id, op: "Output", attrs: {}, inputs };
    default:
      throw new ExportError(`unsupported op in export: ${(op as { kind: string }).kind}`);
  }
}

export function toHegraph(model: ToyModel): string {
  const doc = {
    name: model.name,
    nodes: model.nodes.map(nodeToHegraph),
    outputs: [model.output],
  };
  return JSON.stringify(doc, null, 2) + "\n";
}

export interface NamedTensor {
  dims: number[];
  data: Float32Array;
}

export function collectWeights(model: ToyModel): Map<string, NamedTensor> {
  const out = new Map<string, NamedTensor>();
  const grab = (name: string): tf.Variable => {
    const v = model.params.get(name);
    if (!v) throw new ExportError(`missing parameter ${name}`);
    return v;
  };
  for (const node of model.nodes) {
    const op = node.op;
    if (op.kind === "Conv") {
      const kernel = grab(`${node.id}.kernel`);
      const perm = tf.tidy(() => kernel.transpose([3, 2, 0, 1]));
      out.set(`${node.id}.weight`, {
        dims: perm.shape.slice(),
        data: perm.dataSync() as Float32Array,
      });
      perm.dispose();
      if (op.dirac) {
        const scale = grab(`${node.id}.dirac`);
        out.set(`${node.id}.dirac`, {
          dims: scale.shape.slice(),
          data: scale.dataSync() as Float32Array,
        });
      }
    } else if (op.kind === "BatchNorm") {
      const fold = tf.tidy(() => {
        const gamma = grab(`${node.id}.gamma`);
        const beta = grab(`${node.id}.beta`);
        const mmean = grab(`${node.id}.mmean`);
        const mvar = grab(`${node.id}.mvar`);
        const scale = gamma.div(mvar.add(model.bnEps).sqrt());
        const shift = beta.sub(mmean.mul(scale));
        return { scale: scale.dataSync() as Float32Array,
                 shift: shift.dataSync() as Float32Array,
                 dims: gamma.shape.slice() };
      });
      out.set(`${node.id}.scale`, { dims: fold.dims, data: fold.scale });
      out.set(`${node.id}.shift`, { dims: fold.dims, data: fold.shift });
    } else if (op.kind === "Dense") {
      const kernel = grab(`${node.id}.kernel`);
      const bias = grab(`${node.id}.bias`);
      const perm = tf.tidy(() => kernel.transpose([1, 0]));
      out.set(`${node.id}.weight`, {
        dims: perm.shape.slice(),
        data: perm.dataSync() as Float32Array,
      });
      perm.dispose();
      out.set(`${node.id}.bias`, {
        dims: bias.shape.slice(),
        data: bias.dataSync() as Float32Array,
      });
    }
  }
  return out;
}

const MAGIC = Buffer.from("HETN", "ascii");
const VERSION = 1;

export function tensorsToBuffer(tensors: Map<string, NamedTensor>): Buffer {
  const chunks: Buffer[] = [];
  const u32 = (v: number) => {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v >>> 0, 0);
    return b;
  };
  chunks.push(MAGIC, u32(VERSION), u32(tensors.size));
  for (const [name, tensor] of tensors) {
    const rawName = Buffer.from(name, "utf-8");
    chunks.push(u32(rawName.length), rawName, u32(tensor.dims.length));
    for (const d of tensor.dims) chunks.push(u32(d));
    const size = tensor.dims.reduce((a, b) => a * b, 1);
    if (tensor.data.length !== size) {
      throw new ExportError(
        `tensor ${name}: payload ${tensor.data.length} != dims product ${size}`);
    }
    chunks.push(Buffer.from(tensor.data.buffer, tensor.data.byteOffset,
                            tensor.data.byteLength));
  }
  return Buffer.concat(chunks);
}

export function readTensors(file: string): Map<string, NamedTensor> {
  const blob = fs.readFileSync(file);
  if (!blob.subarray(0, 4).equals(MAGIC)) {
    throw new ExportError(`${file}: bad magic`);
  }
  const count = blob.readUInt32LE(8);
  let off = 12;
  const out = new Map<string, NamedTensor>();
  for (let i = 0; i < count; i++) {
    const nameLen = blob.readUInt32LE(off); off += 4;
    const name = blob.subarray(off, off + nameLen).toString("utf-8"); off += nameLen;
    const ndim = blob.readUInt32LE(off); off += 4;
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) { dims.push(blob.readUInt32LE(off)); off += 4; }
    const size = dims.reduce((a, b) => a * b, 1);
    const data = new Float32Array(size);
    for (let k = 0; k < size; k++) { data[k] = blob.readFloatLE(off); off += 4; }
    out.set(name, { dims, data });
  }
  return out;
}

export interface ExportPaths {
  graph: string;
  weights: string;
}

/** Write model.hegraph and weights.hetensors into ``dir``. */
export function exportModel(model: ToyModel, dir: string): ExportPaths {
  fs.mkdirSync(dir, { recursive: true });
  const graph = path.join(dir, `${model.name}.hegraph`);
  const weights = path.join(dir, `${model.name}.hetensors`);
  fs.writeFileSync(graph, toHegraph(model), "utf-8");
  fs.writeFileSync(weights, tensorsToBuffer(collectWeights(model)));
  return { graph, weights };
}

/** Save arbitrary named tensors (e.g. an input sample) as .hetensors. */
export function saveTensors(file: string, tensors: Map<string, NamedTensor>): void {
  fs.writeFileSync(file, tensorsToBuffer(tensors));
}
