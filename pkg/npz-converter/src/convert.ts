import * as fs from "node:fs";
import * as path from "node:path";

import { ElementKind, edgesFromElements, symmetrize } from "./edges.js";
import { ManifestEntry, MgfGraph, dumpsManifest, dumpsMgf } from "./mgf.js";
import { NpyArray } from "./npy.js";
import { parseNpz } from "./npz.js";

export interface TargetSpec {
  array: string;
  time_axis: number | null;
  component: number | null;
}

export interface MappingConfig {
  coords: string;
  elements?: string;
  edges?: string;
  element_kind?: ElementKind;
  features: Record<string, string>;   // MGF feature name -> archive array name
  target: TargetSpec;
  train_count: number;
}

export function loadMapping(filePath: string): MappingConfig {
  const doc = JSON.parse(fs.readFileSync(filePath, "utf-8"));
  for (const key of ["coords", "features", "target", "train_count"]) {
    if (!(key in doc)) throw new Error(`mapping config missing '${key}'`);
  }
  if (!doc.elements && !doc.edges) {
    throw new Error("mapping config needs 'elements' (with 'element_kind') or 'edges'");
  }
  if (doc.elements && !doc.element_kind) {
    throw new Error("mapping config with 'elements' needs 'element_kind'");
  }
  return doc as MappingConfig;
}

function require2d(a: NpyArray, what: string): void {
  if (a.shape.length !== 2) {
    throw new Error(`${what} must be 2-dimensional, got shape [${a.shape}]`);
  }
}

/** Drop `axis`, keeping the final index along it (the last time step). */
export function takeLastAlongAxis(a: NpyArray, axis: number): NpyArray {
  if (axis < 0 || axis >= a.shape.length) {
    throw new Error(`time axis ${axis} out of range for shape [${a.shape}]`);
  }
  const outShape = a.shape.filter((_, d) => d !== axis);
  const count = outShape.reduce((x, y) => x * y, 1);
  const strides = new Array<number>(a.shape.length);
  let acc = 1;
  for (let d = a.shape.length - 1; d >= 0; d--) {
    strides[d] = acc;
    acc *= a.shape[d];
  }
  const base = (a.shape[axis] - 1) * strides[axis];
  const outDims = outShape.length;
  const outStrides = new Array<number>(outDims);
  let oacc = 1;
  for (let d = outDims - 1; d >= 0; d--) {
    outStrides[d] = oacc;
    oacc *= outShape[d];
  }
  const inStrides = strides.filter((_, d) => d !== axis);
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    let rem = i;
    let src = base;
    for (let d = 0; d < outDims; d++) {
      const idx = Math.floor(rem / outStrides[d]);
      rem -= idx * outStrides[d];
      src += idx * inStrides[d];
    }
    data[i] = a.data[src];
  }
  return { data, shape: outShape };
}

/** Select one column of the trailing axis. */
export function takeComponent(a: NpyArray, component: number): NpyArray {
  const width = a.shape[a.shape.length - 1];
  if (component < 0 || component >= width) {
    throw new Error(`component ${component} out of range for shape [${a.shape}]`);
  }
  const outShape = a.shape.slice(0, -1);
  const count = outShape.reduce((x, y) => x * y, 1);
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) data[i] = a.data[i * width + component];
  return { data, shape: outShape };
}

export function extractTarget(arrays: Record<string, NpyArray>,
                              spec: TargetSpec, n: number,
                              shapeName: string): Float64Array {
  let arr = arrays[spec.array];
  if (!arr) throw new Error(`${shapeName}: missing target array '${spec.array}'`);
  if (spec.time_axis !== null && spec.time_axis !== undefined) {
    arr = takeLastAlongAxis(arr, spec.time_axis);
  }
  if (spec.component !== null && spec.component !== undefined) {
    arr = takeComponent(arr, spec.component);
  }
  const flatLength = arr.shape.reduce((x, y) => x * y, 1);
  if (arr.shape.length !== 1 || flatLength !== n) {
    throw new Error(`${shapeName}: target reduces to shape [${arr.shape}], `
      + `expected [${n}]`);
  }
  return arr.data;
}

export function convertShape(name: string, archive: Uint8Array,
                             mapping: MappingConfig): MgfGraph {
  const arrays = parseNpz(archive);
  const coordsArr = arrays[mapping.coords];
  if (!coordsArr) throw new Error(`${name}: missing coords array '${mapping.coords}'`);
  require2d(coordsArr, `${name}: coords`);
  const [n, dim] = coordsArr.shape;
  if (dim !== 2 && dim !== 3) {
    throw new Error(`${name}: coords must be n x 2 or n x 3, got n x ${dim}`);
  }

  let edges: Array<[number, number]>;
  if (mapping.elements) {
    const elemArr = arrays[mapping.elements];
    if (!elemArr) throw new Error(`${name}: missing elements array '${mapping.elements}'`);
    require2d(elemArr, `${name}: elements`);
    const [m, arity] = elemArr.shape;
    const elements: number[][] = [];
    for (let e = 0; e < m; e++) {
      const row = new Array<number>(arity);
      for (let k = 0; k < arity; k++) row[k] = elemArr.data[e * arity + k];
      elements.push(row);
    }
    edges = edgesFromElements(elements, mapping.element_kind as ElementKind);
  } else {
    const edgeArr = arrays[mapping.edges as string];
    if (!edgeArr) throw new Error(`${name}: missing edges array '${mapping.edges}'`);
    require2d(edgeArr, `${name}: edges`);
    const pairs: Array<[number, number]> = [];
    for (let e = 0; e < edgeArr.shape[0]; e++) {
      pairs.push([edgeArr.data[2 * e], edgeArr.data[2 * e + 1]]);
    }
    edges = symmetrize(pairs);
  }
  for (const [i, j] of edges) {
    if (i < 0 || i >= n || j < 0 || j >= n) {
      throw new Error(`${name}: edge (${i}, ${j}) out of node range [0, ${n})`);
    }
  }

  const features: Array<[string, Float64Array]> = [];
  for (const [featName, arrayName] of Object.entries(mapping.features)) {
    const arr = arrays[arrayName];
    if (!arr) throw new Error(`${name}: missing feature array '${arrayName}'`);
    const flat = arr.shape.reduce((x, y) => x * y, 1);
    if (flat !== n) {
      throw new Error(`${name}: feature '${featName}' has ${flat} values, `
        + `expected ${n}`);
    }
    features.push([featName, arr.data]);
  }

  const target = extractTarget(arrays, mapping.target, n, name);
  return {
    name, dim,
    coords: coordsArr.data,
    edges,
    features,
    target: { name: mapping.target.array, values: target },
  };
}

export interface ConvertResult {
  manifestPath: string;
  entries: ManifestEntry[];
}

export function convert(archiveDir: string, mapping: MappingConfig,
                        outDir: string): ConvertResult {
  const files = fs.readdirSync(archiveDir)
    .filter((f) => f.endsWith(".npz"))
    .sort();
  if (files.length === 0) {
    throw new Error(`no .npz archives under ${archiveDir}`);
  }
  fs.mkdirSync(outDir, { recursive: true });
  const entries: ManifestEntry[] = [];
  let dim: number | null = null;
  files.forEach((file, index) => {
    const name = file.replace(/\.npz$/, "");
    const graph = convertShape(
      name, fs.readFileSync(path.join(archiveDir, file)), mapping);
    if (dim === null) dim = graph.dim;
    else if (dim !== graph.dim) {
      throw new Error(`${name}: dimension ${graph.dim} differs from ${dim}`);
    }
    const outName = `${name}.mgf.json`;
    fs.writeFileSync(path.join(outDir, outName), dumpsMgf(graph));
    entries.push({
      name,
      path: outName,
      split: index < mapping.train_count ? "train" : "test",
      num_nodes: graph.coords.length / graph.dim,
      num_edges: graph.edges.length,
    });
  });
  const manifestPath = path.join(outDir, "manifest.json");
  fs.writeFileSync(manifestPath, dumpsManifest(
    dim ?? 0, Object.keys(mapping.features), mapping.target.array,
    entries));
  return { manifestPath, entries };
}
