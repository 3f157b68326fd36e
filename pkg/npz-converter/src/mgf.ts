/**
 * Writers for the MGF mesh-graph format and its dataset manifest. Output is
 * deterministic byte for byte: fixed key order and floats printed at 17
 * significant digits (round-trip exact for IEEE doubles).
 */

export interface MgfGraph {
  name: string;
  dim: number;
  coords: Float64Array;                  // n*dim, row-major
  edges: Array<[number, number]>;
  features: Array<[string, Float64Array]>;
  target: { name: string; values: Float64Array } | null;
}

export interface ManifestEntry {
  name: string;
  path: string;
  split: "train" | "test";
  num_nodes: number;
  num_edges: number;
}

export const MGF_VERSION = "1.0";

/** 17-significant-digit decimal, trailing zeros trimmed. */
export function g17(x: number): string {
  if (!Number.isFinite(x)) throw new Error(`non-finite value ${x}`);
  if (x === 0) return Object.is(x, -0) ? "-0" : "0";
  const s = x.toPrecision(17);
  if (s.includes("e")) {
    const [mantissa, exponent] = s.split("e");
    let m = mantissa;
    if (m.includes(".")) m = m.replace(/0+$/, "").replace(/\.$/, "");
    const e = parseInt(exponent, 10);
    const sign = e >= 0 ? "+" : "-";
    return `${m}e${sign}${String(Math.abs(e)).padStart(2, "0")}`;
  }
  if (s.includes(".")) return s.replace(/0+$/, "").replace(/\.$/, "");
  return s;
}

function floatList(values: Float64Array): string {
  const parts = new Array<string>(values.length);
  for (let i = 0; i < values.length; i++) parts[i] = g17(values[i]);
  return `[${parts.join(",")}]`;
}

function pairList(pairs: Array<[number, number]>): string {
  return `[${pairs.map(([i, j]) => `[${i},${j}]`).join(",")}]`;
}

export function dumpsMgf(graph: MgfGraph): string {
  const n = graph.coords.length / graph.dim;
  if (!Number.isInteger(n)) {
    throw new Error(`coords length ${graph.coords.length} is not a multiple `
      + `of dim ${graph.dim}`);
  }
  const features = graph.features
    .map(([name, values]) => `${JSON.stringify(name)}:${floatList(values)}`)
    .join(",");
  const target = graph.target === null ? "null"
    : `{"name":${JSON.stringify(graph.target.name)},`
      + `"values":${floatList(graph.target.values)}}`;
  return "{"
    + `"mgf_version":${JSON.stringify(MGF_VERSION)},`
    + `"name":${JSON.stringify(graph.name)},`
    + `"dim":${graph.dim},`
    + `"num_nodes":${n},`
    + `"coords":${floatList(graph.coords)},`
    + `"edges":${pairList(graph.edges)},`
    + `"features":{${features}},`
    + `"target":${target}`
    + "}\n";
}

export function dumpsManifest(
  dim: number, featureNames: string[], targetName: string,
  entries: ManifestEntry[]): string {
  const doc = {
    mgf_version: MGF_VERSION,
    dim,
    feature_names: featureNames,
    target_name: targetName,
    entries,
  };
  return JSON.stringify(doc, null, 1) + "\n";
}
