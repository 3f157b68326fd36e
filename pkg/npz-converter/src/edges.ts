/**
 * Element-to-edge conversion matching the Python package's rule exactly:
 * triangles contribute 3 undirected edges, hexahedra 12 (corners 0-3 the
 * bottom face counterclockwise, 4-7 the top face, verticals i-(i+4));
 * output is the deduplicated symmetric directed list sorted
 * lexicographically.
 */

export type ElementKind = "triangle" | "hexahedron";

const TRI_EDGES: Array<[number, number]> = [[0, 1], [1, 2], [0, 2]];
const HEX_EDGES: Array<[number, number]> = [
  [0, 1], [1, 2], [2, 3], [3, 0],
  [4, 5], [5, 6], [6, 7], [7, 4],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

export function canonicalizeDirected(pairs: Array<[number, number]>): Array<[number, number]> {
  const seen = new Set<string>();
  const out: Array<[number, number]> = [];
  for (const [i, j] of pairs) {
    if (i === j) continue;
    const key = `${i},${j}`;
    if (!seen.has(key)) {
      seen.add(key);
      out.push([i, j]);
    }
  }
  out.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  return out;
}

export function symmetrize(pairs: Array<[number, number]>): Array<[number, number]> {
  const both: Array<[number, number]> = [];
  for (const [i, j] of pairs) {
    both.push([i, j], [j, i]);
  }
  return canonicalizeDirected(both);
}

export function edgesFromElements(
  elements: number[][], kind: ElementKind): Array<[number, number]> {
  const local = kind === "triangle" ? TRI_EDGES
    : kind === "hexahedron" ? HEX_EDGES
      : null;
  if (!local) throw new Error(`unknown element kind ${kind}`);
  const arity = kind === "triangle" ? 3 : 8;
  const pairs: Array<[number, number]> = [];
  elements.forEach((elem, index) => {
    if (elem.length !== arity) {
      throw new Error(
        `element ${index} has ${elem.length} indices, expected ${arity}`);
    }
    if (new Set(elem).size !== arity) {
      throw new Error(`element ${index} repeats a node index`);
    }
    for (const [a, b] of local) {
      pairs.push([elem[a], elem[b]]);
    }
  });
  return symmetrize(pairs);
}
