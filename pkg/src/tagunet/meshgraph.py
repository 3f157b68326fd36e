"""Graph/mesh data model and the MGF on-disk format.

A MeshGraph is a set of nodes with spatial coordinates, a symmetric directed
edge list, named per-node feature arrays, and an optional per-node target
field. Graphs are serialized one per file as JSON ("MGF"), with floats
written at 17 significant digits so values round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

MGF_VERSION = "1.0"

# Undirected edges of an 8-node hexahedron: corners 0-3 are the bottom face
# counterclockwise, 4-7 the top face counterclockwise, verticals i-(i+4).
_HEX_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


class MGFError(ValueError):
    """Malformed MGF / manifest file or invariant violation on load."""


@dataclass
class MeshGraph:
    dim: int
    coords: np.ndarray            # n x dim, float64
    edges: np.ndarray             # E x 2 directed pairs, int64, symmetric
    features: dict[str, np.ndarray] = field(default_factory=dict)
    target: np.ndarray | None = None
    target_name: str | None = None
    name: str = ""

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def feature_matrix(self, names: list[str]) -> np.ndarray:
        """Stack coords and the named features column-wise, coords first."""
        cols = [self.coords]
        for name in names:
            if name not in self.features:
                raise KeyError(f"graph {self.name!r} has no feature {name!r}")
            cols.append(self.features[name][:, None])
        return np.concatenate(cols, axis=1)


@dataclass
class ManifestEntry:
    name: str
    path: str
    split: str                    # "train" | "test"
    num_nodes: int
    num_edges: int


@dataclass
class DatasetManifest:
    dim: int
    feature_names: list[str]
    target_name: str
    entries: list[ManifestEntry]
    target_units: str | None = None

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


@dataclass
class BatchedGraph:
    """Disjoint union of several graphs as one block-diagonal graph."""
    graph: MeshGraph
    graph_id: np.ndarray          # per-node source-graph index
    offsets: np.ndarray           # node-index offset of each source graph

    @property
    def num_graphs(self) -> int:
        return len(self.offsets)


def _as_coords(coords, dim: int) -> np.ndarray:
    a = np.asarray(coords, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"coords must be n x {dim}, got shape {a.shape}")
    return a


def _as_edges(edges) -> np.ndarray:
    a = np.asarray(edges, dtype=np.int64)
    if a.size == 0:
        return a.reshape(0, 2)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"edges must be E x 2, got shape {a.shape}")
    return a


def canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Deduplicate directed pairs and sort them lexicographically."""
    pairs = _as_edges(pairs)
    if pairs.shape[0] == 0:
        return pairs
    return np.unique(pairs, axis=0)


def symmetrize_edges(pairs: np.ndarray) -> np.ndarray:
    """Add the reversal of every pair, dedupe, drop self-loops, sort."""
    pairs = _as_edges(pairs)
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    both = both[both[:, 0] != both[:, 1]]
    return canonical_edges(both)


def edges_from_elements(elements, element_kind: str) -> np.ndarray:
    """Directed, symmetric, deduplicated edge list of a mesh's elements.

    element_kind "triangle" expects 3 distinct node indices per element,
    "hexahedron" expects 8 (bottom face counterclockwise, then top face,
    verticals i-(i+4)). Edges shared between elements appear once.
    """
    if element_kind == "triangle":
        arity, local = 3, ((0, 1), (1, 2), (0, 2))
    elif element_kind == "hexahedron":
        arity, local = 8, _HEX_EDGES
    else:
        raise ValueError(f"unknown element kind {element_kind!r}")

    pairs = []
    for ei, elem in enumerate(elements):
        elem = tuple(int(v) for v in elem)
        if len(elem) != arity:
            raise ValueError(
                f"element {ei} has {len(elem)} indices, expected {arity}")
        if len(set(elem)) != arity:
            raise ValueError(f"element {ei} repeats a node index: {elem}")
        for a, b in local:
            pairs.append((elem[a], elem[b]))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return symmetrize_edges(np.asarray(pairs, dtype=np.int64))


def validate(graph: MeshGraph) -> list[str]:
    """Check MeshGraph invariants; returns one message per violation."""
    out: list[str] = []
    n = graph.num_nodes
    coords = graph.coords
    if coords.ndim != 2 or coords.shape[1] != graph.dim:
        out.append(f"coords shape {coords.shape} does not match dim {graph.dim}")
    if not np.all(np.isfinite(coords)):
        bad = int(np.argwhere(~np.isfinite(coords))[0][0])
        out.append(f"non-finite coordinate at node {bad}")

    edges = graph.edges
    if edges.shape[0]:
        lo, hi = int(edges.min()), int(edges.max())
        if lo < 0 or hi >= n:
            bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
            out.append(f"edge index out of range [0, {n}): {tuple(bad)}")
        loops = edges[edges[:, 0] == edges[:, 1]]
        if loops.shape[0]:
            out.append(f"self-loop at node {int(loops[0][0])}")
        view = {tuple(e) for e in edges.tolist()}
        if len(view) != edges.shape[0]:
            out.append("duplicate edge pairs present")
        for i, j in sorted(view):
            if (j, i) not in view:
                out.append(f"edge ({i}, {j}) has no reverse ({j}, {i})")
                break

    for fname, values in graph.features.items():
        if values.shape != (n,):
            out.append(f"feature {fname!r} has {values.shape[0] if values.ndim else 0} "
                       f"entries, expected {n}")
        elif not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0][0])
            out.append(f"non-finite value in feature {fname!r} at node {bad}")
    if graph.target is not None:
        if graph.target.shape != (n,):
            out.append(f"target has {graph.target.shape[0] if graph.target.ndim else 0} "
                       f"entries, expected {n}")
        elif not np.all(np.isfinite(graph.target)):
            bad = int(np.argwhere(~np.isfinite(graph.target))[0][0])
            out.append(f"non-finite target value at node {bad}")
    return out


# --- MGF serialization ------------------------------------------------------
#
# json.dump cannot be told to format floats, so the writer below assembles
# the document by hand. Output is deterministic byte-for-byte: fixed key
# order, floats via format(x, ".17g") which round-trips IEEE doubles.

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _float_list(values) -> str:
    return "[" + ",".join(_fmt(v) for v in np.asarray(values).ravel()) + "]"


def _int_pairs(pairs: np.ndarray) -> str:
    return "[" + ",".join(f"[{int(i)},{int(j)}]" for i, j in pairs) + "]"


def dumps_mgf(graph: MeshGraph) -> str:
    feats = ",".join(
        f"{json.dumps(k)}:{_float_list(v)}" for k, v in graph.features.items())
    if graph.target is None:
        target = "null"
    else:
        target = (f'{{"name":{json.dumps(graph.target_name or "target")},'
                  f'"values":{_float_list(graph.target)}}}')
    return ("{"
            f'"mgf_version":{json.dumps(MGF_VERSION)},'
            f'"name":{json.dumps(graph.name)},'
            f'"dim":{graph.dim},'
            f'"num_nodes":{graph.num_nodes},'
            f'"coords":{_float_list(graph.coords)},'
            f'"edges":{_int_pairs(graph.edges)},'
            f'"features":{{{feats}}},'
            f'"target":{target}'
            "}\n")


def save_graph(graph: MeshGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_mgf(graph))


def load_graph(path) -> MeshGraph:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MGFError(f"{path}: not valid JSON ({e})") from e
    return graph_from_doc(doc, source=str(path))


def graph_from_doc(doc: dict, source: str = "<mgf>") -> MeshGraph:
    if not isinstance(doc, dict):
        raise MGFError(f"{source}: top-level value must be an object")
    version = doc.get("mgf_version")
    if version != MGF_VERSION:
        raise MGFError(f"{source}: unsupported mgf_version {version!r}")
    for key in ("name", "dim", "num_nodes", "coords", "edges", "features"):
        if key not in doc:
            raise MGFError(f"{source}: missing required key {key!r}")
    dim = doc["dim"]
    if dim not in (2, 3):
        raise MGFError(f"{source}: dim must be 2 or 3, got {dim!r}")
    n = int(doc["num_nodes"])
    coords = np.asarray(doc["coords"], dtype=np.float64)
    if coords.size != n * dim:
        raise MGFError(f"{source}: coords has {coords.size} values, "
                       f"expected num_nodes*dim = {n * dim}")
    coords = coords.reshape(n, dim)
    edges = _as_edges(doc["edges"])
    features = {}
    for fname, values in doc["features"].items():
        arr = np.asarray(values, dtype=np.float64)
        features[fname] = arr
    target = None
    target_name = None
    if doc.get("target") is not None:
        tdoc = doc["target"]
        if not isinstance(tdoc, dict) or "values" not in tdoc:
            raise MGFError(f"{source}: target must be null or an object with 'values'")
        target = np.asarray(tdoc["values"], dtype=np.float64)
        target_name = tdoc.get("name")
    graph = MeshGraph(dim=dim, coords=coords, edges=edges, features=features,
                      target=target, target_name=target_name,
                      name=str(doc["name"]))
    problems = validate(graph)
    if problems:
        raise MGFError(f"{source}: invalid graph: " + "; ".join(problems))
    return graph


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "mgf_version": MGF_VERSION,
        "dim": manifest.dim,
        "feature_names": manifest.feature_names,
        "target_name": manifest.target_name,
        "entries": [
            {"name": e.name, "path": e.path, "split": e.split,
             "num_nodes": e.num_nodes, "num_edges": e.num_edges}
            for e in manifest.entries
        ],
    }
    if manifest.target_units is not None:
        doc["target_units"] = manifest.target_units
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MGFError(f"{path}: not valid JSON ({e})") from e
    for key in ("mgf_version", "dim", "feature_names", "target_name", "entries"):
        if key not in doc:
            raise MGFError(f"{path}: manifest missing key {key!r}")
    if doc["mgf_version"] != MGF_VERSION:
        raise MGFError(f"{path}: unsupported mgf_version {doc['mgf_version']!r}")
    entries = []
    for ent in doc["entries"]:
        split = ent["split"]
        if split not in ("train", "test"):
            raise MGFError(f"{path}: bad split tag {split!r} for {ent.get('name')!r}")
        entries.append(ManifestEntry(
            name=ent["name"], path=ent["path"], split=split,
            num_nodes=int(ent["num_nodes"]), num_edges=int(ent["num_edges"])))
    return DatasetManifest(dim=int(doc["dim"]),
                           feature_names=list(doc["feature_names"]),
                           target_name=doc["target_name"],
                           entries=entries,
                           target_units=doc.get("target_units"))


def validate_manifest(manifest: DatasetManifest, base_dir) -> list[str]:
    """Check manifest invariants: paths exist, counts match the files."""
    out = []
    for e in manifest.entries:
        full = os.path.join(base_dir, e.path)
        if not os.path.exists(full):
            out.append(f"entry {e.name!r}: file {e.path!r} does not exist")
            continue
        g = load_graph(full)
        if g.num_nodes != e.num_nodes:
            out.append(f"entry {e.name!r}: num_nodes {e.num_nodes} != file {g.num_nodes}")
        if g.num_edges != e.num_edges:
            out.append(f"entry {e.name!r}: num_edges {e.num_edges} != file {g.num_edges}")
    return out


def disjoint_union(graphs: list[MeshGraph]) -> BatchedGraph:
    """Concatenate graphs into one, offsetting edge indices per graph.

    All graphs must agree on dim, feature names, and target presence.
    """
    if not graphs:
        raise ValueError("disjoint_union of zero graphs")
    first = graphs[0]
    fnames = list(first.features)
    has_target = first.target is not None
    for g in graphs[1:]:
        if g.dim != first.dim:
            raise ValueError(f"mixed dims {first.dim} and {g.dim}")
        if sorted(g.features) != sorted(fnames):
            raise ValueError(f"graph {g.name!r} feature names differ")
        if (g.target is not None) != has_target:
            raise ValueError(f"graph {g.name!r} target presence differs")

    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    coords = np.concatenate([g.coords for g in graphs], axis=0)
    edges = np.concatenate(
        [g.edges + off for g, off in zip(graphs, offsets)], axis=0)
    features = {name: np.concatenate([g.features[name] for g in graphs])
                for name in fnames}
    target = (np.concatenate([g.target for g in graphs])
              if has_target else None)
    graph_id = np.repeat(np.arange(len(graphs), dtype=np.int64), counts)
    union = MeshGraph(dim=first.dim, coords=coords, edges=edges,
                      features=features, target=target,
                      target_name=first.target_name,
                      name="|".join(g.name for g in graphs))
    return BatchedGraph(graph=union, graph_id=graph_id, offsets=offsets)


def split_union(batch: BatchedGraph) -> list[MeshGraph]:
    """Recover the constituent graphs of a disjoint union, in order."""
    out = []
    g = batch.graph
    names = g.name.split("|")
    bounds = np.concatenate([batch.offsets, [g.num_nodes]])
    for i in range(batch.num_graphs):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        mask = (g.edges[:, 0] >= lo) & (g.edges[:, 0] < hi)
        out.append(MeshGraph(
            dim=g.dim,
            coords=g.coords[lo:hi].copy(),
            edges=g.edges[mask] - lo,
            features={k: v[lo:hi].copy() for k, v in g.features.items()},
            target=None if g.target is None else g.target[lo:hi].copy(),
            target_name=g.target_name,
            name=names[i] if i < len(names) else f"part{i}"))
    return out
