"""Coarsening hierarchies built from truncated k-d trees.

Each level partitions the nodes of the level below into clusters of at most
c nodes by recursive balanced median splits; cluster centroids become the
coarse nodes, and coarse edges come from a k-nearest-neighbor graph over
the centroids. Pooling averages features within a cluster; unpooling copies
a coarse feature row back to every member.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .meshgraph import MeshGraph, canonical_edges, symmetrize_edges

DEFAULT_KNN = 12


def default_cluster_size(dim: int) -> int:
    """2x2 grouping in 2-D, 2x2x2 in 3-D."""
    return 4 if dim == 2 else 8


@dataclass
class ClusterAssignment:
    cluster_of: np.ndarray        # per-node cluster index, int64
    num_clusters: int
    cluster_size_limit: int

    @property
    def num_nodes(self) -> int:
        return self.cluster_of.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.num_clusters)


@dataclass
class Level:
    assignment: ClusterAssignment
    coarse_coords: np.ndarray     # m x dim centroids
    coarse_edges: np.ndarray      # symmetric directed pairs


@dataclass
class Hierarchy:
    depth: int                    # achieved depth (may be < requested)
    c: int
    k: int
    levels: list[Level]

    def level_sizes(self, n0: int) -> list[int]:
        return [n0] + [lv.assignment.num_clusters for lv in self.levels]


def build_clusters(coords: np.ndarray, c: int) -> ClusterAssignment:
    """Partition points into clusters of at most c by recursive median split.

    A cell with at most c points becomes one cluster. Larger cells split on
    the axis of greatest coordinate range (ties to the lowest axis), ordered
    by (coordinate, node index); the lower side receives ceil(count/2).
    Cluster ids follow depth-first, lower-side-first order.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty point set")
    if c < 1:
        raise ValueError(f"cluster size limit must be >= 1, got {c}")
    if not np.all(np.isfinite(coords)):
        raise ValueError("non-finite coordinate in input")

    cluster_of = np.empty(n, dtype=np.int64)
    next_id = 0

    def split(idx: np.ndarray) -> None:
        nonlocal next_id
        if idx.size <= c:
            cluster_of[idx] = next_id
            next_id += 1
            return
        pts = coords[idx]
        spans = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spans))
        order = np.lexsort((idx, pts[:, axis]))
        lower = (idx.size + 1) // 2
        split(idx[order[:lower]])
        split(idx[order[lower:]])

    split(np.arange(n, dtype=np.int64))
    return ClusterAssignment(cluster_of=cluster_of, num_clusters=next_id,
                             cluster_size_limit=c)


def knn_edges(coords: np.ndarray, k: int, block: int = 2048) -> np.ndarray:
    """Symmetric directed kNN edge list with deterministic tie-breaking.

    Every node points to its min(k, m-1) nearest neighbors by Euclidean
    distance (equal distances resolved toward the lower node index); the
    reversal of each pair is added and duplicates removed.
    """
    coords = np.asarray(coords, dtype=np.float64)
    m = coords.shape[0]
    if m <= 1 or k < 1:
        return np.zeros((0, 2), dtype=np.int64)
    kk = min(k, m - 1)
    src_chunks = []
    dst_chunks = []
    for start in range(0, m, block):
        chunk = coords[start:start + block]
        b = chunk.shape[0]
        d2 = ((chunk[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(b), start + np.arange(b)] = np.inf
        # stable sort keeps equal distances in index order
        nbr = np.argsort(d2, axis=1, kind="stable")[:, :kk]
        src_chunks.append(np.repeat(np.arange(start, start + b), kk))
        dst_chunks.append(nbr.ravel())
    pairs = np.stack([np.concatenate(src_chunks),
                      np.concatenate(dst_chunks)], axis=1)
    return symmetrize_edges(pairs)


def pool_mean(features: np.ndarray, a: ClusterAssignment) -> np.ndarray:
    """Per-cluster arithmetic mean of feature rows."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != a.num_nodes:
        raise ValueError(f"feature rows {features.shape[0]} != nodes {a.num_nodes}")
    m = a.num_clusters
    f = features.shape[1]
    out = np.zeros((m, f), dtype=features.dtype)
    np.add.at(out, a.cluster_of, features)
    return out / a.sizes()[:, None]


def unpool_copy(coarse: np.ndarray, a: ClusterAssignment) -> np.ndarray:
    """Copy each coarse feature row to all member nodes of its cluster."""
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.shape[0] != a.num_clusters:
        raise ValueError(f"coarse rows {coarse.shape[0]} != clusters {a.num_clusters}")
    return coarse[a.cluster_of]


def build_hierarchy(graph: MeshGraph, depth: int, c: int | None = None,
                    k: int = DEFAULT_KNN) -> Hierarchy:
    """Build `depth` coarsening levels (fewer if the graph runs out of nodes).

    Stops early once a level has a single node, recording the achieved depth.
    """
    if graph.num_nodes == 0:
        raise ValueError("cannot build a hierarchy for an empty graph")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if c is None:
        c = default_cluster_size(graph.dim)

    levels: list[Level] = []
    coords = graph.coords
    for _ in range(depth):
        if coords.shape[0] < 2:
            break
        a = build_clusters(coords, c)
        centroids = pool_mean(coords, a)
        edges = knn_edges(centroids, k)
        levels.append(Level(assignment=a, coarse_coords=centroids,
                            coarse_edges=edges))
        coords = centroids
    return Hierarchy(depth=len(levels), c=c, k=k, levels=levels)


def union_hierarchies(hierarchies: list[Hierarchy]) -> Hierarchy:
    """Combine per-graph hierarchies for a disjoint-union batch.

    Cluster ids and coarse edges are offset per graph, level by level. If
    the achieved depths differ, the union is truncated to the shallowest.
    """
    if not hierarchies:
        raise ValueError("union of zero hierarchies")
    if len(hierarchies) == 1:
        return hierarchies[0]
    depth = min(h.depth for h in hierarchies)
    c, k = hierarchies[0].c, hierarchies[0].k
    levels: list[Level] = []
    for ell in range(depth):
        parts = [h.levels[ell] for h in hierarchies]
        cluster_counts = np.array([p.assignment.num_clusters for p in parts])
        offs = np.concatenate([[0], np.cumsum(cluster_counts)[:-1]])
        cluster_of = np.concatenate(
            [p.assignment.cluster_of + off for p, off in zip(parts, offs)])
        coords = np.concatenate([p.coarse_coords for p in parts], axis=0)
        edges = np.concatenate(
            [p.coarse_edges + off for p, off in zip(parts, offs)], axis=0)
        a = ClusterAssignment(cluster_of=cluster_of,
                              num_clusters=int(cluster_counts.sum()),
                              cluster_size_limit=c)
        levels.append(Level(assignment=a, coarse_coords=coords,
                            coarse_edges=canonical_edges(edges)))
    return Hierarchy(depth=depth, c=c, k=k, levels=levels)


# --- on-disk cache ----------------------------------------------------------

def cache_filename(shape_name: str, c: int, depth: int, k: int) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in shape_name)
    return f"{safe}.c{c}.d{depth}.k{k}.json"


def save_hierarchy(h: Hierarchy, path) -> None:
    doc = {
        "depth": h.depth, "c": h.c, "k": h.k,
        "levels": [
            {
                "cluster_of": lv.assignment.cluster_of.tolist(),
                "coarse_coords": [format(v, ".17g")
                                  for v in lv.coarse_coords.ravel()],
                "coarse_edges": lv.coarse_edges.tolist(),
            }
            for lv in h.levels
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_hierarchy(path, dim: int) -> Hierarchy:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    levels = []
    c = int(doc["c"])
    for lv in doc["levels"]:
        cluster_of = np.asarray(lv["cluster_of"], dtype=np.int64)
        m = int(cluster_of.max()) + 1 if cluster_of.size else 0
        coords = np.asarray([float(v) for v in lv["coarse_coords"]],
                            dtype=np.float64).reshape(m, dim)
        edges = np.asarray(lv["coarse_edges"], dtype=np.int64).reshape(-1, 2)
        levels.append(Level(
            assignment=ClusterAssignment(cluster_of=cluster_of,
                                         num_clusters=m,
                                         cluster_size_limit=c),
            coarse_coords=coords, coarse_edges=edges))
    return Hierarchy(depth=int(doc["depth"]), c=c, k=int(doc["k"]),
                     levels=levels)


def hierarchy_for(graph: MeshGraph, depth: int, c: int | None, k: int,
                  cache_dir: str | None = None) -> Hierarchy:
    """Build a hierarchy, loading/storing a JSON cache when a dir is given."""
    if c is None:
        c = default_cluster_size(graph.dim)
    if cache_dir is None:
        return build_hierarchy(graph, depth, c, k)
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, cache_filename(graph.name, c, depth, k))
    if os.path.exists(path):
        return load_hierarchy(path, graph.dim)
    h = build_hierarchy(graph, depth, c, k)
    save_hierarchy(h, path)
    return h
