"""Builds the committed converter test fixtures.

Creates two tiny .npz archives (hexahedral 3-D shapes with displacement
histories, triangular 2-D shapes with a scalar field), mapping configs, and
expected_edges_*.json derived from the Python package's element-to-edge
rule, so the TypeScript converter can be checked against it without
running Python.

Run from the repo root after `pip install -e .`:

    python3 npz-converter/fixtures/generate.py
"""

import json
import os

import numpy as np

from tagunet.meshgraph import edges_from_elements

HERE = os.path.dirname(os.path.abspath(__file__))


def hex_block(nx):
    """nx cubes in a row: grid (nx+1) x 2 x 2, corners per the edge rule."""
    xs = np.arange(nx + 1, dtype=np.float64)
    coords = np.array([[x, y, z] for z in (0.0, 1.0) for y in (0.0, 1.0)
                       for x in xs])

    def node(x, y, z):
        return x + (nx + 1) * y + 2 * (nx + 1) * z

    elements = []
    for cx in range(nx):
        elements.append([
            node(cx, 0, 0), node(cx + 1, 0, 0), node(cx + 1, 1, 0), node(cx, 1, 0),
            node(cx, 0, 1), node(cx + 1, 0, 1), node(cx + 1, 1, 1), node(cx, 1, 1),
        ])
    return coords, np.array(elements, dtype=np.int64)


def stacked_hexes(levels):
    """One column of `levels` cubes: grid 2 x 2 x (levels+1)."""
    coords = np.array([[x, y, z] for z in range(levels + 1)
                       for y in (0.0, 1.0) for x in (0.0, 1.0)],
                      dtype=np.float64)

    def layer(k):
        base = 4 * k
        return [base, base + 1, base + 3, base + 2]  # counterclockwise

    elements = [layer(k) + layer(k + 1) for k in range(levels)]
    return coords, np.array(elements, dtype=np.int64)


def make_3d():
    rng = np.random.default_rng(31)
    out_dir = os.path.join(HERE, "archive3d")
    os.makedirs(out_dir, exist_ok=True)
    shapes = {
        "shape_a": stacked_hexes(1),
        "shape_b": stacked_hexes(2),
        "shape_c": hex_block(2),
    }
    expected_edges = {}
    for name, (coords, elements) in shapes.items():
        n = len(coords)
        steps = int(rng.integers(2, 4))
        displacement = rng.normal(scale=0.1, size=(steps, n, 3))
        sdf = rng.uniform(0.0, 0.5, size=n)
        np.savez_compressed(os.path.join(out_dir, f"{name}.npz"),
                            coords=coords, elements=elements,
                            sdf=sdf, displacement=displacement)
        expected_edges[name] = edges_from_elements(
            elements.tolist(), "hexahedron").tolist()
    with open(os.path.join(HERE, "expected_edges_3d.json"), "w") as f:
        json.dump(expected_edges, f, indent=1)
    with open(os.path.join(HERE, "mapping3d.json"), "w") as f:
        json.dump({
            "coords": "coords", "elements": "elements",
            "element_kind": "hexahedron",
            "features": {"sdf": "sdf"},
            "target": {"array": "displacement", "time_axis": 0, "component": 2},
            "train_count": 2,
        }, f, indent=1)


def make_2d():
    rng = np.random.default_rng(32)
    out_dir = os.path.join(HERE, "archive2d")
    os.makedirs(out_dir, exist_ok=True)
    shapes = {
        "plate_a": (np.array([[0.0, 0], [1, 0], [0, 1]]),
                    np.array([[0, 1, 2]], dtype=np.int32)),
        "plate_b": (np.array([[0.0, 0], [1, 0], [0, 1], [1, 1]]),
                    np.array([[0, 1, 2], [1, 3, 2]], dtype=np.int32)),
        "plate_c": (np.array([[0.5, 0.5], [1.0, 0], [1, 1], [0, 1], [0, 0]]),
                    np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4]], dtype=np.int32)),
    }
    expected_edges = {}
    for name, (coords, elements) in shapes.items():
        n = len(coords)
        np.savez_compressed(os.path.join(out_dir, f"{name}.npz"),
                            coords=coords, elements=elements,
                            sdf=rng.uniform(0, 0.3, size=n).astype(np.float32),
                            von_mises=rng.uniform(0.0, 5.0, size=n))
        expected_edges[name] = edges_from_elements(
            elements.tolist(), "triangle").tolist()
    with open(os.path.join(HERE, "expected_edges_2d.json"), "w") as f:
        json.dump(expected_edges, f, indent=1)
    with open(os.path.join(HERE, "mapping2d.json"), "w") as f:
        json.dump({
            "coords": "coords", "elements": "elements",
            "element_kind": "triangle",
            "features": {"sdf": "sdf"},
            "target": {"array": "von_mises", "time_axis": None,
                       "component": None},
            "train_count": 2,
        }, f, indent=1)


if __name__ == "__main__":
    make_3d()
    make_2d()
    print(f"fixtures written under {HERE}")
