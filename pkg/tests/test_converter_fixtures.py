"""Cross-language conformance for the npz-converter's committed output.

The npz-converter package ships tiny .npz fixture archives together with
the MGF files its converter produced from them. These tests verify those
committed conversions against this package's own readers and rules, so the
two implementations stay aligned without either test suite having to run
the other's runtime.
"""

import json
import os

import numpy as np
import pytest

from tagunet.meshgraph import edges_from_elements, load_graph, load_manifest, validate

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "npz-converter",
                        "fixtures")

CASES = [
    ("archive3d", "expected_mgf_3d", "hexahedron",
     ("displacement", 0, 2), ["shape_a", "shape_b", "shape_c"]),
    ("archive2d", "expected_mgf_2d", "triangle",
     ("von_mises", None, None), ["plate_a", "plate_b", "plate_c"]),
]


@pytest.mark.parametrize("archive,converted,kind,target_spec,names", CASES,
                         ids=["hexahedra-3d", "triangles-2d"])
def test_converted_fixtures_conform(archive, converted, kind, target_spec,
                                    names):
    target_array, time_axis, component = target_spec
    for name in names:
        src = np.load(os.path.join(FIXTURES, archive, f"{name}.npz"))
        g = load_graph(os.path.join(FIXTURES, converted, f"{name}.mgf.json"))

        assert validate(g) == []
        assert np.allclose(g.coords, src["coords"], rtol=1e-6, atol=0)
        expect_edges = edges_from_elements(src["elements"].tolist(), kind)
        assert np.array_equal(g.edges, expect_edges)

        values = src[target_array]
        if time_axis is not None:
            values = np.take(values, -1, axis=time_axis)
        if component is not None:
            values = values[..., component]
        assert np.array_equal(g.target, values)
        assert g.target_name == target_array

        sdf = src["sdf"].astype(np.float64)
        assert np.array_equal(g.features["sdf"], sdf)


@pytest.mark.parametrize("converted", ["expected_mgf_3d", "expected_mgf_2d"])
def test_converted_manifest_counts(converted):
    manifest = load_manifest(os.path.join(FIXTURES, converted, "manifest.json"))
    base = os.path.join(FIXTURES, converted)
    assert len(manifest.split_entries("train")) == 2
    assert len(manifest.split_entries("test")) == 1
    for e in manifest.entries:
        g = load_graph(os.path.join(base, e.path))
        assert g.num_nodes == e.num_nodes
        assert g.num_edges == e.num_edges


def test_expected_edges_fixture_current():
    """The committed cross-language edge fixture matches this package."""
    for archive, fixture, kind in [("archive3d", "expected_edges_3d.json",
                                    "hexahedron"),
                                   ("archive2d", "expected_edges_2d.json",
                                    "triangle")]:
        with open(os.path.join(FIXTURES, fixture)) as f:
            expected = json.load(f)
        for name, edges in expected.items():
            src = np.load(os.path.join(FIXTURES, archive, f"{name}.npz"))
            fresh = edges_from_elements(src["elements"].tolist(), kind)
            assert fresh.tolist() == edges
