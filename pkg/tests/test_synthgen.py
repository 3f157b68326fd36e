import numpy as np
import pytest

from tagunet.meshgraph import load_graph, load_manifest, validate, validate_manifest
from tagunet.synthgen import (SynthSpec, boundary_distance, domain_sdf,
                              gen_dataset, gen_shape, target_field)


def small_spec(**kw):
    base = dict(dim=2, n_shapes=4, nodes_range=(80, 120), holes_range=(1, 3),
                radius_range=(0.06, 0.15), seed=11, split_fraction=0.8)
    base.update(kw)
    return SynthSpec(**base)


class TestFields:
    def test_sdf_at_center_of_empty_square(self):
        assert boundary_distance(np.array([[0.5, 0.5]]))[0] == 0.5
        sdf = domain_sdf(np.array([[0.5, 0.5]]), np.zeros((0, 2)), np.zeros(0))
        assert sdf[0] == 0.5

    def test_sdf_near_hole(self):
        sdf = domain_sdf(np.array([[0.5, 0.5]]),
                         np.array([[0.5, 0.7]]), np.array([0.1]))
        assert np.isclose(sdf[0], 0.1)  # 0.2 to center minus radius

    def test_target_hand_value(self):
        # sdf=0 at x=y=0.25: exp(0) * (1 + 0.5 * sin(pi/2)^2) = 1.5
        val = target_field(np.array([[0.25, 0.25]]), np.array([0.0]), dim=2)
        assert np.isclose(val[0], 1.5, rtol=1e-12)

    def test_target_3d_scales_with_height(self):
        pts = np.array([[0.25, 0.25, 0.5]])
        val = target_field(pts, np.array([0.0]), dim=3)
        assert np.isclose(val[0], 0.5 * 1.5, rtol=1e-12)


class TestGenShape:
    def test_deterministic(self):
        spec = small_spec()
        a = gen_shape(spec, 2)
        b = gen_shape(spec, 2)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.edges, b.edges)
        assert np.array_equal(a.target, b.target)

    def test_validates_and_ranges(self):
        spec = small_spec()
        for i in range(spec.n_shapes):
            g = gen_shape(spec, i)
            assert validate(g) == []
            assert g.features["sdf"].min() >= 0.0
            assert (g.target > 0.0).all() and (g.target <= 1.5).all()

    def test_3d_ranges(self):
        spec = small_spec(dim=3, nodes_range=(150, 250))
        g = gen_shape(spec, 0)
        assert validate(g) == []
        assert (g.target >= 0.0).all() and (g.target <= 1.5).all()

    def test_node_count_tolerance(self):
        spec = small_spec(nodes_range=(200, 200), holes_range=(2, 2))
        for i in range(3):
            g = gen_shape(spec, i)
            assert abs(g.num_nodes - 200) <= 20  # within 10%

    def test_connected(self):
        from tagunet.synthgen import _connected
        spec = small_spec()
        for i in range(4):
            g = gen_shape(spec, i)
            assert _connected(g.num_nodes, g.edges)

    def test_infeasible_spec(self):
        spec = small_spec(holes_range=(40, 40), radius_range=(0.2, 0.3))
        with pytest.raises(Exception, match="cover|disconnected"):
            gen_shape(spec, 0)


class TestGenDataset:
    def test_split_counts_and_validity(self, tmp_path):
        spec = small_spec(n_shapes=10)
        manifest = gen_dataset(spec, tmp_path)
        assert len(manifest.split_entries("train")) == 8
        assert len(manifest.split_entries("test")) == 2
        assert validate_manifest(manifest, tmp_path) == []
        loaded = load_manifest(tmp_path / "manifest.json")
        assert loaded.feature_names == ["sdf"]

    def test_regeneration_byte_identical(self, tmp_path):
        spec = small_spec(n_shapes=3)
        gen_dataset(spec, tmp_path / "a")
        gen_dataset(spec, tmp_path / "b")
        for name in ("manifest.json", "shape_0000.mgf.json",
                     "shape_0002.mgf.json"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_files_round_trip(self, tmp_path):
        spec = small_spec(n_shapes=2)
        gen_dataset(spec, tmp_path)
        g = load_graph(tmp_path / "shape_0001.mgf.json")
        expect = gen_shape(spec, 1)
        assert np.array_equal(g.coords, expect.coords)
        assert np.array_equal(g.target, expect.target)

    def test_parallel_generation_matches(self, tmp_path):
        spec = small_spec(n_shapes=4)
        gen_dataset(spec, tmp_path / "serial", jobs=1)
        gen_dataset(spec, tmp_path / "parallel", jobs=2)
        a = (tmp_path / "serial" / "shape_0003.mgf.json").read_bytes()
        b = (tmp_path / "parallel" / "shape_0003.mgf.json").read_bytes()
        assert a == b
