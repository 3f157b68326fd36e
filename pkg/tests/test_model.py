import numpy as np
import pytest

from tagunet.diffcore import Tape, Tensor
from tagunet.hierarchy import build_hierarchy, knn_edges, union_hierarchies
from tagunet.meshgraph import MeshGraph, disjoint_union
from tagunet.model import (CheckpointError, Model, ModelConfig, build_model,
                           count_params, forward, load_checkpoint,
                           save_checkpoint)


def make_graph(rng, n=30, dim=2, k=4, with_sdf=True):
    coords = rng.uniform(size=(n, dim))
    return MeshGraph(
        dim=dim, coords=coords, edges=knn_edges(coords, k),
        features={"sdf": rng.uniform(size=n)} if with_sdf else {},
        target=rng.uniform(size=n), target_name="field",
        name=f"g{rng.integers(1e9)}")


def tiny_config(**kw):
    base = dict(dim=2, features=("sdf",), depth=2, conv_hidden=(8, 8),
                conv_channels=8, out_hidden=(8,), lift_width=4)
    base.update(kw)
    return ModelConfig(**base)


class TestBuild:
    def test_reference_2d_config_builds_and_runs(self):
        cfg = ModelConfig(dim=2, features=("sdf",), depth=3,
                          conv_hidden=(128, 128), conv_channels=64,
                          out_hidden=(128, 128, 128))
        model = build_model(cfg, seed=0)
        rng = np.random.default_rng(1)
        g = make_graph(rng, n=40)
        h = build_hierarchy(g, depth=3, c=4, k=12)
        out = forward(Tape(), model, g, h)
        assert out.values.shape == (40, 1)
        assert np.isfinite(out.values).all()

    def test_same_seed_identical(self):
        cfg = tiny_config()
        a = build_model(cfg, seed=7)
        b = build_model(cfg, seed=7)
        for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert np.array_equal(ta.values, tb.values)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            ModelConfig(dim=2, kind="mlp")
        with pytest.raises(ValueError, match="conv"):
            ModelConfig(dim=2, conv="sageconv")
        with pytest.raises(ValueError, match="depth"):
            ModelConfig(dim=2, depth=0)
        with pytest.raises(ValueError, match="width"):
            ModelConfig(dim=2, conv_channels=0)

    def test_plain_gnn_conv_budget(self):
        cfg = tiny_config(kind="plain-gnn", depth=3)
        assert len(cfg.conv_names()) == 7  # 2*depth + 1


class TestForward:
    def test_missing_feature(self):
        rng = np.random.default_rng(2)
        g = make_graph(rng, with_sdf=False)
        model = build_model(tiny_config(), seed=0)
        h = build_hierarchy(g, 2, 4, 12)
        with pytest.raises(ValueError, match="sdf"):
            forward(Tape(), model, g, h)

    def test_wrong_dim(self):
        rng = np.random.default_rng(3)
        g = make_graph(rng, dim=3)
        model = build_model(tiny_config(), seed=0)
        with pytest.raises(ValueError, match="2-D"):
            forward(Tape(), model, g, None)

    def test_hierarchy_c_mismatch(self):
        rng = np.random.default_rng(4)
        g = make_graph(rng)
        model = build_model(tiny_config(), seed=0)
        h = build_hierarchy(g, 2, c=8, k=12)
        with pytest.raises(ValueError, match="c="):
            forward(Tape(), model, g, h)

    def test_batching_equivalence_eval(self):
        rng = np.random.default_rng(5)
        model = build_model(tiny_config(), seed=1)
        for _ in range(5):
            graphs = [make_graph(rng, n=int(rng.integers(12, 40)))
                      for _ in range(int(rng.integers(2, 5)))]
            hiers = [build_hierarchy(g, 2, 4, 12) for g in graphs]
            batched = forward(Tape(), model, disjoint_union(graphs),
                              union_hierarchies(hiers)).values
            single = np.vstack([forward(Tape(), model, g, h).values
                                for g, h in zip(graphs, hiers)])
            assert np.abs(batched - single).max() < 1e-5

    def test_zeroed_final_layer_outputs_target_mean(self):
        rng = np.random.default_rng(6)
        model = build_model(tiny_config(), seed=2)
        model.target_mean, model.target_std = 3.25, 1.5
        last = model.out_mlp.layers[-1]
        last.weight.values[:] = 0.0
        last.bias.values[:] = 0.0
        g = make_graph(rng)
        h = build_hierarchy(g, 2, 4, 12)
        out = forward(Tape(), model, g, h)
        assert np.allclose(out.values, 3.25, rtol=1e-12)

    def test_eval_forward_pure(self):
        rng = np.random.default_rng(7)
        model = build_model(tiny_config(), seed=3)
        g = make_graph(rng)
        h = build_hierarchy(g, 2, 4, 12)
        a = forward(Tape(), model, g, h).values
        b = forward(Tape(), model, g, h).values
        assert np.array_equal(a, b)

    def test_train_mode_updates_running_stats(self):
        rng = np.random.default_rng(8)
        model = build_model(tiny_config(), seed=3)
        g = make_graph(rng)
        h = build_hierarchy(g, 2, 4, 12)
        before = model.norms["enc0"].running_mean.copy()
        forward(Tape(), model, g, h, mode="train")
        assert not np.array_equal(before, model.norms["enc0"].running_mean)

    def test_plain_and_unet_same_output_shape(self):
        rng = np.random.default_rng(9)
        g = make_graph(rng, n=25)
        h = build_hierarchy(g, 2, 4, 12)
        unet = build_model(tiny_config(), seed=0)
        plain = build_model(tiny_config(kind="plain-gnn"), seed=0)
        a = forward(Tape(), unet, g, h)
        b = forward(Tape(), plain, g, None)
        assert a.values.shape == b.values.shape == (25, 1)

    def test_skip_connections_matter(self):
        rng = np.random.default_rng(10)
        model = build_model(tiny_config(), seed=4)
        g = make_graph(rng)
        h = build_hierarchy(g, 2, 4, 12)
        normal = forward(Tape(), model, g, h).values
        zeroed = forward(Tape(), model, g, h, zero_skips=True).values
        assert np.abs(normal - zeroed).max() > 0

    def test_single_node_graph(self):
        g = MeshGraph(dim=2, coords=np.array([[0.5, 0.5]]),
                      edges=np.zeros((0, 2), dtype=np.int64),
                      features={"sdf": np.array([0.1])},
                      target=np.array([1.0]), name="dot")
        h = build_hierarchy(g, 2, 4, 12)
        assert h.depth == 0
        model = build_model(tiny_config(), seed=0)
        out = forward(Tape(), model, g, h)
        assert out.values.shape == (1, 1)


class TestCountParams:
    def test_hand_computed_tiny_gcn(self):
        cfg = ModelConfig(dim=2, kind="tag-unet", conv="gcnconv", depth=1,
                          conv_channels=3, out_hidden=(5,), lift_width=4)
        # lift 2*4+4=12; enc0 theta 6*3=18 bn 6; mid 5*3=15 bn 6;
        # dec0 8*3=24 bn 6; out 3*5+5=20, 5*1+1=6 -> 113
        assert count_params(cfg) == 113

    def test_count_matches_built_model(self):
        for cfg in (tiny_config(), tiny_config(kind="plain-gnn"),
                    tiny_config(conv="gcnconv", depth=3)):
            model = build_model(cfg, seed=0)
            total = sum(t.values.size for _, t in model.named_parameters())
            assert total == count_params(cfg)

    def test_doubling_widths_roughly_quadruples(self):
        base = ModelConfig(dim=3, conv_hidden=(128, 128), conv_channels=128,
                           out_hidden=(256, 256, 256))
        double = ModelConfig(dim=3, conv_hidden=(256, 256), conv_channels=256,
                             out_hidden=(512, 512, 512))
        ratio = count_params(double) / count_params(base)
        assert 3.0 < ratio < 5.0

    def test_reference_3d_sizes_within_15_percent(self):
        reference = {
            (32, 32, 16, (64, 64, 64)): 28385,
            (32, 32, 32, (128, 256, 128)): 100737,
            (64, 64, 128, (256, 256, 128)): 341377,
            (128, 128, 128, (256, 256, 256)): 630785,
        }
        for (h1, h2, ch, out), expect in reference.items():
            cfg = ModelConfig(dim=3, conv_hidden=(h1, h2), conv_channels=ch,
                              out_hidden=out)
            got = count_params(cfg)
            assert abs(got / expect - 1.0) <= 0.15, (cfg, got, expect)


class TestCheckpoint:
    def test_round_trip_forward_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        model = build_model(tiny_config(), seed=5)
        model.target_mean, model.target_std = 2.0, 3.0
        g = make_graph(rng)
        h = build_hierarchy(g, 2, 4, 12)
        forward(Tape(), model, g, h, mode="train")  # move running stats
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        a = forward(Tape(), model, g, h).values
        b = forward(Tape(), loaded, g, h).values
        assert np.array_equal(a, b)
        assert loaded.target_mean == 2.0 and loaded.target_std == 3.0

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_param(self, tmp_path):
        import json
        model = build_model(tiny_config(), seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        doc = json.loads(path.read_text())
        del doc["params"]["lift.weight"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="lift.weight"):
            load_checkpoint(path)

    def test_wrong_size_param(self, tmp_path):
        import json
        model = build_model(tiny_config(), seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        doc = json.loads(path.read_text())
        doc["params"]["lift.bias"] = [0.0]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="lift.bias"):
            load_checkpoint(path)


class TestEndToEndGradient:
    def test_model_gradient_matches_fd(self):
        rng = np.random.default_rng(12)
        cfg = tiny_config()
        model = build_model(cfg, seed=6)
        # zero-initialized biases park relu inputs exactly on the kink
        # (dead edge messages equal the output bias); jitter every
        # parameter so the check runs at a generic, differentiable point
        for _, t in model.named_parameters():
            t.values += rng.normal(scale=0.05, size=t.values.shape)
        g = make_graph(rng, n=20)
        h = build_hierarchy(g, 2, 4, 12)
        target = rng.normal(size=(20, 1))

        def loss_value():
            tape = Tape()
            pred = forward(tape, model, g, h, mode="train", denormalize=False)
            return tape, tape.reduce_mean(tape.square(tape.subtract(
                pred, Tensor(target))))

        tape, loss = loss_value()
        named = model.named_parameters()
        for _, t in named:
            t.zero_grad()
        tape.backward(loss)
        worst = 0.0
        for name, t in named:
            ad = t.grad if t.grad is not None else np.zeros_like(t.values)
            flat = t.values.ravel()
            # probe a few components of every parameter
            idx = np.linspace(0, flat.size - 1, min(4, flat.size)).astype(int)
            for j in idx:
                orig = flat[j]
                step = 1e-6 * max(1.0, abs(orig))
                flat[j] = orig + step
                up = float(loss_value()[1].values[0, 0])
                flat[j] = orig - step
                down = float(loss_value()[1].values[0, 0])
                flat[j] = orig
                fd = (up - down) / (2 * step)
                a = ad.ravel()[j]
                if abs(a) + abs(fd) < 1e-8:
                    # below the FD noise floor (loss ULP / step); batchnorm
                    # makes the conv-MLP output biases genuinely gradient-free
                    continue
                err = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
                worst = max(worst, err)
        assert worst < 1e-4
