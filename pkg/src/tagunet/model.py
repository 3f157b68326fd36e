"""U-Net assembly over coarsening hierarchies, plus the flat-GNN baseline.

The "tag-unet" kind lifts input features, then per encoder level runs
conv/relu/batchnorm (with that level's coordinates concatenated in front of
every conv), stores the result for the skip connection, and mean-pools to
the next level; after the bottleneck conv the decoder unpools by copy,
concatenates the stored skip, and convs again. The "plain-gnn" kind runs
2*depth+1 successive convs on the input graph (same conv budget, no
pooling, no skips). Output is a per-node scalar, de-normalized by the
target statistics stored on the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .diffcore import Tape, Tensor
from .hierarchy import Hierarchy, default_cluster_size
from .layers import (BatchNormParams, LinearParams, MLPParams,
                     batchnorm_forward, edgeconv_forward, gcnconv_forward,
                     init_batchnorm, init_linear, init_mlp, linear_forward,
                     mlp_forward)
from .meshgraph import BatchedGraph, MeshGraph

CKPT_VERSION = "1.0"

KINDS = ("tag-unet", "plain-gnn")
CONVS = ("edgeconv", "gcnconv")


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    dim: int
    features: tuple[str, ...] = ()
    kind: str = "tag-unet"
    conv: str = "edgeconv"
    depth: int = 3
    conv_hidden: tuple[int, int] = (128, 128)
    conv_channels: int = 64
    out_hidden: tuple[int, ...] = (128, 128, 128)
    lift_width: int | None = None
    cluster_size: int | None = None
    knn_k: int = 12

    def __post_init__(self):
        self.features = tuple(self.features)
        self.conv_hidden = tuple(int(v) for v in self.conv_hidden)
        self.out_hidden = tuple(int(v) for v in self.out_hidden)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.conv not in CONVS:
            raise ValueError(f"conv must be one of {CONVS}, got {self.conv!r}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        for w in (*self.conv_hidden, self.conv_channels, *self.out_hidden):
            if w < 1:
                raise ValueError(f"layer widths must be positive, got {w}")

    @property
    def input_width(self) -> int:
        return self.dim + len(self.features)

    @property
    def lift(self) -> int:
        # default: half the conv channel count (at least 2)
        if self.lift_width is not None:
            return self.lift_width
        return max(self.conv_channels // 2, 2)

    @property
    def c(self) -> int:
        return (self.cluster_size if self.cluster_size is not None
                else default_cluster_size(self.dim))

    def conv_names(self) -> list[str]:
        if self.kind == "tag-unet":
            return ([f"enc{i}" for i in range(self.depth)] + ["mid"]
                    + [f"dec{i}" for i in range(self.depth)])
        return [f"conv{i}" for i in range(2 * self.depth + 1)]

    def conv_input_width(self, name: str) -> int:
        """Feature width entering the conv, including that level's coords."""
        if name in ("enc0", "conv0"):
            base = self.lift
        elif name.startswith("dec"):
            base = 2 * self.conv_channels  # unpooled + skip
        else:
            base = self.conv_channels
        return base + self.dim

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        return ModelConfig(
            dim=int(doc["dim"]),
            features=tuple(doc.get("features", ())),
            kind=doc.get("kind", "tag-unet"),
            conv=doc.get("conv", "edgeconv"),
            depth=int(doc.get("depth", 3)),
            conv_hidden=tuple(doc.get("conv_hidden", (128, 128))),
            conv_channels=int(doc.get("conv_channels", 64)),
            out_hidden=tuple(doc.get("out_hidden", (128, 128, 128))),
            lift_width=doc.get("lift_width"),
            cluster_size=doc.get("cluster_size"),
            knn_k=int(doc.get("knn_k", 12)))


@dataclass
class Model:
    config: ModelConfig
    lift: LinearParams
    convs: dict[str, object]           # MLPParams (edgeconv) or Tensor (gcnconv)
    norms: dict[str, BatchNormParams]
    out_mlp: MLPParams
    target_mean: float = 0.0
    target_std: float = 1.0

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Trainable tensors in a fixed, reproducible order."""
        out = [("lift.weight", self.lift.weight), ("lift.bias", self.lift.bias)]
        for name in self.config.conv_names():
            conv = self.convs[name]
            if isinstance(conv, MLPParams):
                for i, layer in enumerate(conv.layers):
                    out.append((f"{name}.mlp{i}.weight", layer.weight))
                    out.append((f"{name}.mlp{i}.bias", layer.bias))
            else:
                out.append((f"{name}.theta", conv))
            bn = self.norms[name]
            out.append((f"{name}.bn.gamma", bn.gamma))
            out.append((f"{name}.bn.beta", bn.beta))
        for i, layer in enumerate(self.out_mlp.layers):
            out.append((f"out.mlp{i}.weight", layer.weight))
            out.append((f"out.mlp{i}.bias", layer.bias))
        return out

    def predict(self, graph: MeshGraph, hierarchy: Hierarchy | None) -> np.ndarray:
        """De-normalized eval-mode predictions as a flat array of length n."""
        out = forward(Tape(no_grad=True), self, graph, hierarchy, mode="eval")
        return out.values[:, 0].copy()


def build_model(config: ModelConfig, seed: int) -> Model:
    """Instantiate all parameters; identical seeds give identical models."""
    rng = np.random.default_rng(seed)
    lift = init_linear(config.input_width, config.lift, rng)
    convs: dict[str, object] = {}
    norms: dict[str, BatchNormParams] = {}
    for name in config.conv_names():
        w = config.conv_input_width(name)
        if config.conv == "edgeconv":
            convs[name] = init_mlp([2 * w, *config.conv_hidden,
                                    config.conv_channels], rng)
        else:
            convs[name] = init_linear(w, config.conv_channels, rng).weight
        norms[name] = init_batchnorm(config.conv_channels)
    out_mlp = init_mlp([config.conv_channels, *config.out_hidden, 1], rng)
    return Model(config=config, lift=lift, convs=convs, norms=norms,
                 out_mlp=out_mlp)


def count_params(config: ModelConfig) -> int:
    """Number of trainable scalars (weights, biases, gamma, beta)."""
    def mlp_count(widths):
        return sum(widths[i] * widths[i + 1] + widths[i + 1]
                   for i in range(len(widths) - 1))

    total = mlp_count([config.input_width, config.lift])
    for name in config.conv_names():
        w = config.conv_input_width(name)
        if config.conv == "edgeconv":
            total += mlp_count([2 * w, *config.conv_hidden, config.conv_channels])
        else:
            total += w * config.conv_channels
        total += 2 * config.conv_channels
    total += mlp_count([config.conv_channels, *config.out_hidden, 1])
    return total


def _conv_block(tape: Tape, model: Model, name: str, x: Tensor,
                edges: np.ndarray, coords: np.ndarray, mode: str) -> Tensor:
    x = tape.concat_cols([x, Tensor(coords)])
    conv = model.convs[name]
    if isinstance(conv, MLPParams):
        x = edgeconv_forward(tape, x, edges, conv)
    else:
        x = gcnconv_forward(tape, x, edges, conv)
    x = tape.relu(x)
    return batchnorm_forward(tape, model.norms[name], x, mode)


def forward(tape: Tape, model: Model, graph: MeshGraph | BatchedGraph,
            hierarchy: Hierarchy | None, mode: str = "eval",
            denormalize: bool = True, zero_skips: bool = False) -> Tensor:
    """Per-node predictions as an (n, 1) tensor on the given tape."""
    config = model.config
    g = graph.graph if isinstance(graph, BatchedGraph) else graph
    if g.dim != config.dim:
        raise ValueError(f"model is {config.dim}-D but graph {g.name!r} is {g.dim}-D")
    try:
        feats = g.feature_matrix(list(config.features))
    except KeyError as e:
        raise ValueError(str(e)) from e

    x = linear_forward(tape, model.lift, Tensor(feats))
    if config.kind == "tag-unet":
        if hierarchy is None:
            raise ValueError("tag-unet forward needs a hierarchy")
        if hierarchy.c != config.c:
            raise ValueError(f"hierarchy built with c={hierarchy.c}, "
                             f"model expects c={config.c}")
        d_eff = min(config.depth, hierarchy.depth)
        coords_at = [g.coords] + [lv.coarse_coords for lv in hierarchy.levels]
        edges_at = [g.edges] + [lv.coarse_edges for lv in hierarchy.levels]
        skips: list[Tensor] = []
        for ell in range(d_eff):
            x = _conv_block(tape, model, f"enc{ell}", x,
                            edges_at[ell], coords_at[ell], mode)
            skips.append(x)
            a = hierarchy.levels[ell].assignment
            x = tape.segment_mean(x, a.cluster_of, a.num_clusters)
        # on early-stopped hierarchies the level-d_eff conv is enc{d_eff},
        # whose input width matches what arrives there
        mid_name = "mid" if d_eff == config.depth else f"enc{d_eff}"
        x = _conv_block(tape, model, mid_name, x,
                        edges_at[d_eff], coords_at[d_eff], mode)
        for ell in reversed(range(d_eff)):
            a = hierarchy.levels[ell].assignment
            x = tape.gather_rows(x, a.cluster_of)
            skip = (Tensor(np.zeros_like(skips[ell].values)) if zero_skips
                    else skips[ell])
            x = tape.concat_cols([x, skip])
            x = _conv_block(tape, model, f"dec{ell}", x,
                            edges_at[ell], coords_at[ell], mode)
    else:
        for name in config.conv_names():
            x = _conv_block(tape, model, name, x, g.edges, g.coords, mode)

    y = mlp_forward(tape, model.out_mlp, x)
    if denormalize:
        y = tape.add_scalar(tape.scale(y, model.target_std), model.target_mean)
    return y


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(model: Model, path, extra: dict | None = None) -> None:
    doc = {
        "ckpt_version": CKPT_VERSION,
        "config": model.config.to_dict(),
        "params": {name: t.values.ravel().tolist()
                   for name, t in model.named_parameters()},
        "running_stats": {
            name: {"mean": bn.running_mean.ravel().tolist(),
                   "var": bn.running_var.ravel().tolist()}
            for name, bn in model.norms.items()
        },
        "target_norm": {"mean": model.target_mean, "std": model.target_std},
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint ({e})") from e
    if not isinstance(doc, dict) or doc.get("ckpt_version") != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version "
                              f"{doc.get('ckpt_version')!r}")
    for key in ("config", "params", "running_stats", "target_norm"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing key {key!r}")
    try:
        config = ModelConfig.from_dict(doc["config"])
    except (KeyError, ValueError, TypeError) as e:
        raise CheckpointError(f"{path}: bad config ({e})") from e

    model = build_model(config, seed=0)
    stored = doc["params"]
    for name, tensor in model.named_parameters():
        if name not in stored:
            raise CheckpointError(f"{path}: missing parameter {name!r}")
        flat = np.asarray(stored[name], dtype=np.float64)
        if flat.size != tensor.values.size:
            raise CheckpointError(
                f"{path}: parameter {name!r} has {flat.size} values, "
                f"expected {tensor.values.size}")
        tensor.values = flat.reshape(tensor.values.shape)
    for name, bn in model.norms.items():
        stats = doc["running_stats"].get(name)
        if stats is None:
            raise CheckpointError(f"{path}: missing running stats for {name!r}")
        bn.running_mean = np.asarray(stats["mean"], dtype=np.float64).reshape(1, -1)
        bn.running_var = np.asarray(stats["var"], dtype=np.float64).reshape(1, -1)
    model.target_mean = float(doc["target_norm"]["mean"])
    model.target_std = float(doc["target_norm"]["std"])
    return model
