"""Loss, Adam optimizer, target standardization, and the training loop.

Training is sequential over batches for reproducibility: given the same
seed, dataset, and configuration, the loss history and the resulting
checkpoint are bit-identical across runs.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .diffcore import Tape, Tensor
from .hierarchy import Hierarchy, union_hierarchies
from .meshgraph import MeshGraph, disjoint_union
from .model import Model, ModelConfig, build_model, forward, save_checkpoint

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 75
    batch_size: int = 1
    seed: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    shuffle: bool = True
    checkpoint_every: int = 0     # 0 = only the final checkpoint
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")

    def optimizer_dict(self) -> dict:
        return {"name": "adam", "lr": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @staticmethod
    def for_params(params: list[np.ndarray]) -> "OptimizerState":
        return OptimizerState(m=[np.zeros_like(p) for p in params],
                              v=[np.zeros_like(p) for p in params])


def mse_loss(tape: Tape, predicted: Tensor, target: Tensor) -> Tensor:
    """(1/n) sum of squared differences, as a 1x1 tape tensor."""
    if predicted.shape != target.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {target.shape}")
    if predicted.values.size == 0:
        raise ValueError("loss over zero nodes")
    return tape.reduce_mean(tape.square(tape.subtract(predicted, target)))


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: OptimizerState, lr: float, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update, in place."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    state.step += 1
    t = state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"param {i}: shape {p.shape} vs grad {g.shape}")
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        m_hat = state.m[i] / (1 - beta1 ** t)
        v_hat = state.v[i] / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def standardize_targets(graphs: list[MeshGraph]) -> tuple[float, float]:
    """Mean and population std of all target values across the given graphs."""
    values = [g.target for g in graphs if g.target is not None]
    if not values:
        raise ValueError("no target values to standardize")
    allv = np.concatenate(values)
    mean = float(allv.mean())
    std = float(allv.std())
    if std == 0.0:
        raise ValueError("constant targets: standard deviation is zero")
    return mean, std


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    seconds: float


def train(model_config: ModelConfig, train_config: TrainConfig,
          train_graphs: list[MeshGraph],
          hierarchies: dict[str, Hierarchy] | None,
          out_dir: str | None = None,
          log=None) -> tuple[Model, list[EpochRecord]]:
    """Train a fresh model on the given graphs; returns it with the history.

    `hierarchies` maps graph name to its precomputed hierarchy (may be None
    for plain-gnn models). Loss is MSE on z-scored targets. Checkpoints go
    under out_dir when given.
    """
    if not train_graphs:
        raise ValueError("empty train split")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    model = build_model(model_config, seed=train_config.seed)
    model.target_mean, model.target_std = standardize_targets(train_graphs)

    named = model.named_parameters()
    params = [t.values for _, t in named]
    state = OptimizerState.for_params(params)
    history: list[EpochRecord] = []
    needs_hier = model_config.kind == "tag-unet"
    if needs_hier and hierarchies is None:
        raise ValueError("tag-unet training needs hierarchies")

    order = np.arange(len(train_graphs))
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        if train_config.shuffle:
            rng = np.random.default_rng(train_config.seed + epoch)
            order = rng.permutation(len(train_graphs))
        losses = []
        bs = train_config.batch_size
        for lo in range(0, len(order), bs):
            chunk = [train_graphs[i] for i in order[lo:lo + bs]]
            if len(chunk) == 1:
                batch, hier = chunk[0], None
                if needs_hier:
                    hier = hierarchies[chunk[0].name]
            else:
                batch = disjoint_union(chunk)
                hier = (union_hierarchies([hierarchies[g.name] for g in chunk])
                        if needs_hier else None)
            target = batch.graph.target if hasattr(batch, "graph") else batch.target
            norm_target = (target - model.target_mean) / model.target_std

            tape = Tape()
            pred = forward(tape, model, batch, hier, mode="train",
                           denormalize=False)
            loss = mse_loss(tape, pred, Tensor(norm_target[:, None]))
            loss_value = float(loss.values[0, 0])
            if not np.isfinite(loss_value):
                names = ", ".join(g.name for g in chunk)
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch of [{names}]")
            losses.append(loss_value)

            for _, t in named:
                t.zero_grad()
            tape.backward(loss)
            grads = [t.grad if t.grad is not None else np.zeros_like(t.values)
                     for _, t in named]
            if train_config.clip_norm is not None:
                total = np.sqrt(sum(float((g * g).sum()) for g in grads))
                if total > train_config.clip_norm:
                    scale = train_config.clip_norm / total
                    grads = [g * scale for g in grads]
            adam_step(params, grads, state, train_config.learning_rate,
                      train_config.beta1, train_config.beta2, train_config.eps)

        record = EpochRecord(epoch=epoch, mean_loss=float(np.mean(losses)),
                             seconds=time.perf_counter() - t0)
        history.append(record)
        if log is not None:
            log(f"epoch {epoch}: mean loss {record.mean_loss:.6g} "
                f"({record.seconds:.1f}s)")
        if (out_dir and train_config.checkpoint_every
                and (epoch + 1) % train_config.checkpoint_every == 0):
            save_checkpoint(model, os.path.join(out_dir, f"epoch_{epoch}.ckpt"),
                            extra={"optimizer": train_config.optimizer_dict()})

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(out_dir, "final.ckpt"),
                        extra={"optimizer": train_config.optimizer_dict()})
        write_history(history, os.path.join(out_dir, "history.json"))
    return model, history


def write_history(history: list[EpochRecord], path) -> None:
    import json
    with open(path, "w", encoding="utf-8") as f:
        json.dump([{"epoch": r.epoch, "mean_loss": r.mean_loss,
                    "seconds": r.seconds} for r in history], f, indent=1)
        f.write("\n")
