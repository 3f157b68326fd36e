"""Per-shape goodness-of-fit scores and threshold classification metrics.

Each shape gets an R^2 comparing nodal predictions with ground truth;
split-level summaries are medians plus a probability-density histogram.
Shapes whose targets are constant (zero total sum of squares) cannot be
scored and are reported separately instead of entering the medians.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

HIST_BINS = 40


@dataclass
class Classification:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    f1: float


@dataclass
class ShapeScore:
    name: str
    split: str
    r2: float                     # nan when degenerate
    num_nodes: int
    degenerate: bool = False
    classification: Classification | None = None


@dataclass
class EvalReport:
    split: str
    shapes: list[ShapeScore]
    median_r2: float
    mean_r2: float
    bin_edges: np.ndarray
    density: np.ndarray
    threshold: float | None = None
    median_accuracy: float | None = None
    median_f1: float | None = None

    @property
    def degenerate_names(self) -> list[str]:
        return [s.name for s in self.shapes if s.degenerate]


def r2_score(y: np.ndarray, f: np.ndarray) -> float:
    """1 - SS_res/SS_tot about the mean of y.

    Returns 1.0 for an exact match of a constant target and nan when the
    target is constant but the fit is not exact (degenerate shape).
    """
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {f.shape}")
    if y.size < 2:
        raise ValueError("r2_score needs at least 2 values")
    ss_res = float(((y - f) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else math.nan
    return 1.0 - ss_res / ss_tot


def classify_threshold(y: np.ndarray, f: np.ndarray,
                       threshold: float) -> Classification:
    """Confusion counts treating value > threshold (strictly) as positive.

    F1 is defined as 1 when there are no true or predicted positives.
    """
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {f.shape}")
    actual = y > threshold
    pred = f > threshold
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    n = y.size
    accuracy = (tp + tn) / n
    f1 = 1.0 if (tp + fp + fn) == 0 else 2 * tp / (2 * tp + fp + fn)
    return Classification(threshold=threshold, tp=tp, fp=fp, fn=fn, tn=tn,
                          accuracy=accuracy, f1=f1)


def score_histogram(scores: np.ndarray, bins: int = HIST_BINS):
    """Probability-density histogram of R^2 scores.

    Bins span [min(-1, floor of the lowest score), 1] so every score falls
    inside; densities integrate to 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    lo = -1.0
    if scores.size and scores.min() < -1.0:
        lo = float(np.floor(scores.min()))
    edges = np.linspace(lo, 1.0, bins + 1)
    density, _ = np.histogram(scores, bins=edges, density=True)
    return edges, density


def evaluate_graphs(predict, graphs, split: str,
                    threshold: float | None = None) -> EvalReport:
    """Score each graph with `predict(graph) -> per-node array`.

    Degenerate shapes (constant target) are listed but excluded from the
    medians and the histogram.
    """
    if not graphs:
        raise ValueError(f"empty split {split!r}")
    shapes: list[ShapeScore] = []
    for g in graphs:
        if g.target is None:
            raise ValueError(f"graph {g.name!r} has no target to score against")
        pred = predict(g)
        r2 = r2_score(g.target, pred)
        cls = (classify_threshold(g.target, pred, threshold)
               if threshold is not None else None)
        shapes.append(ShapeScore(name=g.name, split=split, r2=r2,
                                 num_nodes=g.num_nodes,
                                 degenerate=math.isnan(r2),
                                 classification=cls))
    valid = np.array([s.r2 for s in shapes if not s.degenerate])
    if valid.size == 0:
        raise ValueError("every shape in the split is degenerate")
    edges, density = score_histogram(valid)
    report = EvalReport(split=split, shapes=shapes,
                        median_r2=float(np.median(valid)),
                        mean_r2=float(valid.mean()),
                        bin_edges=edges, density=density,
                        threshold=threshold)
    if threshold is not None:
        accs = [s.classification.accuracy for s in shapes]
        f1s = [s.classification.f1 for s in shapes]
        report.median_accuracy = float(np.median(accs))
        report.median_f1 = float(np.median(f1s))
    return report


def evaluate_dataset(model, graphs, split: str, threshold: float | None = None,
                     cache_dir: str | None = None, jobs: int = 1) -> EvalReport:
    """Evaluate a trained model over every graph of a split.

    Hierarchies are built (or loaded from cache_dir) per shape as the model
    config dictates. Per-shape prediction may run on several threads; the
    report is assembled in input order either way.
    """
    from .hierarchy import hierarchy_for
    cfg = model.config

    def predict(g):
        hier = None
        if cfg.kind == "tag-unet":
            hier = hierarchy_for(g, cfg.depth, cfg.c, cfg.knn_k, cache_dir)
        return model.predict(g, hier)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            preds = list(ex.map(predict, graphs))
        it = iter(preds)
        return evaluate_graphs(lambda g: next(it), graphs, split, threshold)
    return evaluate_graphs(predict, graphs, split, threshold)


def report_to_dict(report: EvalReport) -> dict:
    doc = {
        "split": report.split,
        "threshold": report.threshold,
        "median_r2": report.median_r2,
        "mean_r2": report.mean_r2,
        "degenerate": report.degenerate_names,
        "histogram": {"bin_edges": report.bin_edges.tolist(),
                      "density": report.density.tolist()},
        "shapes": [],
    }
    if report.threshold is not None:
        doc["median_accuracy"] = report.median_accuracy
        doc["median_f1"] = report.median_f1
    for s in report.shapes:
        ent = {"name": s.name, "split": s.split, "num_nodes": s.num_nodes,
               "r2": None if s.degenerate else s.r2,
               "degenerate": s.degenerate}
        if s.classification is not None:
            c = s.classification
            ent["classification"] = {
                "threshold": c.threshold, "tp": c.tp, "fp": c.fp,
                "fn": c.fn, "tn": c.tn, "accuracy": c.accuracy, "f1": c.f1}
        doc["shapes"].append(ent)
    return doc


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_to_dict(report), f, indent=1)
        f.write("\n")


def write_scores_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "split", "r2", "accuracy", "f1"])
        for s in report.shapes:
            c = s.classification
            w.writerow([s.name, s.split,
                        "" if s.degenerate else repr(s.r2),
                        "" if c is None else repr(c.accuracy),
                        "" if c is None else repr(c.f1)])


def write_hist_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "bin_right", "density"])
        for left, right, d in zip(report.bin_edges[:-1], report.bin_edges[1:],
                                  report.density):
            w.writerow([repr(float(left)), repr(float(right)), repr(float(d))])
