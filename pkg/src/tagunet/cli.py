"""Command-line interface: synth, hierarchy, train, predict, evaluate, compare.

Every subcommand takes --out and writes resolved_config.json there; an
optional --config JSON file supplies defaults which explicit flags
override. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import evaluation, synthgen, training
from .hierarchy import hierarchy_for
from .meshgraph import MGFError, load_graph, load_manifest
from .model import ModelConfig, count_params, load_checkpoint

MODEL_NAMES = {
    "edgeconv-unet": ("tag-unet", "edgeconv"),
    "gcnconv-unet": ("tag-unet", "gcnconv"),
    "plain-gnn": ("plain-gnn", "edgeconv"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _build_parser() -> _Parser:
    p = _Parser(prog="tagunet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file with default option values")
        sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--spec", help="SynthSpec JSON file")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--shapes", type=int)
    sp.add_argument("--nodes", help="node count range lo:hi")
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("hierarchy", help="precompute hierarchy caches")
    common(sp)
    sp.add_argument("--data", required=True, help="manifest.json path")
    sp.add_argument("--depth", type=int)
    sp.add_argument("--c", type=int)
    sp.add_argument("--k", type=int)

    for name in ("train", "compare"):
        sp = sub.add_parser(name, help=f"{name} models on a dataset")
        common(sp)
        sp.add_argument("--data", required=True)
        if name == "train":
            sp.add_argument("--model", choices=sorted(MODEL_NAMES))
        else:
            sp.add_argument("--models", help="comma-separated model names")
        sp.add_argument("--depth", type=int)
        sp.add_argument("--conv-hidden", type=_int_list)
        sp.add_argument("--channels", type=int)
        sp.add_argument("--out-hidden", type=_int_list)
        sp.add_argument("--lift", type=int)
        sp.add_argument("--c", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--checkpoint-every", type=int)
        if name == "compare":
            sp.add_argument("--threshold", type=float)

    sp = sub.add_parser("predict", help="write per-shape prediction CSVs")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", choices=("train", "test"))
    sp.add_argument("--shape", help="restrict to one shape name")

    sp = sub.add_parser("evaluate", help="score a checkpoint on a split")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", choices=("train", "test"))
    sp.add_argument("--threshold", type=float)
    return p


_DEFAULTS = {
    "synth": {"spec": None, "dim": None, "shapes": None, "nodes": None,
              "seed": None, "jobs": 1},
    "hierarchy": {"depth": 3, "c": None, "k": 12, "jobs": 1},
    "train": {"model": "edgeconv-unet", "depth": 3, "conv_hidden": (128, 128),
              "channels": 64, "out_hidden": (128, 128, 128), "lift": None,
              "c": None, "k": 12, "epochs": 75, "lr": 0.001, "batch": 1,
              "seed": 0, "checkpoint_every": 0, "jobs": 1},
    "predict": {"split": "test", "shape": None, "jobs": 1},
    "evaluate": {"split": "test", "threshold": None, "jobs": 1},
}
_DEFAULTS["compare"] = {**_DEFAULTS["train"],
                        "models": "edgeconv-unet,gcnconv-unet,plain-gnn",
                        "threshold": None}
del _DEFAULTS["compare"]["model"]


def _resolve_options(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags."""
    merged = dict(_DEFAULTS[args.command])
    path = getattr(args, "config", None)
    if path:
        with open(path, "r", encoding="utf-8") as f:
            file_doc = json.load(f)
        for key, value in file_doc.items():
            key = key.replace("-", "_")
            if key in merged:
                merged[key] = tuple(value) if isinstance(value, list) else value
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config"):
            merged[key] = value
    return merged


def _write_resolved(opts: dict, out_dir: str, command: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    doc = {"command": command}
    doc.update({k: (list(v) if isinstance(v, tuple) else v)
                for k, v in sorted(opts.items())})
    with open(os.path.join(out_dir, "resolved_config.json"), "w",
              encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def _load_dataset(manifest_path: str):
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    graphs = {}
    for e in manifest.entries:
        graphs[e.name] = load_graph(os.path.join(base, e.path))
    return manifest, graphs


def _cache_dir(out_dir: str) -> str:
    return os.environ.get("TAGUNET_CACHE_DIR",
                          os.path.join(out_dir, "hierarchies"))


def _model_config(manifest, opts) -> ModelConfig:
    kind, conv = MODEL_NAMES[opts["model"]]
    return ModelConfig(
        dim=manifest.dim, features=tuple(manifest.feature_names),
        kind=kind, conv=conv, depth=opts["depth"],
        conv_hidden=tuple(opts["conv_hidden"]), conv_channels=opts["channels"],
        out_hidden=tuple(opts["out_hidden"]), lift_width=opts["lift"],
        cluster_size=opts["c"], knn_k=opts["k"])


def _train_config(opts) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=opts["lr"], epochs=opts["epochs"],
        batch_size=opts["batch"], seed=opts["seed"],
        checkpoint_every=opts["checkpoint_every"])


def _hierarchies_for(graphs, config: ModelConfig, cache, jobs=1):
    if config.kind != "tag-unet":
        return None
    out = {}
    for name, g in graphs.items():
        out[name] = hierarchy_for(g, config.depth, config.c, config.knn_k, cache)
    return out


def _cmd_synth(opts) -> int:
    if opts["spec"]:
        with open(opts["spec"], "r", encoding="utf-8") as f:
            spec = synthgen.SynthSpec.from_dict(json.load(f))
    else:
        spec = synthgen.SynthSpec()
    overrides = {}
    if opts["dim"] is not None:
        overrides["dim"] = opts["dim"]
    if opts["shapes"] is not None:
        overrides["n_shapes"] = opts["shapes"]
    if opts["seed"] is not None:
        overrides["seed"] = opts["seed"]
    if opts["nodes"]:
        lo, hi = str(opts["nodes"]).split(":")
        overrides["nodes_range"] = (int(lo), int(hi))
    if overrides:
        spec = synthgen.SynthSpec(**{**spec.to_dict(), **overrides})
    manifest = synthgen.gen_dataset(spec, opts["out"], jobs=opts["jobs"])
    print(f"wrote {len(manifest.entries)} shapes to {opts['out']}")
    return 0


def _cmd_hierarchy(opts) -> int:
    manifest, graphs = _load_dataset(opts["data"])
    cache = _cache_dir(opts["out"])
    c = opts["c"]
    for name, g in graphs.items():
        h = hierarchy_for(g, opts["depth"], c, opts["k"], cache)
        print(f"{name}: levels {h.level_sizes(g.num_nodes)}")
    return 0


def _cmd_train(opts) -> int:
    manifest, graphs = _load_dataset(opts["data"])
    train_names = [e.name for e in manifest.split_entries("train")]
    train_graphs = [graphs[n] for n in train_names]
    config = _model_config(manifest, opts)
    cache = _cache_dir(opts["out"])
    hiers = _hierarchies_for({n: graphs[n] for n in train_names}, config, cache)
    _, history = training.train(config, _train_config(opts), train_graphs,
                                hiers, out_dir=opts["out"], log=print)
    print(f"final mean loss {history[-1].mean_loss:.6g}; "
          f"checkpoint {os.path.join(opts['out'], 'final.ckpt')}")
    return 0


def _cmd_predict(opts) -> int:
    manifest, graphs = _load_dataset(opts["data"])
    model = load_checkpoint(opts["ckpt"])
    names = [e.name for e in manifest.split_entries(opts["split"])]
    if opts["shape"]:
        if opts["shape"] not in names:
            raise ValueError(f"shape {opts['shape']!r} not in split {opts['split']!r}")
        names = [opts["shape"]]
    pred_dir = os.path.join(opts["out"], "predictions")
    os.makedirs(pred_dir, exist_ok=True)
    cache = _cache_dir(opts["out"])
    header = ["node_id", "x", "y"] + (["z"] if manifest.dim == 3 else [])
    for name in names:
        g = graphs[name]
        hier = (hierarchy_for(g, model.config.depth, model.config.c,
                              model.config.knn_k, cache)
                if model.config.kind == "tag-unet" else None)
        values = model.predict(g, hier)
        with open(os.path.join(pred_dir, f"{name}.csv"), "w",
                  encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(header + ["prediction"])
            for i in range(g.num_nodes):
                w.writerow([i] + [repr(float(v)) for v in g.coords[i]]
                           + [repr(float(values[i]))])
        print(f"{name}: {g.num_nodes} predictions")
    return 0


def _cmd_evaluate(opts) -> int:
    manifest, graphs = _load_dataset(opts["data"])
    model = load_checkpoint(opts["ckpt"])
    if model.config.dim != manifest.dim:
        raise ValueError(f"checkpoint is {model.config.dim}-D but dataset "
                         f"is {manifest.dim}-D")
    entries = manifest.split_entries(opts["split"])
    if not entries:
        raise ValueError(f"split {opts['split']!r} is empty")
    glist = [graphs[e.name] for e in entries]
    report = evaluation.evaluate_dataset(
        model, glist, opts["split"], threshold=opts["threshold"],
        cache_dir=_cache_dir(opts["out"]), jobs=opts["jobs"])
    evaluation.write_report(report, os.path.join(opts["out"], "report.json"))
    evaluation.write_scores_csv(report, os.path.join(opts["out"], "scores.csv"))
    evaluation.write_hist_csv(report, os.path.join(opts["out"], "hist.csv"))
    line = f"median R2 {report.median_r2:.4f} over {len(glist)} shapes"
    if report.threshold is not None:
        line += (f"; median accuracy {report.median_accuracy:.4f}, "
                 f"median F1 {report.median_f1:.4f}")
    print(line)
    return 0


def _cmd_compare(opts) -> int:
    manifest, graphs = _load_dataset(opts["data"])
    train_names = [e.name for e in manifest.split_entries("train")]
    test_names = [e.name for e in manifest.split_entries("test")]
    rows = []
    for model_name in str(opts["models"]).split(","):
        model_name = model_name.strip()
        if model_name not in MODEL_NAMES:
            raise ValueError(f"unknown model {model_name!r}")
        sub = {**opts, "model": model_name}
        run_dir = os.path.join(opts["out"], model_name)
        config = _model_config(manifest, sub)
        cache = _cache_dir(opts["out"])
        hiers = _hierarchies_for(graphs, config, cache)
        train_hiers = ({n: hiers[n] for n in train_names}
                       if hiers is not None else None)
        model, _ = training.train(config, _train_config(sub),
                                  [graphs[n] for n in train_names],
                                  train_hiers, out_dir=run_dir, log=print)
        scores = {}
        for split, names in (("train", train_names), ("test", test_names)):
            if not names:
                scores[split] = float("nan")
                continue
            rep = evaluation.evaluate_dataset(
                model, [graphs[n] for n in names], split,
                threshold=opts.get("threshold"), cache_dir=cache,
                jobs=opts["jobs"])
            evaluation.write_report(
                rep, os.path.join(run_dir, f"report_{split}.json"))
            scores[split] = rep.median_r2
        rows.append((model_name, count_params(config),
                     scores["train"], scores["test"]))

    lines = ["| Model | Parameters | Median train R2 | Median test R2 |",
             "|---|---|---|---|"]
    for name, params, tr, te in rows:
        lines.append(f"| {name} | {params} | {tr:.3f} | {te:.3f} |")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(opts["out"], "compare.md"), "w",
              encoding="utf-8") as f:
        f.write(table)
    print(table)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "hierarchy": _cmd_hierarchy,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        opts = _resolve_options(args)
        _write_resolved(opts, opts["out"], args.command)
        return _COMMANDS[args.command](opts)
    except (MGFError, ValueError, OSError, RuntimeError,
            FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
