"""Run orchestration: generate the benchmark, pretrain (with caching),
run the continual sequence, and emit the matrix, metrics, checkpoints,
manifest, and cross-method comparison report.
"""

import json
import logging
import os
import time

import numpy as np

from . import benchmark as bm
from .config import ConfigError
from .contlearn import ReplayMemory, train_task, write_iteration_log
from .model import Arch, TwoTowerModel, init_params, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def arch_from_config(config):
    b = config.benchmark
    return Arch(
        image_dim=b["image_dim"],
        text_dim=b["text_dim"],
        embed_dim=b["embed_dim"],
        image_hidden=(b["hidden_width"],),
        text_hidden=(b["hidden_width"],),
    )


def generate_tasks(config, seed):
    """Benchmark tasks for one run seed, in generation order."""
    b = config.benchmark
    projection = bm.text_projection(b["image_dim"], b["text_dim"])
    data_seed = b["base_seed"] + 1000 * seed
    if b["type"] == "multi_domain":
        tasks = []
        offset = 0
        for d in range(b["num_domains"]):
            spec = bm.DomainSpec(
                domain_id=d,
                num_classes=b["classes_per_domain"],
                train_per_class=b["train_per_class"],
                test_per_class=b["test_per_class"],
                pretrain_per_class=b["pretrain_per_class"],
                prototype_scale=b["prototype_scale"],
                image_noise=b["image_noise"],
                text_noise=b["text_noise"],
                seed=data_seed + d,
            )
            tasks.append(
                bm.gen_domain(spec, b["image_dim"], b["text_dim"], projection, offset)
            )
            offset += b["classes_per_domain"]
        return tasks
    # class_incremental: one domain sliced into steps
    spec = bm.DomainSpec(
        domain_id=0,
        num_classes=sum(b["steps"]),
        train_per_class=b["train_per_class"],
        test_per_class=b["test_per_class"],
        pretrain_per_class=b["pretrain_per_class"],
        prototype_scale=b["prototype_scale"],
        image_noise=b["image_noise"],
        text_noise=b["text_noise"],
        seed=data_seed,
    )
    base = bm.gen_domain(spec, b["image_dim"], b["text_dim"], projection, 0)
    return bm.split_class_incremental(base, b["steps"])


def ordered_tasks(config, tasks):
    if config.task_order is None:
        return list(tasks)
    if sorted(config.task_order) != list(range(len(tasks))):
        raise ConfigError("task_order must be a permutation of the generated tasks")
    return [tasks[i] for i in config.task_order]


def pretrained_model(config, seed, cache_dir):
    """Pretrain, or load the cached checkpoint for this benchmark + seed."""
    key = config.benchmark_hash(seed)
    path = os.path.join(cache_dir, f"pretrained-{key}.ckpt")
    if os.path.exists(path):
        return load_checkpoint(path)
    arch = arch_from_config(config)
    tasks = generate_tasks(config, seed)
    rng = np.random.default_rng(seed)
    model = TwoTowerModel(arch, init_params(arch, rng))
    p = config.pretrain
    model = bm.pretrain_toy(
        model,
        tasks,
        iterations=p["iterations"],
        lr=p["lr"],
        batch_size=p["batch_size"],
        label_smoothing=p["label_smoothing"],
        min_accuracy_ratio=p["min_accuracy_ratio"],
        rng=rng,
    )
    os.makedirs(cache_dir, exist_ok=True)
    save_checkpoint(path, model)
    return model


def write_matrix_csv(path, matrix):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(matrix.task_names) + "\n")
        for row in matrix.values:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def metrics_to_json(report):
    return {
        "transfer": report.transfer,
        "avg": report.avg,
        "last": report.last,
        "per_dataset": report.per_dataset,
    }


def run_experiment(config, seed, out_dir, cache_dir=None):
    """One full continual run for one seed; returns the manifest dict."""
    start = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    if cache_dir is None:
        cache_dir = os.path.join(os.path.dirname(os.path.normpath(out_dir)) or ".", "pretrained")
    initial = pretrained_model(config, seed, cache_dir)
    tasks = ordered_tasks(config, generate_tasks(config, seed))
    recipe = config.recipe
    rng = np.random.default_rng(10_000 + seed)
    ref = None
    if recipe.distills and recipe.data_source == "reference":
        ref = bm.build_reference_set(tasks, rng, recipe.ref_text_source)
    mem = ReplayMemory(recipe.replay_capacity) if recipe.replay_on else ReplayMemory(0)

    model = initial.copy()
    snapshots = []
    checkpoint_paths = []
    ensemble = None
    for i, task in enumerate(tasks):
        model, mem, log_rows, ensemble = train_task(
            model, task, recipe, ref, initial, mem, rng, ensemble=ensemble
        )
        snapshots.append(model.copy())
        ckpt = os.path.join(out_dir, f"task_{i:02d}.ckpt")
        save_checkpoint(ckpt, model)
        checkpoint_paths.append(ckpt)
        write_iteration_log(os.path.join(out_dir, f"task_{i:02d}_log.csv"), log_rows)

    matrix = bm.build_matrix(snapshots, tasks, config.eval_mode)
    metrics = bm.compute_metrics(matrix)
    zs_matrix = bm.build_matrix([initial] * len(tasks), tasks, config.eval_mode)
    zs_metrics = bm.compute_metrics(zs_matrix)

    matrix_path = os.path.join(out_dir, "matrix.csv")
    write_matrix_csv(matrix_path, matrix)
    metrics_path = os.path.join(out_dir, "metrics.json")
    with open(metrics_path, "w") as fh:
        json.dump(metrics_to_json(metrics), fh, indent=2, sort_keys=True)
    zs_path = os.path.join(out_dir, "zeroshot_metrics.json")
    with open(zs_path, "w") as fh:
        json.dump(metrics_to_json(zs_metrics), fh, indent=2, sort_keys=True)

    manifest = {
        "config_hash": config.config_hash(),
        "benchmark_hash": config.benchmark_hash(seed),
        "method": config.method,
        "seed": seed,
        "checkpoints": checkpoint_paths,
        "matrix": matrix_path,
        "metrics": metrics_path,
        "zeroshot_metrics": zs_path,
        "param_shift": float(np.linalg.norm(model.params.values - initial.params.values)),
        "wall_clock_s": time.monotonic() - start,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def run_all_seeds(config, out_root, cache_dir=None):
    manifests = []
    for seed in config.seeds:
        out_dir = os.path.join(out_root, f"seed{seed}")
        manifests.append(run_experiment(config, seed, out_dir, cache_dir))
    return manifests


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def emit_report(manifests, csv_path=None):
    """Per-method Transfer/Avg/Last medians with deltas vs zero-shot.

    All manifests must come from the same benchmark family (matching
    per-seed benchmark hashes across methods).
    """
    if not manifests:
        raise ValueError("no manifests to report on")
    by_seed = {}
    for m in manifests:
        by_seed.setdefault(m["seed"], set()).add(m["benchmark_hash"])
    for seed, hashes in by_seed.items():
        if len(hashes) > 1:
            raise ValueError(f"manifests for seed {seed} use different benchmarks")

    def med(values):
        vals = [v for v in values if v is not None]
        return float(np.median(vals)) if vals else None

    methods = {}
    for m in manifests:
        methods.setdefault(m["method"], []).append(m)
    zs_all = [_load_json(m["zeroshot_metrics"]) for m in manifests]
    zs_row = {k: med([z[k] for z in zs_all]) for k in ("transfer", "avg", "last")}

    rows = [
        {
            "method": "ZeroShot",
            **zs_row,
            "d_transfer": 0.0,
            "d_avg": 0.0,
            "d_last": 0.0,
            "param_shift": 0.0,
        }
    ]
    for method in sorted(methods):
        ms = [_load_json(m["metrics"]) for m in methods[method]]
        row = {"method": method}
        for k in ("transfer", "avg", "last"):
            row[k] = med([x[k] for x in ms])
            delta = None
            if row[k] is not None and zs_row[k] is not None:
                delta = row[k] - zs_row[k]
            row[f"d_{k}"] = delta
        row["param_shift"] = med([m["param_shift"] for m in methods[method]])
        rows.append(row)

    if csv_path is not None:
        cols = ["method", "transfer", "d_transfer", "avg", "d_avg", "last", "d_last", "param_shift"]
        with open(csv_path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(
                    ",".join(
                        "" if row[c] is None else (row[c] if c == "method" else f"{row[c]:.6f}")
                        for c in cols
                    )
                    + "\n"
                )
    return rows


def format_report(rows):
    """Human-readable table, accuracies rendered as percent with 1 decimal."""

    def pct(x):
        return "  -  " if x is None else f"{100.0 * x:5.1f}"

    lines = [f"{'method':<12} {'Transfer':>8} {'Δ':>6} {'Avg':>8} {'Δ':>6} {'Last':>8} {'Δ':>6}"]
    for row in rows:
        lines.append(
            f"{row['method']:<12} {pct(row['transfer']):>8} {pct(row['d_transfer']):>6} "
            f"{pct(row['avg']):>8} {pct(row['d_avg']):>6} "
            f"{pct(row['last']):>8} {pct(row['d_last']):>6}"
        )
    return "\n".join(lines)
