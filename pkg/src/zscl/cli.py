"""Command-line front end.

Verbs:
  generate  write the benchmark data for inspection (npz per task)
  pretrain  build (or refresh) the cached pretrained checkpoint
  run       execute the continual sequence and emit all artifacts
  report    aggregate manifests into a method-comparison table
  check     quick built-in property checks (gradient, ensemble, metrics)
"""

import argparse
import glob
import json
import logging
import os
import sys

import numpy as np

from . import benchmark as bm
from . import experiment
from .config import ConfigError, load_config
from .losses import Batch, RefBatch, ce_loss, distill_image_loss
from .model import Arch, TwoTowerModel, init_params
from .numerics import finite_diff_grad
from .weightspace import we_init, we_update


def _apply_order(config, order):
    if order is None:
        return
    if order == "default":
        config.task_order = None
    elif order == "reverse":
        # size known only after generation; resolved per-seed below
        config.task_order = list(reversed(range(len(experiment.generate_tasks(config, config.seeds[0])))))
    else:
        config.task_order = [int(x) for x in order.split(",")]


def cmd_generate(args):
    config = load_config(args.config)
    _apply_order(config, args.order)
    seed = args.seed if args.seed is not None else config.seeds[0]
    tasks = experiment.ordered_tasks(config, experiment.generate_tasks(config, seed))
    os.makedirs(args.out, exist_ok=True)
    for i, t in enumerate(tasks):
        path = os.path.join(args.out, f"task_{i:02d}_{t.name}.npz")
        np.savez(
            path,
            train_images=t.train_images,
            train_labels=t.train_labels,
            test_images=t.test_images,
            test_labels=t.test_labels,
            pretrain_images=t.pretrain_images,
            pretrain_labels=t.pretrain_labels,
            class_texts=t.class_texts,
            class_offset=t.class_offset,
        )
        print(f"wrote {path}")
    return 0


def cmd_pretrain(args):
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]
    cache_dir = os.path.join(args.out, "pretrained")
    model = experiment.pretrained_model(config, seed, cache_dir)
    tasks = experiment.generate_tasks(config, seed)
    accs = {t.name: bm.evaluate(model, t) for t in tasks}
    print(f"pretrained checkpoint cached under {cache_dir}")
    for name, acc in accs.items():
        print(f"  zero-shot {name}: {100 * acc:.1f}%")
    return 0


def cmd_run(args):
    config = load_config(args.config)
    _apply_order(config, args.order)
    seeds = [args.seed] if args.seed is not None else config.seeds
    cache_dir = os.path.join(args.out, "pretrained")
    for seed in seeds:
        out_dir = os.path.join(args.out, config.method, f"seed{seed}")
        manifest = experiment.run_experiment(config, seed, out_dir, cache_dir)
        with open(manifest["metrics"]) as fh:
            metrics = json.load(fh)
        transfer = metrics["transfer"]
        print(
            f"{config.method} seed {seed}: "
            f"transfer={'-' if transfer is None else f'{100 * transfer:.1f}'} "
            f"avg={100 * metrics['avg']:.1f} last={100 * metrics['last']:.1f} "
            f"({manifest['wall_clock_s']:.1f}s) -> {out_dir}"
        )
    return 0


def cmd_report(args):
    paths = []
    for pattern in args.manifests:
        paths.extend(sorted(glob.glob(pattern)))
    if not paths:
        print("no manifests matched", file=sys.stderr)
        return 1
    manifests = []
    for path in paths:
        with open(path) as fh:
            manifests.append(json.load(fh))
    csv_path = os.path.join(args.out, "report.csv")
    os.makedirs(args.out, exist_ok=True)
    rows = experiment.emit_report(manifests, csv_path)
    print(experiment.format_report(rows))
    print(f"\nwrote {csv_path}")
    return 0


def cmd_check(args):
    """Fast self-checks of the core numerical properties."""
    failures = []

    def check(name, ok):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(0)
    arch = Arch(image_dim=6, text_dim=5, embed_dim=4, image_hidden=(5,), text_hidden=(5,))
    model = TwoTowerModel(arch, init_params(arch, rng))
    batch = Batch(rng.normal(size=(4, 6)), rng.integers(0, 3, 4), rng.normal(size=(3, 5)))

    def ce_of(v):
        m = TwoTowerModel(arch, type(model.params)(model.params.layout, v))
        return ce_loss(m, batch, 0.1).value.total

    analytic = ce_loss(model, batch, 0.1).grad
    numeric = finite_diff_grad(ce_of, model.params.values)
    rel = np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-12)
    check(f"ce gradient vs finite differences (rel {rel:.2e})", rel <= 1e-5)

    teacher = TwoTowerModel(arch, init_params(arch, rng))
    ref = RefBatch(rng.normal(size=(4, 6)), rng.normal(size=(4, 5)))
    g = distill_image_loss(teacher.copy(), teacher, ref).grad
    check(f"distillation stationary at student=teacher (inf-norm {np.abs(g).max():.2e})",
          np.abs(g).max() <= 1e-9)

    state = we_init(model.params)
    samples = [model.params.values]
    for _ in range(25):
        v = rng.normal(size=model.params.values.size)
        samples.append(v)
        state = we_update(state, type(model.params)(model.params.layout, v))
    err = np.abs(state.average.values - np.mean(samples, axis=0)).max()
    check(f"weight-ensemble running mean identity (err {err:.2e})", err <= 1e-12)

    A = bm.AccuracyMatrix(np.array([[0.80, 0.50, 0.40], [0.70, 0.90, 0.45], [0.65, 0.85, 0.95]]),
                          ["a", "b", "c"])
    rep = bm.compute_metrics(A)
    ok = (
        abs(rep.transfer - 0.4625) <= 1e-12
        and abs(rep.avg - 0.6888888888888889) <= 1e-12
        and abs(rep.last - 0.8166666666666667) <= 1e-12
    )
    check("metric arithmetic on the hand matrix", ok)

    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="zscl", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--order", default=None,
                       help="task order: 'default', 'reverse', or comma-separated indices")

    p = sub.add_parser("generate", help="write benchmark task data")
    common(p)
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("pretrain", help="build the cached pretrained checkpoint")
    common(p)
    p.set_defaults(func=cmd_pretrain)
    p = sub.add_parser("run", help="run the continual-learning experiment")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("report", help="aggregate run manifests into a comparison table")
    p.add_argument("manifests", nargs="+", help="manifest.json paths or globs")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("check", help="run quick built-in property checks")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
