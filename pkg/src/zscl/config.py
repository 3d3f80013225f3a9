"""Experiment configuration: a strict JSON schema with defaults filled in
and unknown keys rejected, so typos fail loudly instead of silently
corrupting an ablation.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .recipe import PRESETS, RecipeError, TrainRecipe, make_recipe


class ConfigError(ValueError):
    """A config document is malformed; the message names the offending key."""


BENCHMARK_DEFAULTS = {
    "type": "multi_domain",
    "num_domains": 5,
    "classes_per_domain": 20,
    "train_per_class": 500,
    "test_per_class": 50,
    "pretrain_per_class": 50,
    "image_dim": 32,
    "text_dim": 16,
    "embed_dim": 32,
    "hidden_width": 64,
    "prototype_scale": 1.0,
    "image_noise": 0.25,
    "text_noise": 0.05,
    "base_seed": 0,
    "steps": None,  # class_incremental only: per-step class counts
}

PRETRAIN_DEFAULTS = {
    "iterations": 600,
    "lr": 1e-2,
    "batch_size": 64,
    "label_smoothing": 0.0,
    "min_accuracy_ratio": 2.0,
}

TOP_LEVEL_KEYS = {
    "benchmark",
    "pretrain",
    "method",
    "recipe",
    "task_order",
    "seeds",
    "eval_mode",
    "output_dir",
}

RECIPE_KEYS = {f.name for f in dataclasses.fields(TrainRecipe)} - {"method"}


@dataclass
class ExperimentConfig:
    benchmark: dict
    pretrain: dict
    method: str
    recipe: TrainRecipe
    recipe_overrides: dict
    task_order: list  # task indices, or None for generation order
    seeds: list
    eval_mode: str
    output_dir: str

    def to_dict(self):
        return {
            "benchmark": dict(self.benchmark),
            "pretrain": dict(self.pretrain),
            "method": self.method,
            "recipe": dict(self.recipe_overrides),
            "task_order": list(self.task_order) if self.task_order is not None else None,
            "seeds": list(self.seeds),
            "eval_mode": self.eval_mode,
            "output_dir": self.output_dir,
        }

    def serialize(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def benchmark_hash(self, seed):
        """Key for the shared pretrained checkpoint: benchmark + pretrain
        sections plus the run seed; the method/recipe play no part."""
        doc = {"benchmark": self.benchmark, "pretrain": self.pretrain, "seed": seed}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def config_hash(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]


def _merge_section(name, defaults, given):
    if not isinstance(given, dict):
        raise ConfigError(f"{name} must be an object")
    merged = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {name}.{key}")
        merged[key] = value
    return merged


def parse_config(text):
    """Parse and validate a JSON experiment config."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown key {key}")

    benchmark = _merge_section("benchmark", BENCHMARK_DEFAULTS, doc.get("benchmark", {}))
    if benchmark["type"] not in ("multi_domain", "class_incremental"):
        raise ConfigError("benchmark.type must be multi_domain or class_incremental")
    if benchmark["type"] == "class_incremental" and not benchmark["steps"]:
        raise ConfigError("benchmark.steps is required for class_incremental")
    pretrain = _merge_section("pretrain", PRETRAIN_DEFAULTS, doc.get("pretrain", {}))

    method = doc.get("method", "ZSCL")
    if method not in PRESETS:
        raise ConfigError(f"method: unknown preset {method!r}; known: {sorted(PRESETS)}")
    overrides = doc.get("recipe", {})
    if not isinstance(overrides, dict):
        raise ConfigError("recipe must be an object")
    for key in overrides:
        if key not in RECIPE_KEYS:
            raise ConfigError(f"unknown key recipe.{key}")
    try:
        recipe = make_recipe(method, **overrides)
    except RecipeError as exc:
        raise ConfigError(f"recipe: {exc}") from exc

    seeds = doc.get("seeds", [1])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")
    task_order = doc.get("task_order")
    if task_order is not None and (
        not isinstance(task_order, list) or not all(isinstance(i, int) for i in task_order)
    ):
        raise ConfigError("task_order must be a list of task indices")
    eval_mode = doc.get("eval_mode", "task_incremental")
    if eval_mode not in ("task_incremental", "class_incremental"):
        raise ConfigError("eval_mode must be task_incremental or class_incremental")
    output_dir = doc.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a string")

    return ExperimentConfig(
        benchmark=benchmark,
        pretrain=pretrain,
        method=method,
        recipe=recipe,
        recipe_overrides=dict(overrides),
        task_order=task_order,
        seeds=seeds,
        eval_mode=eval_mode,
        output_dir=output_dir,
    )


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
