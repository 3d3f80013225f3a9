"""Continual-learning trainer: AdamW-style optimizer, reference and replay
batching, teacher selection, and the per-task training loop that wires the
losses to the weight-space operations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .losses import Batch, RefBatch, ce_loss, total_loss
from .model import LOG_TEMPERATURE, TwoTowerModel
from .numerics import DimensionError
from .weightspace import we_init, we_should_sample, we_update, wise_interpolate

logger = logging.getLogger(__name__)

LOG_FIELDS = ("iter", "ce", "dist_img", "dist_txt", "wc", "total")


class OptimizerError(RuntimeError):
    """A step was rejected (non-finite gradient)."""


@dataclass
class OptState:
    """Bias-corrected adaptive moments with decoupled weight decay."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def init(cls, n_params, lr, weight_decay=0.0):
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), lr=lr, weight_decay=weight_decay)


def optimizer_step(state, params, grad, mask=None):
    """One AdamW update; weight decay is applied directly to the parameters.

    `mask` (0/1 per parameter) freezes entries where it is 0.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise DimensionError("gradient length mismatch")
    if not np.all(np.isfinite(grad)):
        raise OptimizerError("non-finite gradient; step rejected")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    update = state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * params.values)
    if mask is not None:
        update = update * mask
    new_params = type(params)(params.layout, params.values - update)
    new_state = OptState(m, v, t, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay)
    return new_state, new_params


@dataclass
class ReferenceSet:
    """Unlabeled, unmatched pools of image and text features."""

    images: np.ndarray
    texts: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.texts = np.asarray(self.texts, dtype=np.float64)
        if self.images.shape[0] < 1 or self.texts.shape[0] < 2:
            raise DimensionError("reference pools too small")


def sample_ref_batch(ref, sizes, rng, require_multi_image=False):
    """Uniform without-replacement draw from the reference pools.

    Returns (batch, with_replacement): pools smaller than the request fall
    back to sampling with replacement, flagged in the second element.
    """
    n_img, n_txt = sizes
    if n_txt < 2:
        raise DimensionError("a distribution needs at least two reference texts")
    if require_multi_image and n_img < 2:
        raise DimensionError("text-side distillation needs at least two reference images")
    with_replacement = False
    picks = []
    for pool, want in ((ref.images, n_img), (ref.texts, n_txt)):
        if want > pool.shape[0]:
            with_replacement = True
            picks.append(rng.choice(pool.shape[0], size=want, replace=True))
        else:
            picks.append(rng.choice(pool.shape[0], size=want, replace=False))
    if with_replacement:
        logger.warning("reference pool smaller than request; sampling with replacement")
    return RefBatch(ref.images[picks[0]], ref.texts[picks[1]]), with_replacement


@dataclass
class ReplayMemory:
    """Class-balanced-per-task exemplar store with a fixed capacity."""

    capacity: int
    images: dict = field(default_factory=dict)  # task_id -> array of image features
    labels: dict = field(default_factory=dict)  # task_id -> array of labels
    class_texts: dict = field(default_factory=dict)  # task_id -> class text matrix

    @property
    def size(self):
        return sum(x.shape[0] for x in self.images.values())

    def copy(self):
        return ReplayMemory(
            self.capacity,
            {k: v.copy() for k, v in self.images.items()},
            {k: v.copy() for k, v in self.labels.items()},
            {k: v.copy() for k, v in self.class_texts.items()},
        )


def update_replay_memory(mem, task, rng):
    """Rebalance to equal per-task quotas and add the new task's exemplars."""
    if mem.capacity < 1:
        raise ValueError("replay requires capacity >= 1")
    new = mem.copy()
    tasks_seen = len(new.images) + 1
    quota = mem.capacity // tasks_seen
    if quota < 1:
        raise ValueError("capacity smaller than number of tasks seen")
    for tid in list(new.images):
        if new.images[tid].shape[0] > quota:
            keep = rng.choice(new.images[tid].shape[0], size=quota, replace=False)
            new.images[tid] = new.images[tid][keep]
            new.labels[tid] = new.labels[tid][keep]
    n = task.train_images.shape[0]
    pick = rng.choice(n, size=min(quota, n), replace=False)
    new.images[task.task_id] = task.train_images[pick]
    new.labels[task.task_id] = task.train_labels[pick]
    new.class_texts[task.task_id] = task.class_texts.copy()
    return new


def select_teacher(recipe, initial, previous):
    """Initial model, previous-task model, or their interpolation."""
    if recipe.teacher == "initial":
        return initial
    if recipe.teacher == "previous":
        return previous
    params = wise_interpolate(initial.params, previous.params, recipe.teacher_wise_alpha)
    return TwoTowerModel(initial.arch, params)


def _replay_ce(student, mem, rng, batch_size, eps):
    """Mean CE over a replayed exemplar batch, grouped per source task."""
    total = min(batch_size, mem.size)
    if total == 0:
        return 0, 0.0, None
    # proportional draw across tasks, deterministic given rng order
    parts = []
    remaining = total
    tids = sorted(mem.images)
    for i, tid in enumerate(tids):
        avail = mem.images[tid].shape[0]
        want = min(avail, remaining if i == len(tids) - 1 else max(1, total // len(tids)))
        want = min(want, remaining)
        if want == 0:
            continue
        idx = rng.choice(avail, size=want, replace=False)
        parts.append((tid, idx))
        remaining -= want
    n_total = 0
    loss_sum = 0.0
    grad = np.zeros_like(student.params.values)
    for tid, idx in parts:
        batch = Batch(mem.images[tid][idx], mem.labels[tid][idx], mem.class_texts[tid])
        res = ce_loss(student, batch, eps)
        n = idx.shape[0]
        n_total += n
        loss_sum += n * res.value.total
        grad += n * res.grad
    return n_total, loss_sum, grad


def trainable_mask(params, train_log_temperature):
    mask = np.ones_like(params.values)
    if not train_log_temperature:
        mask[params.layout.slice_of(LOG_TEMPERATURE)] = 0.0
    return mask


def train_task(model, task, recipe, ref, initial, mem, rng, ensemble=None):
    """Train on one task; returns (model, memory, log, ensemble state).

    The log holds one tuple per iteration in LOG_FIELDS order. Weight
    ensembling and the post-hoc interpolation are applied at task end.
    A previous task's ensemble state is continued only when the recipe
    sets we_carry_across_tasks; otherwise each task re-seeds its own.
    """
    recipe.validate()
    student = model.copy()
    previous = model.copy()
    teacher = select_teacher(recipe, initial, previous)
    wc_ref = initial.params if recipe.wc_reference == "initial" else previous.params
    if recipe.distills and recipe.data_source == "reference" and ref is None:
        raise ValueError("recipe distills from a reference set but none was given")

    opt = OptState.init(student.params.values.size, recipe.lr, recipe.weight_decay)
    mask = trainable_mask(student.params, recipe.train_log_temperature)
    if recipe.we_on:
        if not (recipe.we_carry_across_tasks and ensemble is not None):
            ensemble = we_init(student.params)
    else:
        ensemble = None

    n_train = task.train_images.shape[0]
    text_side = recipe.distill_sides in ("text", "both")
    log_rows = []
    for it in range(1, recipe.iterations + 1):
        idx = rng.choice(n_train, size=min(recipe.batch_size, n_train), replace=False)
        batch = Batch(task.train_images[idx], task.train_labels[idx], task.class_texts)
        ref_batch = None
        if recipe.distills:
            if recipe.data_source == "reference":
                ref_batch, _ = sample_ref_batch(
                    ref,
                    (recipe.ref_batch_images, recipe.ref_batch_texts),
                    rng,
                    require_multi_image=text_side,
                )
            else:
                ref_batch = RefBatch(batch.images, task.class_texts)
        res = total_loss(recipe, student, teacher, initial.params, batch, ref_batch, wc_ref)
        value, grad = res.value, res.grad

        if recipe.replay_on and mem.size > 0:
            n_rep, rep_loss_sum, rep_grad = _replay_ce(
                student, mem, rng, recipe.batch_size, recipe.label_smoothing
            )
            if n_rep > 0:
                n_main = batch.images.shape[0]
                main_ce = value.components["ce"]
                main_ce_grad = ce_loss(student, batch, recipe.label_smoothing).grad
                mixed_ce = (n_main * main_ce + rep_loss_sum) / (n_main + n_rep)
                mixed_grad = (n_main * main_ce_grad + rep_grad) / (n_main + n_rep)
                grad = grad - main_ce_grad + mixed_grad
                value.total += mixed_ce - main_ce
                value.components["ce"] = mixed_ce

        opt, new_params = optimizer_step(opt, student.params, grad, mask)
        student = TwoTowerModel(student.arch, new_params)
        if recipe.we_on and we_should_sample(it, recipe.we_interval):
            ensemble = we_update(ensemble, student.params)
        c = value.components
        log_rows.append(
            (it, c.get("ce", 0.0), c.get("dist_img", 0.0), c.get("dist_txt", 0.0),
             c.get("wc", 0.0), value.total)
        )

    if recipe.we_on:
        student = TwoTowerModel(student.arch, ensemble.average.copy())
    if recipe.wise_ft_post_on:
        anchor = initial if recipe.wise_ft_anchor == "initial" else previous
        student = TwoTowerModel(
            student.arch,
            wise_interpolate(anchor.params, student.params, recipe.wise_ft_alpha),
        )
    if recipe.replay_on:
        mem = update_replay_memory(mem, task, rng)
    return student, mem, log_rows, ensemble


def write_iteration_log(path, log_rows):
    """Emit the per-iteration component losses as CSV."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(LOG_FIELDS) + "\n")
        for row in log_rows:
            it, rest = row[0], row[1:]
            fh.write(str(it) + "," + ",".join(f"{x:.10g}" for x in rest) + "\n")
