"""Synthetic multi-domain benchmark: Gaussian-prototype domain generation,
toy contrastive pretraining, task/class-incremental evaluation, the n x n
accuracy matrix, and the Transfer/Avg/Last metrics computed from it.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .contlearn import OptState, ReferenceSet, optimizer_step, trainable_mask
from .losses import Batch, ce_loss
from .model import TwoTowerModel, predict_batch
from .numerics import DimensionError

logger = logging.getLogger(__name__)

TEXT_PROJECTION_SEED = 987654321


class PretrainingFailedError(RuntimeError):
    """Pretraining did not reach above-chance zero-shot accuracy."""


@dataclass(frozen=True)
class DomainSpec:
    domain_id: int
    num_classes: int
    train_per_class: int = 50
    test_per_class: int = 50
    pretrain_per_class: int = 50
    prototype_scale: float = 1.0
    image_noise: float = 0.35
    text_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("a domain needs at least two classes")
        if min(self.image_noise, self.text_noise) < 0:
            raise ValueError("noise must be nonnegative")


@dataclass
class TaskData:
    task_id: int
    name: str
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    pretrain_images: np.ndarray  # held-out pool for pretraining / reference
    pretrain_labels: np.ndarray
    class_texts: np.ndarray
    class_offset: int = 0

    @property
    def num_classes(self):
        return self.class_texts.shape[0]


def text_projection(image_dim, text_dim, seed=TEXT_PROJECTION_SEED):
    """Fixed linear map from image-prototype space to text-feature space.

    Shared by every domain so that cross-domain zero-shot transfer is
    learnable from a mixture over domains.
    """
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(image_dim), size=(text_dim, image_dim))


def gen_domain(spec, image_dim, text_dim, projection=None, class_offset=0):
    """One domain: per-class spherical prototypes, noisy image samples, and
    projected (noisy) class text features, with disjoint splits."""
    if image_dim < 1 or text_dim < 1:
        raise DimensionError("dims must be positive")
    if projection is None:
        projection = text_projection(image_dim, text_dim)
    rng = np.random.default_rng(spec.seed)
    m = spec.num_classes
    protos = rng.normal(size=(m, image_dim))
    protos = spec.prototype_scale * protos / np.linalg.norm(protos, axis=1, keepdims=True)
    class_texts = protos @ projection.T + spec.text_noise * rng.normal(size=(m, text_dim))

    def draw(per_class):
        X = np.repeat(protos, per_class, axis=0)
        X = X + spec.image_noise * rng.normal(size=X.shape)
        y = np.repeat(np.arange(m), per_class)
        return X, y

    train_X, train_y = draw(spec.train_per_class)
    test_X, test_y = draw(spec.test_per_class)
    pre_X, pre_y = draw(spec.pretrain_per_class)
    return TaskData(
        task_id=spec.domain_id,
        name=f"domain{spec.domain_id}",
        train_images=train_X,
        train_labels=train_y,
        test_images=test_X,
        test_labels=test_y,
        pretrain_images=pre_X,
        pretrain_labels=pre_y,
        class_texts=class_texts,
        class_offset=class_offset,
    )


def split_class_incremental(base, steps):
    """Slice one domain's classes into sequential tasks.

    `steps` is a list of per-step class counts summing to the domain's
    class count (supports a larger first step).
    """
    if sum(steps) != base.num_classes:
        raise ValueError("step class counts must sum to the class count")
    tasks = []
    start = 0
    for i, width in enumerate(steps):
        classes = np.arange(start, start + width)

        def subset(X, y):
            keep = np.isin(y, classes)
            return X[keep], y[keep] - start

        tr_X, tr_y = subset(base.train_images, base.train_labels)
        te_X, te_y = subset(base.test_images, base.test_labels)
        pr_X, pr_y = subset(base.pretrain_images, base.pretrain_labels)
        tasks.append(
            TaskData(
                task_id=i,
                name=f"{base.name}-step{i}",
                train_images=tr_X,
                train_labels=tr_y,
                test_images=te_X,
                test_labels=te_y,
                pretrain_images=pr_X,
                pretrain_labels=pr_y,
                class_texts=base.class_texts[classes],
                class_offset=base.class_offset + start,
            )
        )
        start += width
    return tasks


def build_reference_set(tasks, rng, text_source="pool", random_texts=256):
    """Pools for distillation: all held-out images (shuffled, labels
    dropped) and either every task's class texts or random text features."""
    images = np.vstack([t.pretrain_images for t in tasks])
    images = images[rng.permutation(images.shape[0])]
    if text_source == "random":
        text_dim = tasks[0].class_texts.shape[1]
        scale = float(np.std(np.vstack([t.class_texts for t in tasks])))
        texts = rng.normal(0.0, scale, size=(random_texts, text_dim))
    else:
        texts = np.vstack([t.class_texts for t in tasks])
        texts = texts[rng.permutation(texts.shape[0])]
    return ReferenceSet(images, texts)


def global_class_texts(tasks):
    ordered = sorted(tasks, key=lambda t: t.class_offset)
    return np.vstack([t.class_texts for t in ordered])


def evaluate(model, task, mode="task_incremental", all_tasks=None):
    """Test-set accuracy with the candidate class set fixed by the mode."""
    if task.test_images.shape[0] == 0:
        raise DimensionError("task has no test data")
    if mode == "task_incremental":
        preds = predict_batch(model, task.test_images, task.class_texts)
        return float(np.mean(preds == task.test_labels))
    if mode == "class_incremental":
        if not all_tasks:
            raise ValueError("class-incremental evaluation needs all benchmark tasks")
        union = global_class_texts(all_tasks)
        preds = predict_batch(model, task.test_images, union)
        return float(np.mean(preds == task.test_labels + task.class_offset))
    raise ValueError(f"unknown evaluation mode {mode!r}")


@dataclass
class AccuracyMatrix:
    """values[t][j] = accuracy on task j after training task t (fractions)."""

    values: np.ndarray
    task_names: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.task_names)
        if self.values.shape != (n, n):
            raise DimensionError("accuracy matrix must be square over the task names")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("accuracies must lie in [0, 1]")


def build_matrix(snapshots, tasks, mode="task_incremental"):
    """Evaluate every post-task snapshot on every task."""
    if len(snapshots) != len(tasks):
        raise DimensionError("need one model snapshot per task")
    n = len(tasks)
    A = np.empty((n, n))
    for t, model in enumerate(snapshots):
        for j, task in enumerate(tasks):
            A[t, j] = evaluate(model, task, mode, all_tasks=tasks)
    return AccuracyMatrix(A, [t.name for t in tasks])


@dataclass
class MetricReport:
    transfer: float  # None when n == 1
    avg: float
    last: float
    per_dataset: dict  # name -> {"transfer": float|None, "avg": float, "last": float}


def compute_metrics(matrix):
    """Transfer/Avg/Last from the accuracy matrix.

    Transfer averages the strictly-upper-triangle entries per dataset first
    (dataset 1 has no such entries and is excluded), then across datasets.
    """
    A = matrix.values
    n = A.shape[0]
    per = {}
    transfer_cols = []
    for j, name in enumerate(matrix.task_names):
        tj = float(np.mean(A[:j, j])) if j >= 1 else None
        per[name] = {"transfer": tj, "avg": float(np.mean(A[:, j])), "last": float(A[n - 1, j])}
        if tj is not None:
            transfer_cols.append(tj)
    transfer = float(np.mean(transfer_cols)) if transfer_cols else None
    avg = float(np.mean([per[name]["avg"] for name in matrix.task_names]))
    last = float(np.mean(A[n - 1, :]))
    return MetricReport(transfer, avg, last, per)


def pretrain_toy(
    model,
    domains,
    iterations=2000,
    lr=1e-2,
    batch_size=64,
    label_smoothing=0.0,
    min_accuracy_ratio=2.0,
    rng=None,
):
    """Stand-in for contrastive pretraining: cross entropy over a mixture of
    all domains' held-out pools against the union class set, temperature
    trainable.

    Raises PretrainingFailedError unless zero-shot accuracy on every
    domain's test set ends above `min_accuracy_ratio / num_classes`.
    """
    if len(domains) < 2:
        raise ValueError("pretraining needs at least two domains")
    if rng is None:
        rng = np.random.default_rng(0)
    X = np.vstack([t.pretrain_images for t in domains])
    y = np.concatenate([t.pretrain_labels + t.class_offset for t in domains])
    texts = global_class_texts(domains)
    student = model.copy()
    opt = OptState.init(student.params.values.size, lr)
    mask = trainable_mask(student.params, train_log_temperature=True)
    n = X.shape[0]
    for _ in range(iterations):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        res = ce_loss(student, Batch(X[idx], y[idx], texts), label_smoothing)
        opt, new_params = optimizer_step(opt, student.params, res.grad, mask)
        student = TwoTowerModel(student.arch, new_params)
    accs = {t.name: evaluate(student, t, "task_incremental") for t in domains}
    for t in domains:
        if accs[t.name] <= min_accuracy_ratio / t.num_classes:
            raise PretrainingFailedError(
                f"zero-shot accuracy after pretraining: {accs}; "
                f"{t.name} did not exceed {min_accuracy_ratio}/{t.num_classes}"
            )
    logger.info("pretraining zero-shot accuracies: %s", accs)
    return student
