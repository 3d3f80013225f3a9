"""Training objectives with analytic gradients over the flat parameter
vector: cross entropy on task batches, image/text distribution distillation
against a frozen teacher, a feature-distance variant, squared-L2 weight
consolidation, and the weighted composite of all of them.

Every gradient here is checked against the central-difference oracle in
`numerics.finite_diff_grad` by the test suite; the probability floor is
applied identically in values and gradients so the two agree.
"""

from dataclasses import dataclass

import numpy as np

from .model import LOG_TEMPERATURE
from .numerics import PROB_FLOOR, DimensionError, softmax_rows


@dataclass
class LossValue:
    total: float
    components: dict  # name -> raw (unweighted) value
    weights: dict  # name -> weight applied in `total`


@dataclass
class GradResult:
    value: LossValue
    grad: np.ndarray


@dataclass
class Batch:
    """Labeled task data for the cross-entropy term."""

    images: np.ndarray  # N x D_img
    labels: np.ndarray  # N, indices into class_texts
    class_texts: np.ndarray  # m x D_txt

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_texts = np.asarray(self.class_texts, dtype=np.float64)
        if self.images.shape[0] < 1:
            raise DimensionError("batch needs at least one image")
        if self.labels.shape != (self.images.shape[0],):
            raise DimensionError("one label per image required")
        if self.labels.min() < 0 or self.labels.max() >= self.class_texts.shape[0]:
            raise DimensionError("label outside class range")


@dataclass
class RefBatch:
    """Unlabeled, unmatched reference features for distillation."""

    images: np.ndarray  # R x D_img
    texts: np.ndarray  # S x D_txt

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.texts = np.asarray(self.texts, dtype=np.float64)
        if self.images.shape[0] < 1:
            raise DimensionError("reference batch needs at least one image")
        if self.texts.shape[0] < 2:
            raise DimensionError("a distribution needs at least two texts")


def _single_value(name, raw):
    return LossValue(total=raw, components={name: raw}, weights={name: 1.0})


def smooth_targets(label, m, eps):
    """(1-eps) * one-hot + eps/m * uniform."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("smoothing must be in [0, 1)")
    if not 0 <= label < m:
        raise ValueError("label outside class range")
    t = np.full(m, eps / m)
    t[label] += 1.0 - eps
    return t


def _ce_of_rows(targets, P, weight):
    """Mean cross entropy of probability rows against target rows.

    Returns (loss, dloss/dlogits) where the logits are the softmax inputs
    that produced P. `weight` is the per-row averaging factor.
    """
    Pc = np.maximum(P, PROB_FLOOR)
    loss = float(-(targets * np.log(Pc)).sum() * weight)
    G_P = -(targets / Pc) * (P > PROB_FLOOR) * weight
    G_L = P * (G_P - (G_P * P).sum(axis=1, keepdims=True))
    return loss, G_L


def _encode_pair(model, images, texts):
    E, img_cache = model.encode_image(images, want_cache=True)
    T, txt_cache = model.encode_text(texts, want_cache=True)
    return E, T, img_cache, txt_cache


def _assemble_grad(model, img_cache, txt_cache, G_E, G_T, dlog_tau):
    grad = model.tower_backward("img", img_cache, G_E)
    grad += model.tower_backward("txt", txt_cache, G_T)
    grad[model.params.layout.slice_of(LOG_TEMPERATURE)] = dlog_tau
    return grad


def ce_loss(model, batch, eps):
    """Mean cross entropy of temperature-scaled similarities vs smoothed
    one-hot targets, with the gradient over all parameters."""
    E, T, img_cache, txt_cache = _encode_pair(model, batch.images, batch.class_texts)
    tau = model.temperature
    S = E @ T.T
    L = tau * S
    P = softmax_rows(L)
    m = batch.class_texts.shape[0]
    targets = np.stack([smooth_targets(y, m, eps) for y in batch.labels])
    loss, G_L = _ce_of_rows(targets, P, 1.0 / batch.images.shape[0])
    dlog_tau = float((G_L * L).sum())  # d(tau*S)/d(log tau) = tau*S
    G_S = tau * G_L
    grad = _assemble_grad(model, img_cache, txt_cache, G_S @ T, G_S.T @ E, dlog_tau)
    return GradResult(_single_value("ce", loss), grad)


def _distribution_loss(student, teacher, ref, over, literal_eq3, tau_override):
    """Shared body of the image- and text-side distillation losses.

    `over` selects which axis indexes the distributions: "image" gives one
    distribution over texts per reference image, "text" the transpose.
    """
    if student.arch != teacher.arch:
        raise DimensionError("student and teacher arch differ")
    if over == "text" and ref.images.shape[0] < 2:
        raise DimensionError("text-side distillation needs at least two images")
    E_s, T_s, img_cache, txt_cache = _encode_pair(student, ref.images, ref.texts)
    E_t = teacher.encode_image(ref.images)
    T_t = teacher.encode_text(ref.texts)
    tau_s = tau_override if tau_override is not None else student.temperature
    tau_t = tau_override if tau_override is not None else teacher.temperature

    S_s = E_s @ T_s.T
    S_t = E_t @ T_t.T
    if over == "text":
        S_s, S_t = S_s.T, S_t.T
    L = tau_s * S_s
    P = softmax_rows(L)
    Pbar = softmax_rows(tau_t * S_t)
    n_rows = P.shape[0]
    if literal_eq3:
        # As printed: -sum p * log(pbar); gradient flows through p only.
        logPbar = np.log(np.maximum(Pbar, PROB_FLOOR))
        loss = float(-(P * logPbar).sum() / n_rows)
        G_P = -logPbar / n_rows
        G_L = P * (G_P - (G_P * P).sum(axis=1, keepdims=True))
    else:
        loss, G_L = _ce_of_rows(Pbar, P, 1.0 / n_rows)
    dlog_tau = float((G_L * L).sum()) if tau_override is None else 0.0
    G_S = tau_s * G_L
    if over == "text":
        G_S = G_S.T
    grad = _assemble_grad(student, img_cache, txt_cache, G_S @ T_s, G_S.T @ E_s, dlog_tau)
    return loss, grad


def distill_image_loss(student, teacher, ref, literal_eq3=False, tau_override=None):
    """Per reference image, match the student's distribution over reference
    texts to the frozen teacher's."""
    loss, grad = _distribution_loss(student, teacher, ref, "image", literal_eq3, tau_override)
    return GradResult(_single_value("dist_img", loss), grad)


def distill_text_loss(student, teacher, ref, literal_eq3=False, tau_override=None):
    """Per reference text, match the student's distribution over reference
    images to the frozen teacher's."""
    loss, grad = _distribution_loss(student, teacher, ref, "text", literal_eq3, tau_override)
    return GradResult(_single_value("dist_txt", loss), grad)


def feature_distance_loss(student, teacher, ref):
    """Mean squared L2 distance between student and teacher embeddings over
    the reference images and texts."""
    if student.arch != teacher.arch:
        raise DimensionError("student and teacher arch differ")
    E_s, T_s, img_cache, txt_cache = _encode_pair(student, ref.images, ref.texts)
    E_t = teacher.encode_image(ref.images)
    T_t = teacher.encode_text(ref.texts)
    n = ref.images.shape[0] + ref.texts.shape[0]
    dE = E_s - E_t
    dT = T_s - T_t
    loss = float(((dE**2).sum() + (dT**2).sum()) / n)
    grad = _assemble_grad(student, img_cache, txt_cache, 2.0 * dE / n, 2.0 * dT / n, 0.0)
    return GradResult(_single_value("feat_dist", loss), grad)


def wc_loss(theta, theta_bar):
    """Squared-L2 consolidation toward reference parameters."""
    if theta.layout != theta_bar.layout:
        raise DimensionError("parameter layouts differ")
    d = theta.values - theta_bar.values
    loss = float((d**2).sum())
    return GradResult(_single_value("wc", loss), 2.0 * d)


def total_loss(recipe, student, teacher, init_params, batch, ref, wc_ref=None):
    """Weighted composite: ce + lam * distillation (+ feature distance) +
    mu * weight consolidation, with per-component reporting."""
    components = {}
    weights = {}
    grad = np.zeros_like(student.params.values)

    r = ce_loss(student, batch, recipe.label_smoothing)
    components["ce"] = r.value.total
    weights["ce"] = 1.0
    grad += r.grad

    if recipe.distills:
        if ref is None:
            raise ValueError("recipe requests distillation but no reference batch given")
        if recipe.distill_sides == "feat_dist":
            r = feature_distance_loss(student, teacher, ref)
            components["feat_dist"] = r.value.total
            weights["feat_dist"] = recipe.lam
            grad += recipe.lam * r.grad
        else:
            if recipe.distill_sides in ("image", "both"):
                r = distill_image_loss(
                    student, teacher, ref, recipe.literal_eq3, recipe.distill_tau_override
                )
                components["dist_img"] = r.value.total
                weights["dist_img"] = recipe.lam
                grad += recipe.lam * r.grad
            if recipe.distill_sides in ("text", "both"):
                r = distill_text_loss(
                    student, teacher, ref, recipe.literal_eq3, recipe.distill_tau_override
                )
                components["dist_txt"] = r.value.total
                weights["dist_txt"] = recipe.lam
                grad += recipe.lam * r.grad

    if recipe.wc_on:
        ref_params = wc_ref if wc_ref is not None else init_params
        r = wc_loss(student.params, ref_params)
        components["wc"] = r.value.total
        weights["wc"] = recipe.wc_mu
        grad += recipe.wc_mu * r.grad

    total = sum(weights[k] * components[k] for k in components)
    return GradResult(LossValue(total, components, weights), grad)
