"""Two-tower encoder: an MLP image tower and an MLP text tower producing
unit-norm embeddings, compared by cosine similarity and scaled by a learned
temperature. Parameters live in one flat float64 vector with a named-segment
layout so weight-space operations (interpolation, averaging, consolidation)
are simple array arithmetic.
"""

import io
from dataclasses import dataclass

import numpy as np

from .numerics import DegenerateInputError, DimensionError

CKPT_MAGIC = "ZSCL-CKPT v1"

LOG_TEMPERATURE = "log_temperature"


@dataclass(frozen=True)
class Arch:
    image_dim: int = 32
    text_dim: int = 16
    embed_dim: int = 16
    image_hidden: tuple = (32,)
    text_hidden: tuple = (32,)

    def tower_dims(self, tower):
        if tower == "img":
            return (self.image_dim,) + tuple(self.image_hidden) + (self.embed_dim,)
        if tower == "txt":
            return (self.text_dim,) + tuple(self.text_hidden) + (self.embed_dim,)
        raise ValueError(f"unknown tower {tower!r}")


@dataclass(frozen=True)
class ParamLayout:
    """Ordered (name, offset, length) segments covering a flat vector."""

    segments: tuple

    def __post_init__(self):
        expected = 0
        names = [s[0] for s in self.segments]
        for name, offset, length in self.segments:
            if offset != expected or length <= 0:
                raise ValueError(f"segment {name!r} breaks contiguity")
            expected = offset + length
        if names.count(LOG_TEMPERATURE) != 1:
            raise ValueError("layout must contain log_temperature exactly once")

    @property
    def total_length(self):
        name, offset, length = self.segments[-1]
        return offset + length

    def slice_of(self, name):
        for seg_name, offset, length in self.segments:
            if seg_name == name:
                return slice(offset, offset + length)
        raise KeyError(name)


def layout_for(arch):
    segments = []
    offset = 0
    for tower in ("img", "txt"):
        dims = arch.tower_dims(tower)
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            segments.append((f"{tower}_W{i}", offset, fan_out * fan_in))
            offset += fan_out * fan_in
            segments.append((f"{tower}_b{i}", offset, fan_out))
            offset += fan_out
    segments.append((LOG_TEMPERATURE, offset, 1))
    return ParamLayout(tuple(segments))


@dataclass
class ParamVector:
    layout: ParamLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.layout.total_length,):
            raise DimensionError(
                f"param vector length {self.values.shape} != layout length "
                f"{self.layout.total_length}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DegenerateInputError("non-finite parameter values")

    def copy(self):
        return ParamVector(self.layout, self.values.copy())

    def segment(self, name):
        return self.values[self.layout.slice_of(name)]

    @property
    def log_temperature(self):
        return float(self.segment(LOG_TEMPERATURE)[0])

    def same_layout(self, other):
        return self.layout == other.layout


def init_params(arch, rng, init_log_temp=np.log(10.0)):
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init from a seeded generator."""
    layout = layout_for(arch)
    values = np.empty(layout.total_length)
    for tower in ("img", "txt"):
        dims = arch.tower_dims(tower)
        for i in range(len(dims) - 1):
            bound = 1.0 / np.sqrt(dims[i])
            for kind in ("W", "b"):
                sl = layout.slice_of(f"{tower}_{kind}{i}")
                values[sl] = rng.uniform(-bound, bound, sl.stop - sl.start)
    values[layout.slice_of(LOG_TEMPERATURE)] = init_log_temp
    return ParamVector(layout, values)


@dataclass
class TowerCache:
    """Forward activations kept for backprop."""

    activations: list  # layer inputs A_0..A_{L-1} (A_0 is the raw input)
    pre_norm: np.ndarray  # Z, embeddings before L2 normalization
    norms: np.ndarray  # ||Z|| per row
    embeddings: np.ndarray


class TwoTowerModel:
    """Deterministic encoder pair over a shared flat parameter vector."""

    def __init__(self, arch, params):
        if params.layout != layout_for(arch):
            raise DimensionError("parameter layout inconsistent with arch")
        self.arch = arch
        self.params = params

    def copy(self):
        return TwoTowerModel(self.arch, self.params.copy())

    @property
    def temperature(self):
        return float(np.exp(self.params.log_temperature))

    def _weights(self, tower):
        dims = self.arch.tower_dims(tower)
        layers = []
        for i in range(len(dims) - 1):
            W = self.params.segment(f"{tower}_W{i}").reshape(dims[i + 1], dims[i])
            b = self.params.segment(f"{tower}_b{i}")
            layers.append((W, b))
        return layers

    def _encode(self, tower, X, want_cache):
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        dims = self.arch.tower_dims(tower)
        if X.ndim != 2 or X.shape[1] != dims[0]:
            raise DimensionError(
                f"{tower} input has {X.shape[-1] if X.ndim else 0} features, "
                f"expected {dims[0]}"
            )
        if not np.all(np.isfinite(X)):
            raise DegenerateInputError("non-finite encoder input")
        layers = self._weights(tower)
        activations = [X]
        A = X
        for W, b in layers[:-1]:
            A = np.tanh(A @ W.T + b)
            activations.append(A)
        W, b = layers[-1]
        Z = A @ W.T + b
        norms = np.linalg.norm(Z, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateInputError("zero pre-normalization embedding")
        E = Z / norms[:, None]
        out = E[0] if squeeze else E
        if want_cache:
            return out, TowerCache(activations, Z, norms, E)
        return out

    def encode_image(self, x, want_cache=False):
        return self._encode("img", x, want_cache)

    def encode_text(self, t, want_cache=False):
        return self._encode("txt", t, want_cache)

    def tower_backward(self, tower, cache, grad_emb):
        """Gradient of a scalar loss w.r.t. this tower's parameters.

        `grad_emb` holds d(loss)/d(embedding) per row of the cached batch.
        Returns a flat array shaped like the full parameter vector with
        only this tower's segments filled in.
        """
        layers = self._weights(tower)
        grad = np.zeros(self.params.layout.total_length)
        E, Z, norms = cache.embeddings, cache.pre_norm, cache.norms
        # through E = Z / ||Z||: dZ = (G - (G.E) E) / ||Z||
        G = np.asarray(grad_emb, dtype=np.float64)
        dZ = (G - (G * E).sum(axis=1, keepdims=True) * E) / norms[:, None]
        n_layers = len(layers)
        dA = dZ
        for i in range(n_layers - 1, -1, -1):
            W, _ = layers[i]
            A_in = cache.activations[i]
            sl_W = self.params.layout.slice_of(f"{tower}_W{i}")
            sl_b = self.params.layout.slice_of(f"{tower}_b{i}")
            grad[sl_W] = (dA.T @ A_in).ravel()
            grad[sl_b] = dA.sum(axis=0)
            if i > 0:
                dA = (dA @ W) * (1.0 - cache.activations[i] ** 2)
        return grad


def similarity_matrix(img_embs, txt_embs, atol=1e-6):
    """Cosine similarities between rows of two unit-norm embedding matrices."""
    A = np.asarray(img_embs, dtype=np.float64)
    B = np.asarray(txt_embs, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError(f"embedding shapes {A.shape} and {B.shape} mismatch")
    for M in (A, B):
        if np.any(np.abs(np.linalg.norm(M, axis=1) - 1.0) > atol):
            raise DegenerateInputError("embedding rows are not unit-norm")
    return A @ B.T


def logits(sim, params):
    """Similarity scores scaled by tau = exp(log_temperature)."""
    return np.asarray(sim, dtype=np.float64) * np.exp(params.log_temperature)


def predict(model, x, class_texts):
    """Index of the class text most similar to the encoded image.

    Ties break toward the lowest index (np.argmax's rule).
    """
    class_texts = np.asarray(class_texts, dtype=np.float64)
    if class_texts.ndim != 2 or class_texts.shape[0] == 0:
        raise DimensionError("need at least one class text")
    e = model.encode_image(x)
    T = model.encode_text(class_texts)
    return int(np.argmax(T @ e))


def predict_batch(model, X, class_texts):
    T = model.encode_text(np.asarray(class_texts, dtype=np.float64))
    E = model.encode_image(np.asarray(X, dtype=np.float64))
    return np.argmax(E @ T.T, axis=1)


def save_checkpoint(path, model):
    """Write the checkpoint: text header, arch+layout line, raw LE float64."""
    arch = model.arch
    fields = [
        str(arch.image_dim),
        str(arch.text_dim),
        str(arch.embed_dim),
        "ih=" + "+".join(str(w) for w in arch.image_hidden),
        "th=" + "+".join(str(w) for w in arch.text_hidden),
    ]
    for name, offset, length in model.params.layout.segments:
        fields.append(f"{name}:{offset}:{length}")
    with open(path, "wb") as fh:
        fh.write((CKPT_MAGIC + "\n").encode("ascii"))
        fh.write((",".join(fields) + "\n").encode("ascii"))
        fh.write(model.params.values.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    magic = buf.readline().decode("ascii").rstrip("\n")
    if magic != CKPT_MAGIC:
        raise ValueError(f"not a checkpoint file (header {magic!r})")
    fields = buf.readline().decode("ascii").rstrip("\n").split(",")
    image_dim, text_dim, embed_dim = (int(f) for f in fields[:3])
    image_hidden = tuple(int(w) for w in fields[3].removeprefix("ih=").split("+") if w)
    text_hidden = tuple(int(w) for w in fields[4].removeprefix("th=").split("+") if w)
    arch = Arch(image_dim, text_dim, embed_dim, image_hidden, text_hidden)
    segments = []
    for f in fields[5:]:
        name, offset, length = f.rsplit(":", 2)
        segments.append((name, int(offset), int(length)))
    layout = ParamLayout(tuple(segments))
    if layout != layout_for(arch):
        raise ValueError("checkpoint layout inconsistent with arch")
    values = np.frombuffer(buf.read(), dtype="<f8").astype(np.float64)
    return TwoTowerModel(arch, ParamVector(layout, values))
