"""Feed-forward embedder trained with the triplet margin loss.

Gradients are written out by hand (no autodiff): the loss only touches the
three embeddings of a triplet, so backprop is a standard MLP backward pass
seeded with d(loss)/d(embedding).
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .data_io import dumps_exact
from .errors import DataError, DimensionError
from .numeric import (as_matrix, as_vector, check_p, make_rng, pairwise_distances, pnorm_distance,
                      rowwise_distances)

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "identity")

# stream ids for make_rng
_STREAM_INIT = 11
_STREAM_TRAIN = 12
_STREAM_MINE = 13


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"layer weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class EmbedderModel:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("model needs at least one layer")
        for k in range(1, len(self.layers)):
            prev, cur = self.layers[k - 1], self.layers[k]
            if prev.weight.shape[0] != cur.weight.shape[1]:
                raise DimensionError(
                    f"layer {k} expects input {cur.weight.shape[1]}, "
                    f"previous layer emits {prev.weight.shape[0]}"
                )
        for k, layer in enumerate(self.layers):
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise DataError(f"layer {k} has non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "EmbedderModel":
        return copy.deepcopy(self)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out


@dataclass(frozen=True)
class Triplet:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    anchor_label: str
    negative_label: str
    # batch positions (anchor, positive, negative) when produced by mining
    index: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.anchor_label == self.negative_label:
            raise DataError("negative must come from a different class than the anchor")


@dataclass
class TrainConfig:
    margin: float = 1.0
    learning_rate: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    p_norm: float = 2.0
    mining: Literal["random", "batch_hard"] = "batch_hard"
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.mining not in ("random", "batch_hard"):
            raise ValueError(f"unknown mining mode {self.mining!r}")
        check_p(self.p_norm)


def init_model(input_dim: int, hidden: Sequence[int] = (32,), embed_dim: int = 16,
               seed: int = 0) -> EmbedderModel:
    """Glorot-uniform weights, zero biases; relu on hidden layers, identity on the head."""
    dims = [int(input_dim), *map(int, hidden), int(embed_dim)]
    if min(dims) < 1:
        raise DimensionError(f"all layer sizes must be positive, got {dims}")
    rng = make_rng(seed, _STREAM_INIT)
    layers = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = "identity" if k == len(dims) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return EmbedderModel(layers)


# forward / backward -----------------------------------------------------------

def forward_batch(model: EmbedderModel, X) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Embed the rows of X. Returns (embeddings, cache of (layer input, pre-activation))."""
    A = as_matrix(X, "inputs")
    if A.shape[1] != model.input_dim:
        raise DimensionError(f"input dim {A.shape[1]} != model input_dim {model.input_dim}")
    cache = []
    for layer in model.layers:
        Z = A @ layer.weight.T + layer.bias
        cache.append((A, Z))
        A = np.maximum(Z, 0.0) if layer.activation == "relu" else Z
    return A, cache


def forward(model: EmbedderModel, x) -> np.ndarray:
    x = as_vector(x, "input")
    if x.size != model.input_dim:
        raise DimensionError(f"input dim {x.size} != model input_dim {model.input_dim}")
    return forward_batch(model, x[None, :])[0][0]


def embed(model: EmbedderModel, X) -> np.ndarray:
    return forward_batch(model, X)[0]


def _backward(model: EmbedderModel, cache, grad_out: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    grads: list = [None] * len(model.layers)
    G = grad_out
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        A_in, Z = cache[k]
        if layer.activation == "relu":
            G = G * (Z > 0)
        gW = G.T @ A_in
        gb = G.sum(axis=0)
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise FloatingPointError(f"non-finite gradient in layer {k}")
        grads[k] = (gW, gb)
        G = G @ layer.weight
    return grads


# loss -------------------------------------------------------------------------

def _distance_grads(U: np.ndarray, V: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise d_i = ||U_i - V_i||_p and the gradients with respect to U_i.

    Rows with d == 0 get a zero gradient, as does each |t|^(p-1) term at t == 0.
    """
    T = U - V
    d = rowwise_distances(U, V, p)
    G = np.zeros_like(T)
    live = d > 0
    if p == 2.0:
        G[live] = T[live] / d[live, None]
    elif p == 1.0:
        G[live] = np.sign(T[live])
    else:
        G[live] = np.sign(T[live]) * np.abs(T[live]) ** (p - 1.0) / d[live, None] ** (p - 1.0)
    return d, G


def distance_grad(u, v, p: float) -> tuple[float, np.ndarray]:
    """Single-pair form of the distance gradient (the v-gradient is the negative)."""
    d, G = _distance_grads(np.asarray(u, dtype=np.float64)[None, :],
                           np.asarray(v, dtype=np.float64)[None, :], p)
    return float(d[0]), G[0]


def triplet_loss(a, p, n, margin: float = 1.0, p_norm: float = 2.0) -> float:
    """max(d(a, p) - d(a, n) + margin, 0)."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    a, p, n = as_vector(a, "anchor"), as_vector(p, "positive"), as_vector(n, "negative")
    if not (a.shape == p.shape == n.shape):
        raise DimensionError(f"triplet dims differ: {a.size}, {p.size}, {n.size}")
    z = pnorm_distance(a, p, p_norm) - pnorm_distance(a, n, p_norm) + margin
    return max(z, 0.0)


def _embedding_grads(E: np.ndarray, idx: Sequence[tuple[int, int, int]], margin: float,
                     p_norm: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-triplet losses and d(sum of losses)/dE for triplets given as row indices into E."""
    ia, ip, ineg = (np.array([t[c] for t in idx], dtype=np.intp) for c in range(3))
    d_ap, g_ap = _distance_grads(E[ia], E[ip], p_norm)
    d_an, g_an = _distance_grads(E[ia], E[ineg], p_norm)
    z = d_ap - d_an + margin
    active = z > 0.0  # the kink itself takes the flat branch
    losses = np.where(active, z, 0.0)
    g_ap[~active] = 0.0
    g_an[~active] = 0.0
    G = np.zeros_like(E)
    np.add.at(G, ia, g_ap - g_an)
    np.add.at(G, ip, -g_ap)
    np.add.at(G, ineg, g_an)
    return losses, G


def triplet_loss_gradient(model: EmbedderModel, triplet: Triplet,
                          cfg: TrainConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradient of the triplet loss w.r.t. every (weight, bias) pair of the model."""
    X = np.stack([as_vector(triplet.anchor), as_vector(triplet.positive), as_vector(triplet.negative)])
    E, cache = forward_batch(model, X)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("non-finite embedding in layer %d" % (len(model.layers) - 1))
    _, G = _embedding_grads(E, [(0, 1, 2)], cfg.margin, cfg.p_norm)
    return _backward(model, cache, G)


# mining -----------------------------------------------------------------------

def _check_minable(labels: Sequence) -> None:
    labels = list(labels)
    classes = set(labels)
    if len(classes) < 2:
        raise DataError("triplet mining needs at least two classes (no negatives otherwise)")
    if len(classes) == len(labels):
        raise DataError("triplet mining needs some class with at least two samples")


def _mine_indices(labels: Sequence, E: np.ndarray | None, cfg: TrainConfig,
                  rng: np.random.Generator | None) -> list[tuple[int, int, int]]:
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    other = labels[:, None] != labels[None, :]
    out = []
    if cfg.mining == "batch_hard":
        D = pairwise_distances(E, E, cfg.p_norm)
        for i in range(len(labels)):
            if not same[i].any():
                continue
            pos = np.flatnonzero(same[i])
            neg = np.flatnonzero(other[i])
            # argmax/argmin return the first hit, so ties go to the lower batch index
            out.append((i, int(pos[np.argmax(D[i, pos])]), int(neg[np.argmin(D[i, neg])])))
    else:
        for i in range(len(labels)):
            if not same[i].any():
                continue
            pos = np.flatnonzero(same[i])
            neg = np.flatnonzero(other[i])
            out.append((i, int(pos[rng.integers(pos.size)]), int(neg[rng.integers(neg.size)])))
    return out


def mine_triplets(X, labels: Sequence, model: EmbedderModel, cfg: TrainConfig,
                  rng: np.random.Generator | None = None) -> list[Triplet]:
    """One triplet per anchor that has a same-class partner in the batch."""
    X = as_matrix(X, "batch")
    labels = [str(l) for l in labels]
    if len(labels) != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} samples but {len(labels)} labels")
    _check_minable(labels)
    E = embed(model, X) if cfg.mining == "batch_hard" else None
    if rng is None:
        rng = make_rng(cfg.seed, _STREAM_MINE)
    return [
        Triplet(X[a], X[p], X[n], labels[a], labels[n], (a, p, n))
        for a, p, n in _mine_indices(labels, E, cfg, rng)
    ]


# optimisation -----------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, model: EmbedderModel) -> "AdamState":
        params = model.parameters()
        return cls([np.zeros_like(q) for q in params], [np.zeros_like(q) for q in params])

    def apply(self, model: EmbedderModel, grads, cfg: TrainConfig) -> None:
        """One bias-corrected Adam update, in place."""
        self.step += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bc1 = 1.0 - b1 ** self.step
        bc2 = 1.0 - b2 ** self.step
        flat = [g for pair in grads for g in pair]
        for q, g, m, v in zip(model.parameters(), flat, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            q -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_epsilon)


@dataclass
class TrainResult:
    model: EmbedderModel
    loss_trace: list[float] = field(default_factory=list)
    adam: AdamState | None = None


def train(model: EmbedderModel, X, labels: Sequence, cfg: TrainConfig) -> TrainResult:
    """Minibatch triplet training with Adam.

    An epoch visits every sample once as an anchor in seeded shuffled order. Batches
    that cannot yield a triplet (one class, or no same-class pair) are skipped.
    The trace holds the mean triplet loss of each epoch, measured before each update.
    """
    X = as_matrix(X, "dataset")
    labels = [str(l) for l in labels]
    if len(labels) != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} samples but {len(labels)} labels")
    if X.shape[1] != model.input_dim:
        raise DimensionError(f"input dim {X.shape[1]} != model input_dim {model.input_dim}")
    _check_minable(labels)

    model = model.copy()
    adam = AdamState.zeros_like(model)
    rng = make_rng(cfg.seed, _STREAM_TRAIN)
    lab = np.asarray(labels)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            bl = lab[batch]
            if len(set(bl)) < 2 or len(set(bl)) == len(bl):
                continue
            E, cache = forward_batch(model, X[batch])
            idx = _mine_indices(bl, E, cfg, rng)
            if not idx:
                continue
            losses, G = _embedding_grads(E, idx, cfg.margin, cfg.p_norm)
            total += float(losses.sum())
            count += len(idx)
            grads = _backward(model, cache, G / len(idx))
            adam.apply(model, grads, cfg)
        if count == 0:
            raise DataError(f"epoch {epoch} produced no triplets; increase batch_size")
        trace.append(total / count)
    return TrainResult(model, trace, adam)


# checkpoints ------------------------------------------------------------------

def model_to_dict(model: EmbedderModel) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "embed_dim": model.embed_dim,
        "layers": [
            {
                "rows": layer.weight.shape[0],
                "cols": layer.weight.shape[1],
                "weights": layer.weight.ravel().tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
    }


def model_from_dict(d: dict) -> EmbedderModel:
    if d.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {d.get('version')!r}")
    layers = []
    for k, ld in enumerate(d["layers"]):
        w = np.asarray(ld["weights"], dtype=np.float64)
        if w.size != ld["rows"] * ld["cols"]:
            raise DataError(f"layer {k}: {w.size} weights for a {ld['rows']}x{ld['cols']} matrix")
        layers.append(Layer(w.reshape(ld["rows"], ld["cols"]), ld["bias"], ld["activation"]))
    model = EmbedderModel(layers)
    if model.input_dim != d["input_dim"] or model.embed_dim != d["embed_dim"]:
        raise DataError("checkpoint input_dim/embed_dim disagree with its layers")
    return model


def save_model(model: EmbedderModel, path) -> None:
    Path(path).write_text(dumps_exact(model_to_dict(model)) + "\n")


def load_model(path) -> EmbedderModel:
    return model_from_dict(json.loads(Path(path).read_text()))
