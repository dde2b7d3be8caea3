"""Decoders from RNN hidden states to automaton state labels.

``linear`` is multinomial logistic regression trained full-batch; ``mlp`` adds
tanh hidden layers and trains on mini-batches.  Both minimise L2-regularised
softmax cross-entropy with ADAM and keep the parameters with the best
held-out loss.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .optim import Adam, log_softmax, softmax

CHECKPOINT_VERSION = 1


@dataclass
class DecoderConfig:
    kind: str = "linear"
    l2: float = 1e-4
    hidden_sizes: tuple = (64,)
    lr: float = 0.05
    epochs: int = 300
    batch_size: int = 0  # 0 = full batch
    val_fraction: float = 0.1
    eval_every: int = 10


def mlp_config(**kw) -> DecoderConfig:
    base = dict(kind="mlp", lr=0.01, epochs=30, batch_size=128, eval_every=1)
    base.update(kw)
    return DecoderConfig(**base)


class DecoderError(ValueError):
    pass


@dataclass
class Decoder:
    kind: str
    dim: int
    n_classes: int
    params: dict
    meta: dict = field(default_factory=dict)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise DecoderError(f"expected {self.dim}-dimensional states, got {X.shape[1]}")
        return _forward(self.params, X)[0]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        # np.argmax breaks ties toward the lowest class index
        return np.argmax(self.logits(X), axis=1)

    def predict(self, h: np.ndarray) -> int:
        return int(self.predict_batch(np.asarray(h)[None, :])[0])

    def proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.logits(X))

    def to_dict(self) -> dict:
        names = sorted(self.params)
        return {
            "format": "rnnfsa-checkpoint", "version": CHECKPOINT_VERSION, "kind": f"decoder-{self.kind}",
            "dim": self.dim, "n_classes": self.n_classes, "meta": self.meta, "param_order": names,
            "shapes": [list(self.params[k].shape) for k in names],
            "params": [self.params[k].ravel().tolist() for k in names],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Decoder":
        if d.get("format") != "rnnfsa-checkpoint" or not d.get("kind", "").startswith("decoder-"):
            raise ValueError("not a decoder checkpoint")
        params = {k: np.array(v, dtype=np.float64).reshape(s)
                  for k, s, v in zip(d["param_order"], d["shapes"], d["params"])}
        return cls(d["kind"][len("decoder-"):], d["dim"], d["n_classes"], params, d.get("meta", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Decoder":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _n_layers(params: dict) -> int:
    return sum(1 for k in params if k.startswith("W"))


def _forward(params: dict, X: np.ndarray):
    acts = [X]
    a = X
    n = _n_layers(params)
    for i in range(n - 1):
        a = np.tanh(a @ params[f"W{i}"].T + params[f"b{i}"])
        acts.append(a)
    return a @ params[f"W{n - 1}"].T + params[f"b{n - 1}"], acts


def loss_and_grads(params: dict, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/2 * sum ||W||^2`` and its gradient."""
    N = X.shape[0]
    z, acts = _forward(params, X)
    logp = log_softmax(z)
    loss = -float(np.mean(logp[np.arange(N), y]))
    n = _n_layers(params)
    loss += 0.5 * l2 * sum(float(np.sum(params[f"W{i}"] ** 2)) for i in range(n))
    dz = np.exp(logp)
    dz[np.arange(N), y] -= 1.0
    dz /= N
    grads = {}
    for i in reversed(range(n)):
        W = params[f"W{i}"]
        grads[f"W{i}"] = dz.T @ acts[i] + l2 * W
        grads[f"b{i}"] = dz.sum(0)
        if i > 0:
            dz = (dz @ W) * (1.0 - acts[i] ** 2)
    return loss, grads


def init_params(kind: str, dim: int, n_classes: int, hidden_sizes: Sequence[int], rng) -> dict:
    sizes = [dim] + (list(hidden_sizes) if kind == "mlp" else []) + [n_classes]
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = 1.0 / math.sqrt(fan_in)
        last = i == len(sizes) - 2
        # zero-initialised softmax layer for the convex linear case
        params[f"W{i}"] = np.zeros((fan_out, fan_in)) if kind == "linear" else rng.uniform(-s, s, (fan_out, fan_in))
        params[f"b{i}"] = np.zeros(fan_out) if last or kind == "linear" else rng.uniform(-s, s, fan_out)
    return params


def _stratified_holdout(y: np.ndarray, frac: float, rng):
    if frac <= 0:
        return np.arange(len(y)), np.array([], dtype=np.int64)
    tr, va = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = int(math.floor(len(idx) * frac))
        # never hold out a class's only examples
        if k >= len(idx):
            k = len(idx) - 1
        va.append(idx[:k])
        tr.append(idx[k:])
    return np.sort(np.concatenate(tr)), np.sort(np.concatenate(va))


def fit(kind: str, X: np.ndarray, y: np.ndarray, n_classes: int, hyper: Optional[DecoderConfig] = None,
        rng: Optional[np.random.Generator] = None, seed: Optional[int] = None) -> Decoder:
    """Fit a ``kind`` decoder on states ``X`` (N, dim) with labels ``y`` in [0, n_classes)."""
    if kind not in ("linear", "mlp"):
        raise DecoderError(f"unknown decoder kind {kind!r}")
    hyper = hyper or (mlp_config() if kind == "mlp" else DecoderConfig())
    rng = rng if rng is not None else np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise DecoderError("need a non-empty (N, dim) feature matrix with N labels")
    if not np.isfinite(X).all():
        raise DecoderError("non-finite features")
    if y.min() < 0 or y.max() >= n_classes:
        raise DecoderError(f"labels must lie in [0, {n_classes})")
    present = np.unique(y)
    meta = {"l2": hyper.l2, "seed": seed, "epochs": hyper.epochs, "n_train": int(len(y)),
            "absent_classes": sorted(set(range(n_classes)) - set(present.tolist())),
            "degenerate": False}
    params = init_params(kind, X.shape[1], n_classes, hyper.hidden_sizes, rng)
    if len(present) == 1:
        # constant decoder: a large bias on the only observed class
        last = _n_layers(params) - 1
        params[f"b{last}"][present[0]] = 10.0
        meta["degenerate"] = True
        return Decoder(kind, X.shape[1], n_classes, params, meta)

    tr, va = _stratified_holdout(y, hyper.val_fraction, rng)
    Xt, yt = X[tr], y[tr]
    opt = Adam(params, lr=hyper.lr)
    best = {k: v.copy() for k, v in params.items()}
    best_loss = math.inf
    bs = hyper.batch_size if hyper.batch_size > 0 else len(tr)

    def checkpoint():
        nonlocal best, best_loss
        if len(va):
            vl = loss_and_grads(params, X[va], y[va], 0.0)[0]
        else:
            vl = loss_and_grads(params, Xt, yt, hyper.l2)[0]
        if vl < best_loss:
            best_loss = vl
            best = {k: v.copy() for k, v in params.items()}

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(tr)) if bs < len(tr) else np.arange(len(tr))
        for s in range(0, len(tr), bs):
            sel = order[s:s + bs]
            loss, grads = loss_and_grads(params, Xt[sel], yt[sel], hyper.l2)
            if not math.isfinite(loss):
                raise DecoderError(f"non-finite decoder loss at epoch {epoch}")
            opt.step(grads)
        if (epoch + 1) % hyper.eval_every == 0 or epoch == hyper.epochs - 1:
            checkpoint()
    meta["best_val_loss"] = best_loss
    return Decoder(kind, X.shape[1], n_classes, best, meta)


def accuracy(decoder, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise DecoderError("accuracy of an empty set is undefined")
    return float(np.mean(decoder.predict_batch(X) == y))


class LookupDecoder:
    """Maps states to labels through exact lookup; used as the ground-truth trace oracle."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.table = {}
        for h, q in zip(np.asarray(X, dtype=np.float64), np.asarray(y)):
            key = h.tobytes()
            if self.table.setdefault(key, int(q)) != int(q):
                raise DecoderError("the same hidden state carries two different labels")
        self.dim = np.asarray(X).shape[1]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.table[h.tobytes()] for h in X], dtype=np.int64)

    def predict(self, h) -> int:
        return int(self.predict_batch(np.asarray(h)[None, :])[0])


class ConstantDecoder:
    def __init__(self, label: int):
        self.label = int(label)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.full(len(X), self.label, dtype=np.int64)

    def predict(self, h) -> int:
        return self.label
