"""Stacked Elman RNN recognizer with hand-written backpropagation through time.

Strings are one-hot encoded; each layer computes
``h[t] = tanh(W_in @ x[t] + W_rec @ h[t-1] + b)`` from ``h[0] = 0`` and a
softmax readout on the top layer's last state gives accept/reject logits.
Batches always hold strings of one length, so no padding enters the recurrence.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .automata import Dfa
from .dataset import LabeledDataset
from .optim import Adam, clip_by_global_norm, log_softmax, softmax
from .regex import Alphabet

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class RnnConfig:
    hidden_size: int = 50
    num_layers: int = 2
    dtype: str = "float64"
    # which layers make up a decoding state: "all" (concatenated) or "top"
    decode_layers: str = "all"


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    val_fraction: float = 0.2
    target_accuracy: float = 0.99
    clip_norm: float = 5.0


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainStats:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    initial_loss: float = float("nan")
    best_epoch: int = -1
    best_val_acc: float = 0.0
    reached_target: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def param_names(num_layers: int) -> list[str]:
    names = []
    for l in range(num_layers):
        names += [f"W_in{l}", f"W_rec{l}", f"b{l}"]
    return names + ["W_out", "b_out"]


class RnnModel:
    def __init__(self, alphabet: Alphabet, config: RnnConfig, params: dict[str, np.ndarray], seed=None):
        self.alphabet = alphabet
        self.config = config
        self.params = params
        self.seed = seed

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    @property
    def state_dim(self) -> int:
        k, L = self.config.hidden_size, self.config.num_layers
        return k if self.config.decode_layers == "top" else k * L

    def copy(self) -> "RnnModel":
        return RnnModel(self.alphabet, self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def encode(self, strings: list[str]) -> np.ndarray:
        return np.array([self.alphabet.encode(w) for w in strings], dtype=np.int64).reshape(len(strings), -1)

    # -- batched core ---------------------------------------------------------

    def _run(self, X: np.ndarray):
        """Forward over a (B, T) int batch; returns per-layer (T+1, B, K) states and logits."""
        p, K = self.params, self.config.hidden_size
        B, T = X.shape
        dt = p["b0"].dtype
        hs = []
        inp = None
        for l in range(self.config.num_layers):
            h = np.zeros((T + 1, B, K), dtype=dt)
            W_in, W_rec, b = p[f"W_in{l}"], p[f"W_rec{l}"], p[f"b{l}"]
            if l == 0:
                # one-hot input is a column lookup
                drive = W_in.T[X.T]  # (T, B, K)
            else:
                drive = inp[1:] @ W_in.T
            drive += b
            for t in range(T):
                h[t + 1] = np.tanh(drive[t] + h[t] @ W_rec.T)
            hs.append(h)
            inp = h
        logits = hs[-1][T] @ p["W_out"].T + p["b_out"]
        return hs, logits

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray):
        """Mean cross-entropy over the batch and its gradient for every parameter."""
        p = self.params
        B, T = X.shape
        hs, logits = self._run(X)
        logp = log_softmax(logits)
        loss = -float(np.mean(logp[np.arange(B), y]))
        dlogits = np.exp(logp)
        dlogits[np.arange(B), y] -= 1.0
        dlogits /= B
        g = {"W_out": dlogits.T @ hs[-1][T], "b_out": dlogits.sum(0)}
        L = self.config.num_layers
        dh = np.zeros_like(hs[-1])
        dh[T] = dlogits @ p["W_out"]
        for l in reversed(range(L)):
            h = hs[l]
            W_in, W_rec = p[f"W_in{l}"], p[f"W_rec{l}"]
            dz = np.empty_like(h[1:])
            carry = np.zeros_like(h[0])
            for t in range(T, 0, -1):
                dz_t = (dh[t] + carry) * (1.0 - h[t] ** 2)
                dz[t - 1] = dz_t
                carry = dz_t @ W_rec
            dzf = dz.reshape(T * B, -1)
            g[f"W_rec{l}"] = dzf.T @ h[:-1].reshape(T * B, -1)
            g[f"b{l}"] = dzf.sum(0)
            if l == 0:
                gin = np.zeros_like(W_in)
                np.add.at(gin.T, X.T.reshape(-1), dzf)
                g[f"W_in{l}"] = gin
            else:
                below = hs[l - 1]
                g[f"W_in{l}"] = dzf.T @ below[1:].reshape(T * B, -1)
                dh = np.zeros_like(below)
                dh[1:] = dz @ W_in
        return loss, g

    # -- public single-string API ------------------------------------------------

    def forward(self, w: str):
        """Logits and the |w|+1 decoding states (h_0 = 0) for one string."""
        hs, logits = self._run(self.encode([w]))
        return logits[0], self._decode_states(hs)[:, 0, :]

    def _decode_states(self, hs) -> np.ndarray:
        if self.config.decode_layers == "top":
            return hs[-1]
        return np.concatenate(hs, axis=-1)

    def predict_proba(self, strings: list[str]) -> np.ndarray:
        out = np.empty((len(strings), 2))
        for idx, X in _length_buckets(self, strings):
            _, logits = self._run(X)
            out[idx] = softmax(logits.astype(np.float64))
        return out

    def evaluate(self, strings: list[str], y: np.ndarray) -> tuple[float, float]:
        """(mean cross-entropy, accuracy) accumulated in float64."""
        proba = self.predict_proba(strings)
        loss = -float(np.mean(np.log(np.clip(proba[np.arange(len(y)), y], 1e-300, None))))
        acc = float(np.mean(proba.argmax(1) == y))
        return loss, acc

    # -- persistence -------------------------------------------------------------

    def to_dict(self) -> dict:
        names = param_names(self.config.num_layers)
        return {
            "format": "rnnfsa-checkpoint", "version": CHECKPOINT_VERSION, "kind": "rnn",
            "alphabet": str(self.alphabet), "config": asdict(self.config), "seed": self.seed,
            "param_order": names,
            "shapes": [list(self.params[k].shape) for k in names],
            "params": [self.params[k].ravel().tolist() for k in names],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RnnModel":
        if d.get("format") != "rnnfsa-checkpoint" or d.get("kind") != "rnn":
            raise ValueError("not an RNN checkpoint")
        if d["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d['version']}")
        config = RnnConfig(**d["config"])
        params = {k: np.array(v, dtype=config.dtype).reshape(s)
                  for k, s, v in zip(d["param_order"], d["shapes"], d["params"])}
        return cls(Alphabet.from_string(d["alphabet"]), config, params, d.get("seed"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "RnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init(alphabet: Alphabet, config: RnnConfig, rng: np.random.Generator, seed=None) -> RnnModel:
    """Parameters i.i.d. uniform in [-1/sqrt(K), 1/sqrt(K)]."""
    if config.hidden_size < 1 or config.num_layers < 1:
        raise ValueError("hidden_size and num_layers must be >= 1")
    K = config.hidden_size
    s = 1.0 / math.sqrt(K)
    dt = np.dtype(config.dtype)
    params = {}
    in_dim = len(alphabet)
    for l in range(config.num_layers):
        params[f"W_in{l}"] = rng.uniform(-s, s, (K, in_dim)).astype(dt)
        params[f"W_rec{l}"] = rng.uniform(-s, s, (K, K)).astype(dt)
        params[f"b{l}"] = rng.uniform(-s, s, K).astype(dt)
        in_dim = K
    params["W_out"] = rng.uniform(-s, s, (2, K)).astype(dt)
    params["b_out"] = rng.uniform(-s, s, 2).astype(dt)
    return RnnModel(alphabet, config, params, seed)


def _length_buckets(model: RnnModel, strings: list[str]):
    by_len: dict[int, list[int]] = {}
    for i, w in enumerate(strings):
        by_len.setdefault(len(w), []).append(i)
    for n in sorted(by_len):
        idx = np.array(by_len[n])
        yield idx, model.encode([strings[i] for i in idx])


def split_indices(n: int, val_fraction: float, rng: np.random.Generator, labels=None):
    """Shuffled train/validation index split, stratified by ``labels`` when given."""
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    train, val = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(len(idx) * val_fraction))
        val.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def train(model: RnnModel, data: LabeledDataset, hyper: TrainConfig, rng: np.random.Generator):
    """Mini-batch ADAM on length-bucketed batches; returns the best-validation model.

    Stops once validation accuracy reaches ``hyper.target_accuracy``.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    strings = data.strings
    y = data.labels
    tr, va = split_indices(len(strings), hyper.val_fraction, rng, y)
    if len(va) == 0:
        va = tr
    tr_s, va_s = [strings[i] for i in tr], [strings[i] for i in va]
    tr_y, va_y = y[tr], y[va]

    model = model.copy()
    opt = Adam(model.params, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    stats = TrainStats()
    stats.initial_loss = model.evaluate(tr_s, tr_y)[0]
    best = model.copy()
    buckets = [(idx, X) for idx, X in _length_buckets(model, tr_s)]

    for epoch in range(hyper.max_epochs):
        batches = []
        for idx, X in buckets:
            perm = rng.permutation(len(idx))
            for s in range(0, len(idx), hyper.batch_size):
                sel = perm[s:s + hyper.batch_size]
                batches.append((X[sel], tr_y[idx[sel]]))
        for b in rng.permutation(len(batches)):
            Xb, yb = batches[b]
            loss, grads = model.loss_and_grads(Xb, yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            clip_by_global_norm(grads, hyper.clip_norm)
            opt.step(grads)
        tl, ta = model.evaluate(tr_s, tr_y)
        vl, vacc = model.evaluate(va_s, va_y)
        if not (math.isfinite(tl) and all(np.isfinite(p).all() for p in model.params.values())):
            raise TrainingDiverged(epoch)
        stats.train_loss.append(tl)
        stats.train_acc.append(ta)
        stats.val_loss.append(vl)
        stats.val_acc.append(vacc)
        if vacc > stats.best_val_acc or stats.best_epoch < 0:
            stats.best_val_acc, stats.best_epoch = vacc, epoch
            best = model.copy()
        if vacc >= hyper.target_accuracy:
            stats.reached_target = True
            break
    log.debug("trained %d epochs, best val acc %.4f", len(stats.val_acc), stats.best_val_acc)
    return best, stats


@dataclass
class Trajectory:
    string: str
    hidden: np.ndarray  # (|w|+1, state_dim)
    states: np.ndarray  # (|w|+1,) MDFA states
    label: str


def record_trajectories(model: RnnModel, dfa: Dfa, data: LabeledDataset) -> list[Trajectory]:
    strings = data.strings
    out: list[Optional[Trajectory]] = [None] * len(strings)
    for idx, X in _length_buckets(model, strings):
        hs, _ = model._run(X)
        H = model._decode_states(hs).astype(np.float64)
        for b, i in enumerate(idx):
            w = strings[i]
            q = np.array(dfa.trace(w), dtype=np.int64)
            assert H.shape[0] == len(q) == len(w) + 1
            out[i] = Trajectory(w, H[:, b, :].copy(), q, data.examples[i][1])
    return out


def trajectories_csv(trajectories: list[Trajectory]) -> str:
    dim = trajectories[0].hidden.shape[1] if trajectories else 0
    lines = ["example,t,q," + ",".join(f"h{k}" for k in range(dim))]
    for i, tr in enumerate(trajectories):
        for t in range(len(tr.states)):
            lines.append(f"{i},{t},{tr.states[t]}," + ",".join(repr(float(v)) for v in tr.hidden[t]))
    return "\n".join(lines) + "\n"
