"""Decoding/transitional accuracy, greedy and random state abstraction, curve statistics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .automata import AbstractionNfa, Dfa, replay
from .decoder import ConstantDecoder, DecoderConfig, fit
from .rnn import Trajectory


class AnalysisError(ValueError):
    pass


@dataclass
class TrajectorySet:
    """Trajectories flattened into row arrays.

    Row ``r`` holds ``H[r]`` and MDFA state ``Q[r]`` for string ``sid[r]`` at time
    ``t[r]``.  ``nxt`` indexes every row with t >= 1 and ``prev = nxt - 1``;
    ``sym[k]`` is the symbol read between them and ``weight[k] = 1/|w|``.
    """
    H: np.ndarray
    Q: np.ndarray
    sid: np.ndarray
    t: np.ndarray
    nxt: np.ndarray
    sym: np.ndarray
    weight: np.ndarray
    n_strings: int

    @property
    def prev(self) -> np.ndarray:
        return self.nxt - 1

    @classmethod
    def build(cls, trajectories: Sequence[Trajectory], alphabet) -> "TrajectorySet":
        if not trajectories:
            raise AnalysisError("empty trajectory set")
        H, Q, sid, t, nxt, sym, weight = [], [], [], [], [], [], []
        row = 0
        for i, tr in enumerate(trajectories):
            n = len(tr.string)
            if n == 0:
                raise AnalysisError("empty strings carry no transitions")
            if len(tr.states) != n + 1 or len(tr.hidden) != n + 1:
                raise AnalysisError(f"trajectory {i} is misaligned")
            H.append(tr.hidden)
            Q.append(tr.states)
            sid.append(np.full(n + 1, i))
            t.append(np.arange(n + 1))
            nxt.append(row + np.arange(1, n + 1))
            sym.append(alphabet.encode(tr.string))
            weight.append(np.full(n, 1.0 / n))
            row += n + 1
        return cls(np.vstack(H), np.concatenate(Q).astype(np.int64), np.concatenate(sid),
                   np.concatenate(t), np.concatenate(nxt), np.concatenate(sym).astype(np.int64),
                   np.concatenate(weight), len(trajectories))

    def subset(self, string_ids) -> "TrajectorySet":
        keep = np.sort(np.asarray(string_ids, dtype=np.int64))
        if len(keep) == 0:
            raise AnalysisError("empty trajectory subset")
        rows = np.flatnonzero(np.isin(self.sid, keep))
        remap = np.full(len(self.sid), -1, dtype=np.int64)
        remap[rows] = np.arange(len(rows))
        new_sid = np.searchsorted(keep, self.sid[rows])
        k = np.flatnonzero(np.isin(self.sid[self.nxt], keep))
        return TrajectorySet(self.H[rows], self.Q[rows], new_sid, self.t[rows], remap[self.nxt[k]],
                             self.sym[k], self.weight[k], len(keep))


def _as_set(trajectories, dfa: Dfa) -> TrajectorySet:
    return trajectories if isinstance(trajectories, TrajectorySet) else TrajectorySet.build(trajectories, dfa.alphabet)


def _per_string_mean(ts: TrajectorySet, hit: np.ndarray) -> float:
    """Mean over strings of the fraction of hits among that string's steps."""
    owner = ts.sid[ts.nxt]
    hits = np.bincount(owner, weights=hit.astype(np.float64), minlength=ts.n_strings)
    steps = np.bincount(owner, minlength=ts.n_strings)
    return float(np.mean(hits / steps))


def _rho(ts: TrajectorySet, pred: np.ndarray, block_of: np.ndarray) -> float:
    """pred: decoded MDFA state for every row."""
    k = ts.nxt
    return _per_string_mean(ts, block_of[pred[k]] == block_of[ts.Q[k]])


def _phi(ts: TrajectorySet, pred: np.ndarray, block_of: np.ndarray, dfa: Dfa) -> float:
    k = ts.nxt
    expected = block_of[dfa.delta[pred[k - 1], ts.sym]]
    return _per_string_mean(ts, block_of[pred[k]] == expected)


def _phi_blocks(ts: TrajectorySet, pred_blocks: np.ndarray, nfa: AbstractionNfa) -> float:
    """pred_blocks: decoded superstate per row; hit if the next one is an NFA successor."""
    k = ts.nxt
    return _per_string_mean(ts, successor_table(nfa)[pred_blocks[k - 1], ts.sym, pred_blocks[k]])


def successor_table(nfa: AbstractionNfa) -> np.ndarray:
    """Boolean (block, symbol, block) table of the abstraction's transition relation."""
    dfa = nfa.base
    C, S = nfa.n_blocks, len(dfa.alphabet)
    table = np.zeros((C, S, C), dtype=bool)
    for q in range(dfa.n_states):
        table[nfa.block_of[q], np.arange(S), nfa.block_of[dfa.delta[q]]] = True
    return table


def decoding_accuracy(trajectories, decoder, nfa: AbstractionNfa) -> float:
    """Per-string mean over t of [abstract(f(h_{t+1})) == abstract(q_{t+1})], averaged over strings.

    ``decoder`` maps hidden states to MDFA states.
    """
    ts = _as_set(trajectories, nfa.base)
    pred = np.asarray(decoder.predict_batch(ts.H))
    return _rho(ts, pred, nfa.block_of)


def transitional_accuracy(trajectories, decoder, nfa: AbstractionNfa, dfa: Optional[Dfa] = None) -> float:
    """Per-string mean over t of [abstract(f(h_{t+1})) == abstract(delta(f(h_t), a_t))].

    The MDFA transition is applied to the decoded current state, not the true one.
    """
    dfa = nfa.base if dfa is None else dfa
    ts = _as_set(trajectories, dfa)
    pred = np.asarray(decoder.predict_batch(ts.H))
    return _phi(ts, pred, nfa.block_of, dfa)


def superstate_transitional_accuracy(trajectories, block_decoder, nfa: AbstractionNfa) -> float:
    """Transitional accuracy for a decoder that predicts superstates directly.

    A step counts when the decoded next superstate lies in the abstraction's
    successor set of the decoded current superstate.  With singleton blocks
    this is the same quantity as :func:`transitional_accuracy`.
    """
    ts = _as_set(trajectories, nfa.base)
    return _phi_blocks(ts, np.asarray(block_decoder.predict_batch(ts.H)), nfa)


# --- abstraction sequences -------------------------------------------------------

class LiftedDecoder:
    """Superstate decoder presented as an MDFA-state decoder.

    Each predicted superstate is replaced by a fixed representative member (its
    most frequent training state), so composing with the abstraction map gives
    back the predicted superstate.  Only decoding accuracy is invariant to the
    representative choice; transitions use :func:`superstate_transitional_accuracy`.
    """

    def __init__(self, block_decoder, representatives: np.ndarray):
        self.block_decoder = block_decoder
        self.representatives = np.asarray(representatives, dtype=np.int64)

    def predict_batch(self, X):
        return self.representatives[self.block_decoder.predict_batch(X)]

    def predict(self, h) -> int:
        return int(self.predict_batch(np.asarray(h)[None, :])[0])


@dataclass
class AbstractionLevel:
    coarseness: int
    merged: Optional[tuple[int, int]]  # superstate pair merged to reach this level
    nfa: AbstractionNfa
    decoder: object
    rho: float  # held-out split
    phi: float
    rho_train: float
    selection_score: Optional[float] = None  # train rho of the previous decoder under this partition

    def to_dict(self) -> dict:
        return {"coarseness": self.coarseness, "merged": None if self.merged is None else list(self.merged),
                "partition": [sorted(b) for b in self.nfa.partition], "rho": self.rho, "phi": self.phi,
                "rho_train": self.rho_train, "selection_score": self.selection_score}


@dataclass
class AbstractionSequence:
    base: Dfa
    method: str
    levels: list = field(default_factory=list)

    @property
    def merges(self) -> list[tuple[int, int]]:
        return [lv.merged for lv in self.levels[1:]]

    def curve(self, kind: str = "rho") -> "AccuracyCurve":
        return AccuracyCurve([(lv.coarseness, getattr(lv, kind)) for lv in self.levels], kind)

    def check(self) -> None:
        M = self.base.n_states
        if [lv.coarseness for lv in self.levels] != list(range(M)):
            raise AssertionError("coarseness levels must run 0..M-1")
        for n, lv in enumerate(self.levels):
            if replay(self.base, self.merges[:n]).partition != lv.nfa.partition:
                raise AssertionError(f"replayed partition differs at level {n}")

    def to_dict(self) -> dict:
        return {"method": self.method, "levels": [lv.to_dict() for lv in self.levels]}


def split_strings(n_strings: int, test_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n_strings)
    k = max(1, int(round(n_strings * test_fraction))) if n_strings > 1 else 0
    return np.sort(perm[k:]), np.sort(perm[:k]) if k else np.sort(perm)


def _fit_level(train: TrajectorySet, nfa: AbstractionNfa, kind: str, hyper, rng):
    labels = nfa.block_of[train.Q]
    C = nfa.n_blocks
    counts = np.zeros((C, nfa.base.n_states))
    np.add.at(counts, (labels, train.Q), 1)
    reps = []
    for b, block in enumerate(nfa.partition):
        # most frequent member in training data, ties and unseen blocks by lowest index
        members = sorted(block)
        reps.append(members[int(np.argmax(counts[b, members]))])
    if C == 1:
        block_decoder = ConstantDecoder(0)
    else:
        block_decoder = fit(kind, train.H, labels, C, hyper, rng)
    return LiftedDecoder(block_decoder, np.array(reps))


def _confusion(ts: TrajectorySet, pred_blocks: np.ndarray, block_of: np.ndarray, C: int) -> np.ndarray:
    """Per-string-weighted confusion matrix W[predicted block, true block] over rows t >= 1."""
    W = np.zeros((C, C))
    k = ts.nxt
    np.add.at(W, (pred_blocks[k], block_of[ts.Q[k]]), ts.weight)
    return W


def candidate_scores(ts: TrajectorySet, decoder, nfa: AbstractionNfa) -> dict[tuple[int, int], float]:
    """Decoding accuracy of ``decoder`` after each possible single merge, without refitting."""
    pred = nfa.block_of[np.asarray(decoder.predict_batch(ts.H))]
    C = nfa.n_blocks
    W = _confusion(ts, pred, nfa.block_of, C)
    base = np.trace(W)
    return {(i, j): float((base + W[i, j] + W[j, i]) / ts.n_strings)
            for i, j in itertools.combinations(range(C), 2)}


def _run_sequence(trajectories, mdfa: Dfa, method: str, hyper: Optional[DecoderConfig], kind: str,
                  rng: np.random.Generator, split=None, test_fraction: float = 0.2) -> AbstractionSequence:
    if mdfa.n_states < 2:
        raise AnalysisError("abstraction needs an MDFA with at least two states")
    ts = _as_set(trajectories, mdfa)
    if split is None:
        split = split_strings(ts.n_strings, test_fraction, rng)
    train, test = ts.subset(split[0]), ts.subset(split[1])
    seq = AbstractionSequence(mdfa, method)
    nfa = AbstractionNfa.from_dfa(mdfa)
    merged, score = None, None
    while True:
        dec = _fit_level(train, nfa, kind, hyper, rng)
        blocks_test = dec.block_decoder.predict_batch(test.H)
        seq.levels.append(AbstractionLevel(
            nfa.coarseness, merged, nfa, dec,
            rho=_rho(test, dec.representatives[blocks_test], nfa.block_of),
            phi=_phi_blocks(test, blocks_test, nfa),
            rho_train=_rho(train, dec.predict_batch(train.H), nfa.block_of),
            selection_score=score,
        ))
        if nfa.n_blocks == 1:
            return seq
        scores = candidate_scores(train, dec, nfa)
        if method == "greedy":
            # dict preserves lexicographic pair order, so max() keeps the lowest pair on ties
            merged = max(scores, key=lambda p: scores[p])
        else:
            pairs = list(scores)
            merged = pairs[int(rng.integers(len(pairs)))]
        score = scores[merged]
        nfa = nfa.merge(*merged)


def greedy_abstraction(trajectories, mdfa: Dfa, hyper: Optional[DecoderConfig] = None, rng=None,
                       kind: str = "linear", split=None, test_fraction: float = 0.2) -> AbstractionSequence:
    """Merge, level by level, the superstate pair whose collapse most raises the
    current decoder's training decoding accuracy; refit the decoder after each merge."""
    rng = np.random.default_rng(0) if rng is None else rng
    return _run_sequence(trajectories, mdfa, "greedy", hyper, kind, rng, split, test_fraction)


def random_abstraction(trajectories, mdfa: Dfa, hyper: Optional[DecoderConfig] = None, rng=None,
                       kind: str = "linear", split=None, test_fraction: float = 0.2) -> AbstractionSequence:
    """Baseline: merge a uniformly random superstate pair at every level."""
    rng = np.random.default_rng(0) if rng is None else rng
    return _run_sequence(trajectories, mdfa, "random", hyper, kind, rng, split, test_fraction)


# --- curves ------------------------------------------------------------------------

@dataclass
class AccuracyCurve:
    points: list
    kind: str = "rho"

    def __post_init__(self):
        ns = [n for n, _ in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("coarseness must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for _, v in self.points):
            raise ValueError("accuracy values must lie in [0, 1]")


def normalized_auc(curve: AccuracyCurve) -> float:
    """Trapezoidal area with the coarseness axis rescaled to [0, 1]."""
    if len(curve.points) < 2:
        raise ValueError("need at least two points")
    n = np.array([p[0] for p in curve.points], dtype=float)
    v = np.array([p[1] for p in curve.points], dtype=float)
    x = (n - n[0]) / (n[-1] - n[0])
    return float(np.sum((x[1:] - x[:-1]) * (v[1:] + v[:-1]) / 2))


def coarseness_ratio_at(curve: AccuracyCurve, threshold: float, M: int) -> float:
    """Smallest coarseness reaching ``threshold``, as a fraction of M."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    for n, v in curve.points:
        if v >= threshold:
            return n / M
    raise ValueError("curve never reaches the threshold")


# --- statistics ----------------------------------------------------------------------

@dataclass
class AnovaResult:
    F: float
    dof: tuple[int, int]
    p: float

    def critical(self, alpha: float = 0.05) -> float:
        return float(stats.f.ppf(1 - alpha, *self.dof))


def anova_f(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way ANOVA; the p-value comes from the regularized incomplete beta function."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("need at least two groups of at least two samples")
    k = len(groups)
    N = sum(len(g) for g in groups)
    grand = np.concatenate(groups).mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(float(np.sum((g - g.mean()) ** 2)) for g in groups)
    d1, d2 = k - 1, N - k
    if ss_within == 0:
        raise ValueError("zero within-group variance; F is undefined")
    F = float((ss_between / d1) / (ss_within / d2))
    # upper tail of F(d1, d2)
    p = float(special.betainc(d2 / 2, d1 / 2, d2 / (d2 + d1 * F)))
    return AnovaResult(F, (d1, d2), p)


def sign_test(wins: int, losses: int) -> float:
    """One-sided sign-test p-value for ``wins`` out of ``wins + losses`` (ties dropped)."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)


# --- dendrograms ------------------------------------------------------------------------

@dataclass
class DendrogramNode:
    id: int
    left: int
    right: int
    level: int
    members: frozenset


@dataclass
class DendrogramTree:
    n_leaves: int
    nodes: list

    def partition_at(self, level: int) -> tuple[frozenset, ...]:
        """Blocks after the first ``level`` merges, sorted by smallest member."""
        blocks = {i: frozenset([i]) for i in range(self.n_leaves)}
        for node in self.nodes[:level]:
            blocks.pop(node.left)
            blocks.pop(node.right)
            blocks[node.id] = node.members
        return tuple(sorted(blocks.values(), key=min))

    def to_dict(self) -> dict:
        return {"n_leaves": self.n_leaves,
                "nodes": [{"id": n.id, "left": n.left, "right": n.right, "level": n.level,
                           "members": sorted(n.members)} for n in self.nodes]}


def dendrogram(seq: AbstractionSequence) -> DendrogramTree:
    """Binary merge tree: leaves are MDFA states, node ``M + k`` is the (k+1)-th merge."""
    M = seq.base.n_states
    node_of = {frozenset([q]): q for q in range(M)}
    nodes = []
    for lv_prev, lv in zip(seq.levels, seq.levels[1:]):
        i, j = lv.merged
        a, b = lv_prev.nfa.partition[i], lv_prev.nfa.partition[j]
        nid = M + len(nodes)
        nodes.append(DendrogramNode(nid, node_of[a], node_of[b], lv.coarseness, a | b))
        node_of[a | b] = nid
    return DendrogramTree(M, nodes)
