"""Complete DFAs, regex compilation, Hopcroft minimization and state-merge abstractions.

Compilation goes Thompson NFA -> subset construction -> completion -> Hopcroft,
and minimized automata are renumbered breadth-first from the start state so
equal languages over equal alphabets give identical structures.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .regex import (
    Alphabet, AlphabetError, Alternation, CharClass, Concat, Epsilon, Literal, Optional_, Plus,
    RegexAst, Repeat, Star, default_alphabet, parse,
)


@dataclass(frozen=True, eq=False)
class Dfa:
    alphabet: Alphabet
    delta: np.ndarray  # (n_states, n_symbols) int
    start: int
    accepting: frozenset
    minimal: bool = False

    def __post_init__(self):
        delta = np.array(self.delta, dtype=np.int64)
        if delta.ndim != 2 or delta.shape[1] != len(self.alphabet):
            raise ValueError(f"delta must have shape (n_states, {len(self.alphabet)}), got {delta.shape}")
        n = delta.shape[0]
        if n == 0:
            raise ValueError("DFA needs at least one state")
        if delta.min() < 0 or delta.max() >= n:
            raise ValueError("transition target out of range (DFA must be complete)")
        if not 0 <= self.start < n:
            raise ValueError("start state out of range")
        acc = frozenset(int(q) for q in self.accepting)
        if any(not 0 <= q < n for q in acc):
            raise ValueError("accepting state out of range")
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "accepting", acc)

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @property
    def accept_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.accepting)] = True
        return mask

    def step(self, q: int, symbol: str) -> int:
        return int(self.delta[q, self.alphabet.index(symbol)])

    def accepts(self, w: str) -> bool:
        return self.trace(w)[-1] in self.accepting

    def trace(self, w: str) -> list[int]:
        """States visited while reading ``w``, starting with the start state."""
        q = self.start
        out = [q]
        for c in w:
            q = int(self.delta[q, self.alphabet.index(c)])
            out.append(q)
        return out

    def distance_to_accept(self) -> np.ndarray:
        """Shortest number of symbols from each state to an accepting state (-1 if none)."""
        dist = np.full(self.n_states, -1, dtype=np.int64)
        queue = deque()
        for q in sorted(self.accepting):
            dist[q] = 0
            queue.append(q)
        preds: list[set[int]] = [set() for _ in range(self.n_states)]
        for q in range(self.n_states):
            for t in self.delta[q]:
                preds[int(t)].add(q)
        while queue:
            q = queue.popleft()
            for p in preds[q]:
                if dist[p] < 0:
                    dist[p] = dist[q] + 1
                    queue.append(p)
        return dist

    def dead_states(self) -> list[int]:
        """States from which no accepting state is reachable."""
        return [int(q) for q in np.flatnonzero(self.distance_to_accept() < 0)]

    @property
    def n_live_states(self) -> int:
        """State count of the trimmed automaton (rejecting sinks dropped)."""
        return self.n_states - len(self.dead_states())

    def structure_key(self) -> tuple:
        return (self.alphabet.symbols, self.start, tuple(sorted(self.accepting)),
                tuple(map(tuple, self.delta.tolist())))

    def __eq__(self, other) -> bool:
        return isinstance(other, Dfa) and self.structure_key() == other.structure_key()

    def __hash__(self) -> int:
        return hash(self.structure_key())

    def to_dict(self) -> dict:
        return {
            "alphabet": str(self.alphabet),
            "n_states": self.n_states,
            "start": self.start,
            "accepting": sorted(self.accepting),
            "delta": self.delta.tolist(),
            "minimal": self.minimal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dfa":
        return cls(Alphabet.from_string(d["alphabet"]), np.array(d["delta"]), d["start"],
                   frozenset(d["accepting"]), d.get("minimal", False))


# --- Thompson construction ----------------------------------------------------

class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.moves: list[list[tuple[int, int]]] = []

    def new(self) -> int:
        self.eps.append([])
        self.moves.append([])
        return len(self.eps) - 1

    def build(self, ast: RegexAst, alphabet: Alphabet) -> tuple[int, int]:
        match ast:
            case Epsilon():
                s, e = self.new(), self.new()
                self.eps[s].append(e)
                return s, e
            case Literal(sym):
                s, e = self.new(), self.new()
                self.moves[s].append((alphabet.index(sym), e))
                return s, e
            case CharClass(syms):
                s, e = self.new(), self.new()
                for sym in sorted(syms):
                    self.moves[s].append((alphabet.index(sym), e))
                return s, e
            case Concat(items):
                s, e = self.build(items[0], alphabet)
                for item in items[1:]:
                    s2, e2 = self.build(item, alphabet)
                    self.eps[e].append(s2)
                    e = e2
                return s, e
            case Alternation(opts):
                s, e = self.new(), self.new()
                for opt in opts:
                    s2, e2 = self.build(opt, alphabet)
                    self.eps[s].append(s2)
                    self.eps[e2].append(e)
                return s, e
            case Star(child):
                s, e = self.new(), self.new()
                s2, e2 = self.build(child, alphabet)
                self.eps[s] += [s2, e]
                self.eps[e2] += [s2, e]
                return s, e
            case Plus(child):
                return self.build(Concat((child, Star(child))), alphabet)
            case Optional_(child):
                return self.build(Alternation((child, Epsilon())), alphabet)
            case Repeat(child, lo, hi):
                parts: list[RegexAst] = [child] * lo
                if hi is None:
                    parts.append(Star(child))
                else:
                    parts += [Optional_(child)] * (hi - lo)
                return self.build(Concat(tuple(parts)) if parts else Epsilon(), alphabet)
        raise TypeError(f"not a regex node: {ast!r}")

    def closure(self, states: Iterable[int]) -> frozenset:
        seen = set(states)
        stack = list(seen)
        while stack:
            for t in self.eps[stack.pop()]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)


def compile_regex(ast: RegexAst | str, alphabet: Optional[Alphabet] = None) -> Dfa:
    """Complete (not yet minimal) DFA for ``ast`` by subset construction.

    The empty subset, when reached, becomes the explicit dead state.
    """
    if isinstance(ast, str):
        ast = parse(ast, alphabet)
    if alphabet is None:
        alphabet = default_alphabet(ast)
    nfa = _Nfa()
    s, e = nfa.build(ast, alphabet)
    k = len(alphabet)
    start = nfa.closure([s])
    index = {start: 0}
    order = [start]
    rows: list[list[int]] = []
    i = 0
    while i < len(order):
        cur = order[i]
        row = []
        for a in range(k):
            nxt = nfa.closure(t for q in cur for (sym, t) in nfa.moves[q] if sym == a)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
            row.append(index[nxt])
        rows.append(row)
        i += 1
    accepting = frozenset(i for i, subset in enumerate(order) if e in subset)
    return Dfa(alphabet, np.array(rows, dtype=np.int64).reshape(len(order), k), 0, accepting)


def complete(alphabet: Alphabet, transitions: dict, start: int, accepting: Iterable[int]) -> Dfa:
    """Build a complete DFA from a partial ``{(state, symbol): state}`` map, adding a
    dead state for every missing transition."""
    states = {start} | {q for q, _ in transitions} | set(transitions.values()) | set(accepting)
    n = max(states) + 1
    rows = np.full((n, len(alphabet)), -1, dtype=np.int64)
    for (q, sym), t in transitions.items():
        rows[q, alphabet.index(sym)] = t
    if (rows < 0).any():
        rows[rows < 0] = n
        rows = np.vstack([rows, np.full((1, len(alphabet)), n, dtype=np.int64)])
    return Dfa(alphabet, rows, start, frozenset(accepting))


# --- minimization --------------------------------------------------------------

def _reachable(dfa: Dfa) -> list[int]:
    seen = {dfa.start}
    order = [dfa.start]
    i = 0
    while i < len(order):
        for t in dfa.delta[order[i]]:
            t = int(t)
            if t not in seen:
                seen.add(t)
                order.append(t)
        i += 1
    return order


def _hopcroft(dfa: Dfa, states: list[int]) -> list[set[int]]:
    k = len(dfa.alphabet)
    inverse: list[dict[int, set[int]]] = [dict() for _ in range(k)]
    for q in states:
        for a in range(k):
            inverse[a].setdefault(int(dfa.delta[q, a]), set()).add(q)
    acc = {q for q in states if q in dfa.accepting}
    rej = set(states) - acc
    partition = [b for b in (acc, rej) if b]
    work = [min(partition, key=len)] if len(partition) == 2 else []
    while work:
        splitter = work.pop()
        for a in range(k):
            x = set()
            for q in splitter:
                x |= inverse[a].get(q, set())
            if not x:
                continue
            refined = []
            for block in partition:
                inter = block & x
                diff = block - x
                if inter and diff:
                    refined += [inter, diff]
                    if block in work:
                        work.remove(block)
                        work += [inter, diff]
                    else:
                        work.append(min(inter, diff, key=len))
                else:
                    refined.append(block)
            partition = refined
    return partition


def canonical(dfa: Dfa, minimal: bool = False) -> Dfa:
    """Renumber reachable states breadth-first from the start, symbols in alphabet order."""
    order = _reachable(dfa)
    new = {q: i for i, q in enumerate(order)}
    delta = np.array([[new[int(t)] for t in dfa.delta[q]] for q in order], dtype=np.int64)
    return Dfa(dfa.alphabet, delta.reshape(len(order), len(dfa.alphabet)), 0,
               frozenset(new[q] for q in dfa.accepting if q in new), minimal)


def minimize(dfa: Dfa) -> Dfa:
    states = _reachable(dfa)
    blocks = _hopcroft(dfa, states)
    block_of = {}
    for b, block in enumerate(blocks):
        for q in block:
            block_of[q] = b
    delta = np.zeros((len(blocks), len(dfa.alphabet)), dtype=np.int64)
    for b, block in enumerate(blocks):
        q = next(iter(block))
        delta[b] = [block_of[int(t)] for t in dfa.delta[q]]
    accepting = frozenset(block_of[q] for q in dfa.accepting if q in block_of)
    return canonical(Dfa(dfa.alphabet, delta, block_of[dfa.start], accepting), minimal=True)


def mdfa(regex: RegexAst | str, alphabet: Optional[Alphabet] = None) -> Dfa:
    return minimize(compile_regex(regex, alphabet))


def equivalent(a: Dfa, b: Dfa) -> bool:
    """Language equality via reachability in the symmetric-difference product."""
    if a.alphabet != b.alphabet:
        raise AlphabetError(f"alphabet mismatch: {a.alphabet} vs {b.alphabet}")
    return distinguishing_string(a, b) is None


def distinguishing_string(a: Dfa, b: Dfa) -> Optional[str]:
    """Shortest string accepted by exactly one of ``a`` and ``b``, or None."""
    start = (a.start, b.start)
    parent: dict[tuple[int, int], tuple] = {start: None}
    queue = deque([start])
    syms = a.alphabet.symbols
    while queue:
        p, q = pair = queue.popleft()
        if (p in a.accepting) != (q in b.accepting):
            out = []
            while parent[pair] is not None:
                pair, c = parent[pair]
                out.append(c)
            return "".join(reversed(out))
        for i, c in enumerate(syms):
            nxt = (int(a.delta[p, i]), int(b.delta[q, i]))
            if nxt not in parent:
                parent[nxt] = (pair, c)
                queue.append(nxt)
    return None


# --- abstractions ----------------------------------------------------------------

@dataclass(frozen=True)
class AbstractionNfa:
    """Partition of the states of a base MDFA into superstates.

    Blocks are kept sorted by their smallest member; ``merge`` returns a new value.
    """
    base: Dfa
    partition: tuple[frozenset, ...]
    coarseness: int = 0
    history: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        covered = sorted(q for b in self.partition for q in b)
        if covered != list(range(self.base.n_states)) or any(not b for b in self.partition):
            raise ValueError("partition blocks must be non-empty, disjoint and cover the base states")
        if len(self.partition) != self.base.n_states - self.coarseness:
            raise ValueError("block count must equal n_states - coarseness")
        block_of = np.empty(self.base.n_states, dtype=np.int64)
        for i, b in enumerate(self.partition):
            block_of[list(b)] = i
        block_of.flags.writeable = False
        object.__setattr__(self, "block_of", block_of)

    @classmethod
    def from_dfa(cls, dfa: Dfa) -> "AbstractionNfa":
        return cls(dfa, tuple(frozenset([q]) for q in range(dfa.n_states)))

    @property
    def n_blocks(self) -> int:
        return len(self.partition)

    @property
    def accepting_blocks(self) -> frozenset:
        return frozenset(i for i, b in enumerate(self.partition) if b & self.base.accepting)

    def abstract_state(self, q: int) -> int:
        if not 0 <= q < self.base.n_states:
            raise IndexError(f"state {q} not in base automaton")
        return int(self.block_of[q])

    def merge(self, i: int, j: int) -> "AbstractionNfa":
        n = len(self.partition)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"superstate index out of range ({i}, {j}) for {n} blocks")
        if i == j:
            raise ValueError("cannot merge a superstate with itself")
        blocks = [b for k, b in enumerate(self.partition) if k not in (i, j)]
        blocks.append(self.partition[i] | self.partition[j])
        blocks.sort(key=min)
        return AbstractionNfa(self.base, tuple(blocks), self.coarseness + 1,
                              self.history + ((min(i, j), max(i, j)),))

    def successors(self, block: int, symbol: str) -> frozenset:
        """Superstates reachable from ``block`` on ``symbol`` (the NFA transition relation)."""
        a = self.base.alphabet.index(symbol)
        return frozenset(int(self.block_of[int(self.base.delta[q, a])]) for q in self.partition[block])

    def accepts(self, w: str) -> bool:
        current = {self.abstract_state(self.base.start)}
        for c in w:
            current = set().union(*(self.successors(b, c) for b in current))
        return bool(current & self.accepting_blocks)

    def to_dict(self) -> dict:
        return {"coarseness": self.coarseness, "partition": [sorted(b) for b in self.partition],
                "history": [list(p) for p in self.history]}


def replay(base: Dfa, merges: Sequence[tuple[int, int]]) -> AbstractionNfa:
    nfa = AbstractionNfa.from_dfa(base)
    for i, j in merges:
        nfa = nfa.merge(i, j)
    return nfa


def all_strings(alphabet: Alphabet, max_len: int, min_len: int = 0):
    """Every string over ``alphabet`` with length in [min_len, max_len], shortest first."""
    from itertools import product

    for n in range(min_len, max_len + 1):
        for tup in product(alphabet.symbols, repeat=n):
            yield "".join(tup)
