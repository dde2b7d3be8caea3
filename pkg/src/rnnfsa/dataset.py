"""Balanced accept/reject string datasets drawn from a DFA."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .automata import Dfa
from .regex import Alphabet

ACCEPT, REJECT = "accept", "reject"
P_STOP = 0.25


class NoWitness(ValueError):
    """The language (or its complement) has no string in the requested length range."""


class CannotBalance(RuntimeError):
    pass


class DegenerateLanguage(CannotBalance):
    """Every string over the alphabet is accepted, so there are no negatives."""


@dataclass(frozen=True)
class LabeledDataset:
    examples: tuple[tuple[str, str], ...]
    alphabet: Alphabet
    max_len: int
    regex: str = ""
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def strings(self) -> list[str]:
        return [w for w, _ in self.examples]

    @property
    def labels(self) -> np.ndarray:
        """1 for accept, 0 for reject."""
        return np.array([lab == ACCEPT for _, lab in self.examples], dtype=np.int64)

    def check(self, dfa: Dfa) -> None:
        """Assert label soundness, length bounds and uniqueness."""
        seen = set()
        for w, lab in self.examples:
            if not 1 <= len(w) <= self.max_len:
                raise AssertionError(f"length of {w!r} outside [1, {self.max_len}]")
            if dfa.accepts(w) != (lab == ACCEPT):
                raise AssertionError(f"label {lab} wrong for {w!r}")
            if (w, lab) in seen:
                raise AssertionError(f"duplicate example {w!r}")
            seen.add((w, lab))

    def digest(self) -> str:
        h = hashlib.sha256()
        for w, lab in self.examples:
            h.update(f"{lab}\t{w}\n".encode())
        return h.hexdigest()

    def dumps(self) -> str:
        header = f"# regex={self.regex}\talphabet={self.alphabet}\tseed={self.seed}\tmax_len={self.max_len}"
        return "\n".join([header] + [f"{lab}\t{w}" for w, lab in self.examples]) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LabeledDataset":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing dataset header line")
        meta = dict(field.split("=", 1) for field in lines[0][2:].split("\t"))
        examples = []
        for line in lines[1:]:
            if not line:
                continue
            lab, w = line.split("\t", 1)
            if lab not in (ACCEPT, REJECT):
                raise ValueError(f"bad label {lab!r}")
            examples.append((w, lab))
        seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
        return cls(tuple(examples), Alphabet.from_string(meta["alphabet"]), int(meta["max_len"]),
                   meta.get("regex", ""), seed)


def _check_witness(dfa: Dfa, max_len: int, dist: np.ndarray) -> None:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    # a length-1..max_len witness exists iff some successor of the start is within max_len-1
    succ = dfa.delta[dfa.start]
    if not any(0 <= dist[t] <= max_len - 1 for t in succ):
        raise NoWitness(f"no accepted string of length 1..{max_len}")


def sample_positive(dfa: Dfa, max_len: int, rng: np.random.Generator,
                    p_stop: float = P_STOP, _dist: Optional[np.ndarray] = None) -> str:
    """Random walk that only takes transitions keeping acceptance reachable in budget."""
    dist = dfa.distance_to_accept() if _dist is None else _dist
    _check_witness(dfa, max_len, dist)
    syms = dfa.alphabet.symbols
    q, out = dfa.start, []
    while True:
        n = len(out)
        if n >= 1 and q in dfa.accepting and (n == max_len or rng.random() < p_stop):
            break
        budget = max_len - n - 1
        options = [a for a in range(len(syms)) if 0 <= dist[dfa.delta[q, a]] <= budget]
        if not options:
            break
        a = options[int(rng.integers(len(options)))]
        out.append(syms[a])
        q = int(dfa.delta[q, a])
    return "".join(out)


def make_negative_swap(w: str, dfa: Dfa, rng: np.random.Generator,
                       max_tries: Optional[int] = None) -> Optional[str]:
    """Apply random transpositions to ``w`` until the result is rejected."""
    if len(w) < 2:
        return None
    tries = 10 * len(w) if max_tries is None else max_tries
    cur = list(w)
    for _ in range(tries):
        i, j = rng.choice(len(cur), size=2, replace=False)
        cur[i], cur[j] = cur[j], cur[i]
        s = "".join(cur)
        if not dfa.accepts(s):
            return s
    return None


def make_negative_shuffle(w: str, dfa: Dfa, rng: np.random.Generator,
                          max_tries: Optional[int] = None) -> Optional[str]:
    """Random full permutations of ``w``; first rejected one wins."""
    if len(w) < 2:
        return None
    tries = 10 * len(w) if max_tries is None else max_tries
    chars = np.array(list(w))
    for _ in range(tries):
        s = "".join(rng.permutation(chars))
        if not dfa.accepts(s):
            return s
    return None


def random_string(alphabet: Alphabet, max_len: int, rng: np.random.Generator) -> str:
    n = int(rng.integers(1, max_len + 1))
    return "".join(alphabet.symbols[i] for i in rng.integers(len(alphabet), size=n))


def _rejects_something(dfa: Dfa, max_len: int) -> bool:
    """True if some string of length 1..max_len is rejected."""
    reach = {dfa.start}
    for _ in range(max_len):
        reach = {int(t) for q in reach for t in dfa.delta[q]}
        if any(q not in dfa.accepting for q in reach):
            return True
    return False


def build_dataset(dfa: Dfa, n: int, max_len: int, rng: np.random.Generator,
                  regex: str = "", seed: Optional[int] = None, attempts_per_example: int = 50) -> LabeledDataset:
    """``n/2`` distinct accepted and ``n/2`` distinct rejected strings, shuffled together.

    Negatives alternate between the swap and shuffle perturbations of a sampled
    positive, falling back to uniform random strings when both fail.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even number")
    half = n // 2
    dist = dfa.distance_to_accept()
    _check_witness(dfa, max_len, dist)
    if not _rejects_something(dfa, max_len):
        raise DegenerateLanguage(f"every string of length 1..{max_len} is accepted")

    positives: dict[str, None] = {}
    budget = attempts_per_example * half
    while len(positives) < half and budget > 0:
        positives.setdefault(sample_positive(dfa, max_len, rng, _dist=dist))
        budget -= 1
    if len(positives) < half:
        raise CannotBalance(f"only {len(positives)} distinct accepted strings found, need {half}")
    pos = list(positives)

    negatives: dict[str, None] = {}
    budget = attempts_per_example * half
    k = 0
    while len(negatives) < half and budget > 0:
        w = pos[int(rng.integers(len(pos)))]
        make = make_negative_swap if k % 2 == 0 else make_negative_shuffle
        neg = make(w, dfa, rng)
        if neg is None:
            neg = random_string(dfa.alphabet, max_len, rng)
            if dfa.accepts(neg):
                neg = None
        if neg is not None:
            negatives.setdefault(neg)
            k += 1
        budget -= 1
    if len(negatives) < half:
        raise CannotBalance(f"only {len(negatives)} distinct rejected strings found, need {half}")

    examples = [(w, ACCEPT) for w in pos] + [(w, REJECT) for w in negatives]
    order = rng.permutation(len(examples))
    ds = LabeledDataset(tuple(examples[i] for i in order), dfa.alphabet, max_len, regex, seed)
    ds.check(dfa)
    return ds
