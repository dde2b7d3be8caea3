import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnfsa.automata import (
    AbstractionNfa, Dfa, all_strings, compile_regex, complete, distinguishing_string, equivalent, mdfa,
    minimize, replay,
)
from rnnfsa.regex import Alphabet, AlphabetError, GeneratorConfig, random_regex, render

from conftest import CASE_REGEX, regex_oracle

AB = Alphabet.from_string("ab")


def test_a_star_single_state():
    d = compile_regex("a*", Alphabet.from_string("a"))
    m = minimize(d)
    assert m.n_states == 1 and m.accepting == {0} and m.delta.tolist() == [[0]]


def test_ab_four_states_against_oracle():
    d = minimize(compile_regex("ab", AB))
    assert d.n_states == 4
    match = regex_oracle("ab")
    for w in all_strings(AB, 4):
        assert d.accepts(w) == match(w)


def test_case_six_live_states():
    d = mdfa(CASE_REGEX)
    assert d.minimal
    # the complete automaton adds one rejecting sink to the six live states
    assert d.n_live_states == 6
    assert d.n_states == 7
    assert len(d.dead_states()) == 1


def test_case_accepts():
    d = mdfa(CASE_REGEX)
    match = regex_oracle(CASE_REGEX)
    assert d.accepts("3444") and match("3444")
    assert not d.accepts("33") and not match("33")
    for w in all_strings(d.alphabet, 6):
        assert d.accepts(w) == match(w)


def test_minimize_idempotent():
    d = mdfa(CASE_REGEX)
    assert minimize(d) == d


def test_minimize_merges_duplicate_state():
    base = mdfa("(ab)*", AB)
    assert base.n_states == 3
    # clone state 1 as state 3 and send the start's 'a' edge to the clone
    delta = np.vstack([base.delta, base.delta[1]])
    delta[0, 0] = 3
    dup = Dfa(AB, delta, base.start, base.accepting)
    assert dup.n_states == 4
    assert equivalent(dup, base)
    assert minimize(dup) == base


def test_complete_adds_dead_state():
    d = complete(AB, {(0, "a"): 1, (1, "b"): 2}, 0, [2])
    assert d.n_states == 4
    assert d.accepts("ab") and not d.accepts("ba")
    assert (d.delta >= 0).all()


def test_accepts_empty_string():
    d = mdfa("a*", AB)
    assert d.accepts("")


def test_accepts_unknown_symbol():
    with pytest.raises(AlphabetError):
        mdfa("a*", AB).accepts("c")
    with pytest.raises(AlphabetError):
        mdfa("a*", AB).trace("ac")


def test_trace_length_and_replay(rng):
    d = mdfa(CASE_REGEX)
    assert d.trace("") == [d.start]
    for _ in range(50):
        w = "".join(rng.choice(list(d.alphabet.symbols), size=int(rng.integers(0, 12))))
        tr = d.trace(w)
        assert len(tr) == len(w) + 1
        for t, c in enumerate(w):
            assert tr[t + 1] == d.step(tr[t], c)


def test_equivalent_examples():
    d = mdfa(CASE_REGEX)
    assert equivalent(d, d)
    assert equivalent(compile_regex("a|b", AB), compile_regex("[a-b]", AB))
    assert not equivalent(compile_regex("a+", AB), compile_regex("a*", AB))
    assert distinguishing_string(compile_regex("a+", AB), compile_regex("a*", AB)) == ""
    with pytest.raises(AlphabetError):
        equivalent(compile_regex("a", AB), compile_regex("a", Alphabet.from_string("a")))


def test_canonical_numbering_is_bfs():
    d = mdfa(CASE_REGEX)
    assert d.start == 0
    seen = [0]
    for q in seen:
        for t in d.delta[q]:
            if int(t) not in seen:
                seen.append(int(t))
    assert seen == list(range(d.n_states))


def _random_mdfas(n, seed, **kw):
    cfg = GeneratorConfig(**kw)
    rng = np.random.default_rng(seed)
    alphabet = Alphabet.from_string(cfg.alphabet)
    for _ in range(n):
        ast = random_regex(cfg, rng)
        yield ast, alphabet


def test_compile_matches_python_re_on_random_regexes():
    for ast, alphabet in _random_mdfas(40, 5, alphabet="abc", max_states=10):
        d = compile_regex(ast, alphabet)
        match = regex_oracle(render(ast))
        for w in all_strings(alphabet, 5):
            assert d.accepts(w) == match(w), (render(ast), w)


def suffix_signatures(m: Dfa, max_len: int) -> list[tuple]:
    """Acceptance of every suffix of length <= max_len from every state.

    Suffixes are enumerated exhaustively but grouped by the tuple of states they
    lead to from each start state, so strings with identical effect share a column.
    """
    cols = {tuple(range(m.n_states))}
    seen = set(cols)
    for _ in range(max_len):
        cols = {tuple(int(m.delta[q, a]) for q in col) for col in cols for a in range(len(m.alphabet))}
        cols -= seen
        seen |= cols
        if not cols:
            break
    ordered = sorted(seen)
    return [tuple(col[q] in m.accepting for col in ordered) for q in range(m.n_states)]


def test_suffix_signatures_match_plain_enumeration():
    m = mdfa(CASE_REGEX)
    plain = []
    words = list(all_strings(m.alphabet, 4))
    for q in range(m.n_states):
        row = set()
        for w in words:
            r = q
            for c in w:
                r = m.step(r, c)
            row.add((w, r in m.accepting))
        plain.append(frozenset(row))
    grouped = suffix_signatures(m, 4)
    for p, q in itertools.combinations(range(m.n_states), 2):
        assert (plain[p] == plain[q]) == (grouped[p] == grouped[q])


def test_minimality_properties():
    for ast, alphabet in _random_mdfas(200, 11, max_states=10):
        raw = compile_regex(ast, alphabet)
        m = minimize(raw)
        assert m == minimize(m)
        assert equivalent(raw, m)
        assert m.n_states <= raw.n_states
        # every pair of MDFA states is told apart by some suffix of length <= |Q| + 2
        assert len(set(suffix_signatures(m, m.n_states + 2))) == m.n_states


def test_delta_is_total():
    for ast, alphabet in _random_mdfas(30, 13):
        d = compile_regex(ast, alphabet)
        assert d.delta.shape == (d.n_states, len(alphabet))
        assert d.delta.min() >= 0 and d.delta.max() < d.n_states


# --- abstractions --------------------------------------------------------------------


def test_coarseness_zero_singletons():
    nfa = AbstractionNfa.from_dfa(mdfa(CASE_REGEX))
    assert nfa.coarseness == 0
    assert nfa.n_blocks == 7
    assert all(len(b) == 1 for b in nfa.partition)
    assert [nfa.abstract_state(q) for q in range(7)] == list(range(7))


def test_merge_basic():
    nfa = AbstractionNfa.from_dfa(mdfa(CASE_REGEX)).merge(1, 2)
    assert nfa.coarseness == 1 and nfa.n_blocks == 6
    assert nfa.abstract_state(1) == nfa.abstract_state(2)


def test_merge_errors():
    nfa = AbstractionNfa.from_dfa(mdfa(CASE_REGEX))
    with pytest.raises(ValueError):
        nfa.merge(2, 2)
    with pytest.raises(IndexError):
        nfa.merge(0, 7)


def test_merge_to_single_block_accepts_everything():
    d = mdfa(CASE_REGEX)
    nfa = AbstractionNfa.from_dfa(d)
    while nfa.n_blocks > 1:
        nfa = nfa.merge(0, 1)
    assert nfa.accepting_blocks == {0}
    assert all(nfa.accepts(w) for w in all_strings(d.alphabet, 4))


def test_one_merge_is_superset():
    d = mdfa(CASE_REGEX)
    for i, j in itertools.combinations(range(d.n_states), 2):
        nfa = AbstractionNfa.from_dfa(d).merge(i, j)
        for w in all_strings(d.alphabet, 6):
            if d.accepts(w):
                assert nfa.accepts(w)


def test_abstract_state_composition_law(rng):
    d = mdfa(CASE_REGEX)
    nfa = AbstractionNfa.from_dfa(d)
    merges = []
    while nfa.n_blocks > 1:
        i, j = sorted(rng.choice(nfa.n_blocks, size=2, replace=False))
        nfa = nfa.merge(int(i), int(j))
        merges.append((int(i), int(j)))
        # replaying the pairwise merges on explicit sets gives the same map
        blocks = [{q} for q in range(d.n_states)]
        for a, b in merges:
            merged = blocks[a] | blocks[b]
            blocks = sorted([x for k, x in enumerate(blocks) if k not in (a, b)] + [merged], key=min)
        for q in range(d.n_states):
            assert q in blocks[nfa.abstract_state(q)]
        assert replay(d, merges).partition == nfa.partition


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_superset_chain(seed):
    rng = np.random.default_rng(seed)
    d = mdfa(CASE_REGEX)
    words = list(all_strings(d.alphabet, 5))
    nfa = AbstractionNfa.from_dfa(d)
    prev = {w for w in words if d.accepts(w)}
    while nfa.n_blocks > 1:
        i, j = rng.choice(nfa.n_blocks, size=2, replace=False)
        nfa = nfa.merge(int(i), int(j))
        cur = {w for w in words if nfa.accepts(w)}
        assert prev <= cur
        prev = cur
    assert prev == set(words)


def test_partition_invariants():
    d = mdfa(CASE_REGEX)
    with pytest.raises(ValueError):
        AbstractionNfa(d, (frozenset({0, 1}), frozenset({1, 2, 3, 4, 5, 6})), 1)
    with pytest.raises(ValueError):
        AbstractionNfa(d, tuple(frozenset([q]) for q in range(7)), 1)
