import re

import numpy as np
import pytest
from hypothesis import strategies as st

from rnnfsa import regex as rx

CASE_REGEX = "(([4-6]{2}[4-6]+)?)3[4-6]+"

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def regex_oracle(text: str):
    """Independent matcher: the dialect is a subset of Python's re syntax."""
    pattern = re.compile(text)
    return lambda w: pattern.fullmatch(w) is not None


def ast_strategy(alphabet: str = "abc", max_leaves: int = 6):
    syms = list(alphabet)
    leaf = st.one_of(
        st.sampled_from(syms).map(rx.Literal),
        st.sets(st.sampled_from(syms), min_size=1).map(lambda s: rx.CharClass(frozenset(s))),
        st.just(rx.Epsilon()),
    )

    def extend(children):
        return st.one_of(
            st.lists(children, min_size=2, max_size=3).map(lambda xs: rx.Concat(tuple(xs))),
            st.lists(children, min_size=2, max_size=3).map(lambda xs: rx.Alternation(tuple(xs))),
            children.map(rx.Star),
            children.map(rx.Plus),
            children.map(rx.Optional_),
            st.tuples(children, st.integers(0, 2), st.one_of(st.none(), st.integers(0, 2))).map(
                lambda t: rx.Repeat(t[0], t[1], None if t[2] is None else t[1] + t[2])),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
