"""Restricted regular-expression dialect: AST, parser, printer and random generator.

The dialect covers literals, bracketed classes with ``x-y`` ranges, grouping,
alternation, the postfix operators ``* + ?`` and bounded repetition ``{m}`` /
``{m,n}``.  Metacharacters that appear in an alphabet are escaped with ``\\``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

METACHARS = set("()[]{}|*+?\\.-^$,")


class RegexSyntaxError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


class AlphabetError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        syms = tuple(self.symbols)
        object.__setattr__(self, "symbols", syms)
        if not syms:
            raise AlphabetError("alphabet is empty")
        if len(set(syms)) != len(syms):
            raise AlphabetError(f"duplicate symbols in alphabet {syms!r}")
        for s in syms:
            if len(s) != 1:
                raise AlphabetError(f"symbol {s!r} is not a single character")
            if s.isspace():
                raise AlphabetError("whitespace symbols are not supported")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(syms)})

    @classmethod
    def from_string(cls, text: str) -> "Alphabet":
        return cls(tuple(text))

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, sym) -> bool:
        return sym in self._index

    def index(self, sym: str) -> int:
        try:
            return self._index[sym]
        except KeyError:
            raise AlphabetError(f"symbol {sym!r} not in alphabet {''.join(self.symbols)!r}") from None

    def encode(self, w: str) -> list[int]:
        return [self.index(c) for c in w]

    def __str__(self) -> str:
        return "".join(self.symbols)


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Epsilon:
    pass


@dataclass(frozen=True)
class Literal:
    symbol: str


@dataclass(frozen=True)
class CharClass:
    symbols: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "symbols", frozenset(self.symbols))
        if not self.symbols:
            raise ValueError("empty character class")


@dataclass(frozen=True)
class Concat:
    items: tuple["RegexAst", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValueError("Concat needs at least one item")


@dataclass(frozen=True)
class Alternation:
    options: tuple["RegexAst", ...]

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ValueError("Alternation needs at least one option")


@dataclass(frozen=True)
class Star:
    child: "RegexAst"


@dataclass(frozen=True)
class Plus:
    child: "RegexAst"


@dataclass(frozen=True)
class Optional_:
    child: "RegexAst"


@dataclass(frozen=True)
class Repeat:
    child: "RegexAst"
    min: int
    max: Optional[int] = None

    def __post_init__(self):
        if self.min < 0:
            raise ValueError("Repeat min must be >= 0")
        if self.max is not None and self.max < self.min:
            raise ValueError("Repeat max must be >= min")


RegexAst = Union[Epsilon, Literal, CharClass, Concat, Alternation, Star, Plus, Optional_, Repeat]

# public alias that does not shadow typing.Optional
OptionalNode = Optional_


def symbols_of(ast: RegexAst) -> set[str]:
    match ast:
        case Literal(s):
            return {s}
        case CharClass(syms):
            return set(syms)
        case Concat(items):
            return set().union(*(symbols_of(i) for i in items))
        case Alternation(opts):
            return set().union(*(symbols_of(o) for o in opts))
        case Star(c) | Plus(c) | Optional_(c) | Repeat(c, _, _):
            return symbols_of(c)
        case Epsilon():
            return set()
    raise TypeError(f"not a regex node: {ast!r}")


def default_alphabet(ast: RegexAst) -> Alphabet:
    """Alphabet made of the symbols the expression mentions, in code-point order."""
    syms = sorted(symbols_of(ast))
    if not syms:
        raise AlphabetError("expression mentions no symbols; pass an explicit alphabet")
    return Alphabet(tuple(syms))


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, alphabet: Optional[Alphabet]):
        self.text = text
        self.pos = 0
        self.alphabet = alphabet

    def peek(self) -> Optional[str]:
        return self.text[self.pos] if self.pos < len(self.text) else None

    def error(self, msg: str, pos: Optional[int] = None):
        raise RegexSyntaxError(msg, self.pos if pos is None else pos)

    def check_symbol(self, c: str, pos: int) -> str:
        if self.alphabet is not None and c not in self.alphabet:
            raise AlphabetError(f"symbol {c!r} at position {pos} not in alphabet {str(self.alphabet)!r}")
        return c

    def parse(self) -> RegexAst:
        if not self.text:
            self.error("empty expression")
        node = self.alternation()
        if self.pos != len(self.text):
            self.error(f"unexpected {self.peek()!r}")
        return node

    def alternation(self) -> RegexAst:
        options = [self.concat()]
        while self.peek() == "|":
            self.pos += 1
            options.append(self.concat())
        return options[0] if len(options) == 1 else Alternation(tuple(options))

    def concat(self) -> RegexAst:
        items = []
        while self.peek() is not None and self.peek() not in "|)":
            items.append(self.postfix())
        if not items:
            return Epsilon()
        return items[0] if len(items) == 1 else Concat(tuple(items))

    def postfix(self) -> RegexAst:
        node = self.atom()
        while True:
            c = self.peek()
            if c == "*":
                node = Star(node)
            elif c == "+":
                node = Plus(node)
            elif c == "?":
                node = Optional_(node)
            elif c == "{":
                node = self.bounds(node)
                continue
            else:
                return node
            self.pos += 1

    def number(self) -> int:
        start = self.pos
        while self.peek() is not None and self.peek().isdigit():
            self.pos += 1
        if start == self.pos:
            self.error("expected a number")
        return int(self.text[start:self.pos])

    def bounds(self, node: RegexAst) -> RegexAst:
        start = self.pos
        self.pos += 1
        lo = self.number()
        hi: Optional[int] = lo
        if self.peek() == ",":
            self.pos += 1
            hi = None if self.peek() == "}" else self.number()
        if self.peek() != "}":
            self.error("expected '}'")
        self.pos += 1
        if hi is not None and hi < lo:
            self.error(f"bad repetition bounds {{{lo},{hi}}}", start)
        return Repeat(node, lo, hi)

    def escaped(self) -> str:
        # caller has consumed the backslash
        c = self.peek()
        if c is None:
            self.error("dangling escape")
        self.pos += 1
        return c

    def atom(self) -> RegexAst:
        c = self.peek()
        pos = self.pos
        if c == "(":
            self.pos += 1
            if self.peek() == ")":
                self.pos += 1
                return Epsilon()
            node = self.alternation()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return node
        if c == "[":
            return self.char_class()
        if c == "\\":
            self.pos += 1
            return Literal(self.check_symbol(self.escaped(), pos))
        if c in ("*", "+", "?", "{"):
            self.error(f"nothing to repeat before {c!r}")
        if c == ".":
            self.error("wildcards are not supported")
        if c in METACHARS:
            self.error(f"unexpected {c!r}")
        self.pos += 1
        return Literal(self.check_symbol(c, pos))

    def class_char(self) -> str:
        c = self.peek()
        if c is None:
            self.error("unterminated character class")
        if c == "\\":
            self.pos += 1
            return self.escaped()
        self.pos += 1
        return c

    def char_class(self) -> RegexAst:
        open_pos = self.pos
        self.pos += 1
        if self.peek() == "]":
            self.error("empty character class []", open_pos)
        if self.peek() == "^":
            self.error("negated classes are not supported")
        syms: set[str] = set()
        while self.peek() != "]":
            pos = self.pos
            lo = self.class_char()
            if self.peek() == "-" and self.pos + 1 < len(self.text) and self.text[self.pos + 1] != "]":
                self.pos += 1
                hi = self.class_char()
                if ord(hi) < ord(lo):
                    self.error(f"reversed range {lo}-{hi}", pos)
                for code in range(ord(lo), ord(hi) + 1):
                    syms.add(self.check_symbol(chr(code), pos))
            else:
                syms.add(self.check_symbol(lo, pos))
        self.pos += 1
        return CharClass(frozenset(syms))


def parse(text: str, alphabet: Optional[Alphabet] = None) -> RegexAst:
    """Parse ``text``; if ``alphabet`` is given every symbol must belong to it."""
    return _Parser(text, alphabet).parse()


# --- printer ---------------------------------------------------------------

def _esc(c: str) -> str:
    return "\\" + c if c in METACHARS else c


def render_class(syms: frozenset[str]) -> str:
    codes = sorted(ord(s) for s in syms)
    runs: list[list[int]] = []
    for code in codes:
        if runs and code == runs[-1][1] + 1:
            runs[-1][1] = code
        else:
            runs.append([code, code])
    parts = []
    for lo, hi in runs:
        if hi - lo >= 2:
            parts.append(f"{_esc(chr(lo))}-{_esc(chr(hi))}")
        else:
            parts.extend(_esc(chr(c)) for c in range(lo, hi + 1))
    return "[" + "".join(parts) + "]"


def _is_atomic(ast: RegexAst) -> bool:
    return isinstance(ast, (Literal, CharClass, Epsilon))


def render(ast: RegexAst) -> str:
    match ast:
        case Epsilon():
            return "()"
        case Literal(s):
            return _esc(s)
        case CharClass(syms):
            return render_class(syms)
        case Concat(items):
            return "".join(
                f"({render(i)})" if isinstance(i, (Alternation, Concat)) else render(i) for i in items
            )
        case Alternation(opts):
            return "|".join(
                f"({render(o)})" if isinstance(o, Alternation) else render(o) for o in opts
            )
        case Star(c) | Plus(c) | Optional_(c) | Repeat(c, _, _):
            inner = render(c) if _is_atomic(c) else f"({render(c)})"
            if isinstance(ast, Star):
                return inner + "*"
            if isinstance(ast, Plus):
                return inner + "+"
            if isinstance(ast, Optional_):
                return inner + "?"
            if ast.max == ast.min:
                return inner + f"{{{ast.min}}}"
            return inner + f"{{{ast.min},{'' if ast.max is None else ast.max}}}"
    raise TypeError(f"not a regex node: {ast!r}")


# --- random generation -----------------------------------------------------

@dataclass
class GeneratorConfig:
    alphabet: str = "abcd"
    max_depth: int = 4
    min_states: int = 3
    max_states: int = 14
    max_tries: int = 1000
    # operator weights; a zero weight disables the construct
    w_literal: float = 3.0
    w_class: float = 1.0
    w_concat: float = 4.0
    w_alternation: float = 1.0
    w_star: float = 1.0
    w_plus: float = 1.0
    w_optional: float = 1.0
    w_repeat: float = 1.0
    max_repeat: int = 3
    max_width: int = 3

    def leaf_weights(self) -> dict[str, float]:
        return {"literal": self.w_literal, "class": self.w_class}

    def op_weights(self) -> dict[str, float]:
        return {
            "concat": self.w_concat, "alternation": self.w_alternation, "star": self.w_star,
            "plus": self.w_plus, "optional": self.w_optional, "repeat": self.w_repeat,
        }


class GeneratorExhausted(RuntimeError):
    pass


def _choose(rng: np.random.Generator, weights: dict[str, float]) -> Optional[str]:
    names = [k for k, v in weights.items() if v > 0]
    if not names:
        return None
    w = np.array([weights[k] for k in names], dtype=float)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


def _random_leaf(cfg: GeneratorConfig, alphabet: Alphabet, rng: np.random.Generator) -> RegexAst:
    kind = _choose(rng, cfg.leaf_weights()) or "literal"
    if kind == "class" and len(alphabet) > 1:
        # contiguous run in alphabet order, so that classes print as ranges
        size = int(rng.integers(2, len(alphabet) + 1))
        start = int(rng.integers(0, len(alphabet) - size + 1))
        return CharClass(frozenset(alphabet.symbols[start:start + size]))
    return Literal(alphabet.symbols[int(rng.integers(len(alphabet)))])


def _random_tree(cfg: GeneratorConfig, alphabet: Alphabet, rng: np.random.Generator, depth: int) -> RegexAst:
    op = _choose(rng, cfg.op_weights()) if depth > 0 else None
    # leaves get roughly as likely as any operator once some depth is spent
    if op is None or (depth < cfg.max_depth and rng.random() < 0.3):
        return _random_leaf(cfg, alphabet, rng)
    sub = lambda: _random_tree(cfg, alphabet, rng, depth - 1)  # noqa: E731
    if op in ("concat", "alternation"):
        width = int(rng.integers(2, max(cfg.max_width, 2) + 1))
        kids = tuple(sub() for _ in range(width))
        return Concat(kids) if op == "concat" else Alternation(kids)
    if op == "star":
        return Star(sub())
    if op == "plus":
        return Plus(sub())
    if op == "optional":
        return Optional_(sub())
    lo = int(rng.integers(0, cfg.max_repeat + 1))
    hi: Optional[int] = None
    if rng.random() >= 0.3:
        hi = max(int(rng.integers(lo, cfg.max_repeat + 1)), 1)
    return Repeat(sub(), lo, hi)


def random_regex(config: GeneratorConfig, rng: np.random.Generator) -> RegexAst:
    """Rejection-sample an expression whose minimal complete DFA has a state count
    inside ``[config.min_states, config.max_states]``."""
    from .automata import compile_regex, minimize

    alphabet = Alphabet.from_string(config.alphabet)
    for _ in range(config.max_tries):
        ast = _random_tree(config, alphabet, rng, config.max_depth)
        m = minimize(compile_regex(ast, alphabet)).n_states
        if config.min_states <= m <= config.max_states:
            return ast
    raise GeneratorExhausted(
        f"no expression with {config.min_states}..{config.max_states} states after {config.max_tries} tries"
    )
