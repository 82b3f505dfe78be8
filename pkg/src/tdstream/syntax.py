"""Tokenizer shared by the three rule dialects, the ``.tdl`` parser and the
stream line format."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError, StreamFormatError
from .terms import Const, Literal, Rule, Term, TimeTerm, Var

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<implies>:-|←|<-)
  | (?P<lname>[a-z][A-Za-z0-9_]*)
  | (?P<uname>[A-Z][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<neg>¬)
  | (?P<punct>[(),.=\[\]{}+\-@])
""", re.VERBOSE)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "punct":
                kind = m.group()
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenParser:
    """Recursive-descent helper over a token list."""

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, n: int = 1) -> Token:
        return self.tokens[min(self.i + n, len(self.tokens) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.accept(kind, text)
        if t is None:
            want = text or kind
            got = self.tok.text or self.tok.kind
            self.error(f"expected {want!r}, found {got!r}")
        return t

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def int_literal(self) -> int:
        return int(self.expect("int").text)

    def object_term(self) -> Term:
        t = self.tok
        if t.kind == "uname":
            self.i += 1
            return Var(t.text)
        if t.kind in ("lname", "int"):
            self.i += 1
            return Const(t.text)
        self.error(f"expected a term, found {t.text or t.kind!r}")


class TdlParser(TokenParser):
    """``head(X, T) :- b(X, T-1), not c(X, T).`` one rule per clause."""

    def rules(self) -> list[Rule]:
        out = []
        while not self.at("eof"):
            out.append(self.rule())
        return out

    def rule(self) -> Rule:
        start = self.tok
        head = self.literal()
        if self.at("."):
            self.error("rules need a body; ground facts belong in the stream", start)
        self.expect("implies")
        body = [self.body_literal()]
        while self.accept(","):
            body.append(self.body_literal())
        self.expect(".")
        return Rule(head, tuple(body), line=start.line)

    def body_literal(self) -> Literal:
        negated = bool(self.accept("lname", "not") or self.accept("neg"))
        lit = self.literal()
        return Literal(lit.pred, lit.args, lit.time, negated)

    def literal(self) -> Literal:
        name = self.expect("lname")
        if name.text == "not":
            self.error("'not' is only allowed in rule bodies", name)
        self.expect("(")
        items: list[Term | TimeTerm] = [self.arg()]
        while self.accept(","):
            items.append(self.arg())
        self.expect(")")
        time = items[-1]
        if not isinstance(time, TimeTerm):
            self.error(f"last argument of {name.text} must be a time term", name)
        args = items[:-1]
        for a in args:
            if isinstance(a, TimeTerm):
                self.error(f"time arithmetic outside the time argument of {name.text}", name)
        return Literal(name.text, tuple(args), time)

    def arg(self) -> Term | TimeTerm:
        t = self.tok
        if t.kind == "uname" and self.peek().kind in ("+", "-"):
            self.i += 1
            sign = 1 if self.tok.kind == "+" else -1
            self.i += 1
            return TimeTerm(t.text, sign * self.int_literal())
        if t.kind == "uname" and self.peek().kind == ")":
            self.i += 1
            return TimeTerm(t.text, 0)
        return self.object_term()


def parse_tdl(text: str) -> list[Rule]:
    return TdlParser(text).rules()


# -- streams -----------------------------------------------------------------

_FACT_RE = re.compile(r"^\s*(?:([a-z][A-Za-z0-9_]*)\s*(?:\(([^()]*)\))?)?\s*@\s*([0-9]+)\s*$")
_CONST_RE = re.compile(r"^(?:[a-z][A-Za-z0-9_]*|[0-9]+)$")


@dataclass(frozen=True, slots=True, order=True)
class Fact:
    time: int
    pred: str
    args: tuple[str, ...]


def parse_stream_line(line: str, lineno: int = 0) -> Fact | int | None:
    """Returns a Fact, a bare time tick (int) or None for blank/comment lines."""
    body = line.split("%", 1)[0].strip()
    if not body:
        return None
    m = _FACT_RE.match(body)
    if m is None:
        raise StreamFormatError(f"line {lineno}: malformed stream line {line.strip()!r}")
    pred, argtext, t = m.groups()
    time = int(t)
    if time < 1:
        raise StreamFormatError(f"line {lineno}: time-points start at 1")
    if pred is None:
        return time
    args: tuple[str, ...] = ()
    if argtext is not None and argtext.strip():
        args = tuple(a.strip() for a in argtext.split(","))
        for a in args:
            if not _CONST_RE.match(a):
                raise StreamFormatError(f"line {lineno}: {a!r} is not a constant")
    return Fact(time, pred, args)


def read_stream(lines) -> list[Fact | int]:
    """Parse stream lines, checking that time never decreases."""
    out: list[Fact | int] = []
    last = 0
    for n, line in enumerate(lines, 1):
        item = parse_stream_line(line, n)
        if item is None:
            continue
        t = item if isinstance(item, int) else item.time
        if t < last:
            raise StreamFormatError(f"line {n}: time {t} after {last}; the stream must be ordered")
        last = t
        out.append(item)
    return out
