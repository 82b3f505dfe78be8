"""AST for temporal Datalog rules with a single time variable."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Var, Const]


@dataclass(frozen=True, slots=True)
class TimeTerm:
    """``var + shift``; body literals are normalised to ``T - offset``."""

    var: str = "T"
    shift: int = 0

    def __str__(self) -> str:
        if self.shift == 0:
            return self.var
        sign = "+" if self.shift > 0 else "-"
        return f"{self.var}{sign}{abs(self.shift)}"


@dataclass(frozen=True, slots=True)
class Literal:
    pred: str
    args: tuple[Term, ...]
    time: TimeTerm = TimeTerm()
    negated: bool = False

    @property
    def offset(self) -> int:
        return -self.time.shift

    def variables(self) -> Iterator[str]:
        for a in self.args:
            if isinstance(a, Var):
                yield a.name

    def atom_str(self) -> str:
        return f"{self.pred}({','.join([*map(str, self.args), str(self.time)])})"

    def __str__(self) -> str:
        return ("not " if self.negated else "") + self.atom_str()


@dataclass(frozen=True, slots=True)
class Rule:
    head: Literal
    body: tuple[Literal, ...]
    line: int | None = field(default=None, compare=False)

    @property
    def positives(self) -> tuple[Literal, ...]:
        return tuple(b for b in self.body if not b.negated)

    @property
    def negatives(self) -> tuple[Literal, ...]:
        return tuple(b for b in self.body if b.negated)

    def time_variables(self) -> list[str]:
        seen: list[str] = []
        for lit in (self.head, *self.body):
            if lit.time.var not in seen:
                seen.append(lit.time.var)
        return seen

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head.atom_str()}."
        return f"{self.head.atom_str()} :- {', '.join(map(str, self.body))}."


def lit(pred: str, args, offset: int = 0, negated: bool = False) -> Literal:
    """Build a literal from plain strings; uppercase names become variables."""
    terms = tuple(a if isinstance(a, (Var, Const)) else
                  (Var(a) if a[:1].isupper() else Const(a)) for a in args)
    return Literal(pred, terms, TimeTerm("T", -offset), negated)


def format_fact(pred: str, args: tuple[str, ...], time: int | None = None) -> str:
    s = f"{pred}({','.join(args)})" if args else pred
    return s if time is None else f"{s}@{time}"
