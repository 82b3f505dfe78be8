"""Event Calculus with delayed effects: parsing, translation to temporal
Datalog and a direct reference evaluator.

Concrete syntax::

    fluent safety(1) values {verified, unverified, trusted}.
    initiatedAt(safety(X)=verified, T) :- happensAt(repair(X), T).
    holdsAt(threat(X,Y)=true, T) :- holdsAt(safety(X)=trusted, T), not holdsAt(ok(Y)=true, T).
    fi(safety(X)=verified, safety(X)=trusted, 3).
    p(safety(X)=verified).

A fluent is simple unless it is defined by ``holdsAt`` rules; the kind may
also be given explicitly with a ``simple``/``static`` prefix.
"""
from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from .core import Program, add_domain_guards, dependency_graph, stratify_graph, validate
from .errors import (MultipleTimeVariables, NameCollision, NotGloballyStratified, SchemaViolation,
                     UnknownFluentValue)
from .syntax import TokenParser
from .terms import Const, Literal, Rule, Term, TimeTerm, Var

log = logging.getLogger(__name__)

SIMPLE, STATIC = "simple", "static"
HAPPENS, HOLDS, INIT, TERM = "happensAt", "holdsAt", "initiatedAt", "terminatedAt"


@dataclass(frozen=True)
class FluentDecl:
    name: str
    arity: int
    values: tuple[str, ...]
    kind: str | None = None  # None until inferred


@dataclass(frozen=True)
class FluentValue:
    """``f(args)=value``."""

    fluent: str
    args: tuple[Term, ...]
    value: str

    def __str__(self) -> str:
        inner = f"({','.join(map(str, self.args))})" if self.args else ""
        return f"{self.fluent}{inner}={self.value}"


@dataclass(frozen=True)
class EcLiteral:
    kind: str  # happensAt or holdsAt
    name: str  # event type or fluent
    args: tuple[Term, ...]
    value: str | None = None
    negated: bool = False

    def __str__(self) -> str:
        neg = "not " if self.negated else ""
        inner = f"({','.join(map(str, self.args))})" if self.args else ""
        if self.kind == HAPPENS:
            return f"{neg}happensAt({self.name}{inner}, T)"
        return f"{neg}holdsAt({self.name}{inner}={self.value}, T)"


@dataclass(frozen=True)
class EcRule:
    kind: str  # initiatedAt, terminatedAt or holdsAt
    head: FluentValue
    body: tuple[EcLiteral, ...]
    line: int | None = None

    def __str__(self) -> str:
        return f"{self.kind}({self.head}, T) :- {', '.join(map(str, self.body))}."


@dataclass(frozen=True)
class DelayedEffect:
    source: FluentValue
    target: FluentValue
    delay: int
    postponable: bool = False


@dataclass(frozen=True)
class EcProgram:
    fluents: dict[str, FluentDecl]
    rules: tuple[EcRule, ...]
    effects: tuple[DelayedEffect, ...]
    events: dict[str, int]

    def __iter__(self):
        return iter((self.fluents, self.rules, self.effects))


def _rule_error(cls, msg, line):
    e = cls(f"line {line}: {msg}" if line else msg)
    return e


class EcParser(TokenParser):
    def program(self) -> EcProgram:
        fluents: dict[str, FluentDecl] = {}
        rules: list[EcRule] = []
        raw_effects: list[tuple[FluentValue, FluentValue, int, int]] = []
        postponable: set[tuple[str, str]] = set()
        events: dict[str, int] = {}
        while not self.at("eof"):
            t = self.tok
            if t.kind == "lname" and t.text in ("fluent", "simple", "static"):
                d = self.declaration()
                if d.name in fluents:
                    self.error(f"fluent {d.name} declared twice", t)
                fluents[d.name] = d
            elif t.kind == "lname" and t.text == "event":
                self.i += 1
                name = self.expect("lname").text
                arity = 0
                if self.accept("("):
                    arity = self.int_literal()
                    self.expect(")")
                self.expect(".")
                events[name] = arity
            elif t.kind == "lname" and t.text == "fi" and self.peek().kind == "(":
                self.i += 1
                self.expect("(")
                src = self.fluent_value()
                self.expect(",")
                dst = self.fluent_value()
                self.expect(",")
                d = self.int_literal()
                self.expect(")")
                self.expect(".")
                raw_effects.append((src, dst, d, t.line))
            elif t.kind == "lname" and t.text == "p" and self.peek().kind == "(":
                self.i += 1
                self.expect("(")
                fv = self.fluent_value()
                self.expect(")")
                self.expect(".")
                postponable.add((fv.fluent, fv.value))
            else:
                rules.append(self.rule())
        effects = []
        for src, dst, d, line in raw_effects:
            if src.fluent != dst.fluent or src.args != dst.args:
                raise _rule_error(SchemaViolation, "a delayed effect must relate values of one fluent", line)
            if d < 1:
                raise _rule_error(SchemaViolation, f"delay must be at least 1, got {d}", line)
            effects.append(DelayedEffect(src, dst, d, (src.fluent, src.value) in postponable))
        return check_program(fluents, rules, effects, events)

    def declaration(self) -> FluentDecl:
        kind = None
        if self.at("lname", "simple") or self.at("lname", "static"):
            kind = self.tok.text
            self.i += 1
        self.expect("lname", "fluent")
        name = self.expect("lname")
        if "__" in name.text:
            raise NameCollision(f"line {name.line}: fluent {name.text} uses the reserved '__' infix")
        arity = 0
        if self.accept("("):
            arity = self.int_literal()
            self.expect(")")
        self.expect("lname", "values")
        self.expect("{")
        values = [self.value()]
        while self.accept(","):
            values.append(self.value())
        self.expect("}")
        self.expect(".")
        if len(set(values)) != len(values):
            self.error(f"duplicate value in the declaration of {name.text}", name)
        return FluentDecl(name.text, arity, tuple(values), kind)

    def value(self) -> str:
        t = self.tok
        if t.kind in ("lname", "int"):
            self.i += 1
            return t.text
        self.error("fluent values must be constants")

    def args(self) -> tuple[Term, ...]:
        out: list[Term] = []
        if self.accept("("):
            out.append(self.object_term())
            while self.accept(","):
                out.append(self.object_term())
            self.expect(")")
        return tuple(out)

    def fluent_value(self) -> FluentValue:
        name = self.expect("lname")
        args = self.args()
        self.expect("=")
        return FluentValue(name.text, args, self.value())

    def _time(self) -> str:
        t = self.expect("uname")
        if self.at("+") or self.at("-"):
            self.error("EC rules may not shift time; all conditions refer to T")
        return t.text

    def rule(self) -> EcRule:
        start = self.tok
        kind = self.expect("lname").text
        if kind not in (INIT, TERM, HOLDS):
            self.error(f"rule heads are initiatedAt, terminatedAt or holdsAt, not {kind!r}", start)
        self.expect("(")
        head = self.fluent_value()
        self.expect(",")
        times = [self._time()]
        self.expect(")")
        if self.at("."):
            self.error("rules need a body", start)
        self.expect("implies")
        body = []
        while True:
            neg = bool(self.accept("lname", "not") or self.accept("neg"))
            t = self.expect("lname")
            self.expect("(")
            if t.text == HAPPENS:
                ev = self.expect("lname")
                lit = EcLiteral(HAPPENS, ev.text, self.args(), None, neg)
            elif t.text == HOLDS:
                fv = self.fluent_value()
                lit = EcLiteral(HOLDS, fv.fluent, fv.args, fv.value, neg)
            else:
                self.error(f"body conditions are happensAt or holdsAt, not {t.text!r}", t)
            self.expect(",")
            times.append(self._time())
            self.expect(")")
            body.append(lit)
            if not self.accept(","):
                break
        self.expect(".")
        rule = EcRule(kind, head, tuple(body), start.line)
        if len(set(times)) > 1:
            raise MultipleTimeVariables(rule, list(dict.fromkeys(times)))
        return rule


def check_program(fluents: dict[str, FluentDecl], rules: list[EcRule], effects: list[DelayedEffect],
                  events: dict[str, int] | None = None) -> EcProgram:
    """Check schemata, declarations and arities; infer fluent kinds."""
    events = dict(events or {})
    defined: dict[str, set[str]] = defaultdict(set)

    def fluent(name, args, value, line):
        d = fluents.get(name)
        if d is None:
            raise _rule_error(SchemaViolation, f"fluent {name} is not declared", line)
        if len(args) != d.arity:
            raise _rule_error(SchemaViolation, f"fluent {name} has arity {d.arity}, used with {len(args)}", line)
        if value not in d.values:
            raise _rule_error(UnknownFluentValue, f"{value} is not a declared value of {name}", line)

    for r in rules:
        fluent(r.head.fluent, r.head.args, r.head.value, r.line)
        defined[r.head.fluent].add(r.kind)
        if r.kind == HOLDS:
            if any(b.kind == HAPPENS for b in r.body):
                raise SchemaViolation(f"holdsAt rules may only test holdsAt conditions: {r}", r)
        elif r.body[0].kind != HAPPENS or r.body[0].negated:
            raise SchemaViolation(f"{r.kind} rules must start with a positive happensAt condition: {r}", r)
        for b in r.body:
            if b.kind == HOLDS:
                fluent(b.name, b.args, b.value, r.line)
            else:
                if "__" in b.name:
                    raise NameCollision(f"line {r.line}: event {b.name} uses the reserved '__' infix")
                if events.setdefault(b.name, len(b.args)) != len(b.args):
                    raise SchemaViolation(f"event {b.name} used with arities {events[b.name]} and {len(b.args)}", r)
    out: dict[str, FluentDecl] = {}
    for name, d in fluents.items():
        kinds = defined.get(name, set())
        inferred = STATIC if HOLDS in kinds else SIMPLE
        if HOLDS in kinds and kinds - {HOLDS}:
            raise SchemaViolation(f"fluent {name} mixes holdsAt rules with initiatedAt/terminatedAt rules")
        if d.kind is not None and d.kind != inferred and kinds:
            raise SchemaViolation(f"fluent {name} is declared {d.kind} but defined as {inferred}")
        out[name] = FluentDecl(d.name, d.arity, d.values, d.kind or inferred)
    for e in effects:
        for fv in (e.source, e.target):
            fluent(fv.fluent, fv.args, fv.value, None)
        if out[e.source.fluent].kind != SIMPLE:
            raise SchemaViolation(f"delayed effects apply to simple fluents only, not {e.source.fluent}")
    taken = {n for d in out.values() for n in holds_names(d)}
    for ev in events:
        if ev in taken:
            raise NameCollision(f"event {ev} collides with a generated fluent predicate")
    return EcProgram(out, tuple(rules), tuple(effects), events)


def parse_ec(text: str) -> EcProgram:
    """Parse and check an EC program; unpacks as ``(fluents, rules, effects)``."""
    return EcParser(text).program()


# -- translation --------------------------------------------------------------

def h_name(f: str) -> str:
    return f"{f}_h"


def i_name(f: str) -> str:
    return f"{f}_i"


def t_name(f: str) -> str:
    return f"{f}_t"


def holds_names(d: FluentDecl) -> list[str]:
    return [h_name(d.name)] + ([i_name(d.name), t_name(d.name)] if d.kind == SIMPLE else [])


def _xs(n: int) -> tuple[Var, ...]:
    return (Var("X"),) if n == 1 else tuple(Var(f"X{i + 1}") for i in range(n))


def _fluent_lit(name: str, args, value: str, offset: int = 0, negated: bool = False) -> Literal:
    return Literal(name, (*args, Const(value)), TimeTerm("T", -offset), negated)


def _map(b: EcLiteral) -> Literal:
    if b.kind == HAPPENS:
        return Literal(b.name, b.args, TimeTerm("T", 0), b.negated)
    return _fluent_lit(h_name(b.name), b.args, b.value, 0, b.negated)


def ec_to_td(program: EcProgram) -> Program:
    fluents, rules, effects = program.fluents, program.rules, program.effects
    out: list[Rule] = []
    head_name = {INIT: i_name, TERM: t_name, HOLDS: h_name}
    for r in rules:
        head = _fluent_lit(head_name[r.kind](r.head.fluent), r.head.args, r.head.value)
        out.append(Rule(head, tuple(_map(b) for b in r.body), line=r.line))
    for d in fluents.values():
        if d.kind != SIMPLE:
            continue
        xs = _xs(d.arity)
        h, i, t = h_name(d.name), i_name(d.name), t_name(d.name)
        for v in d.values:
            out.append(Rule(_fluent_lit(h, xs, v), (_fluent_lit(i, xs, v, 1),)))
            out.append(Rule(_fluent_lit(h, xs, v), (_fluent_lit(h, xs, v, 1), _fluent_lit(t, xs, v, 1, True))))
            for w in d.values:
                if w != v:
                    out.append(Rule(_fluent_lit(t, xs, v), (_fluent_lit(i, xs, w),)))
    for e in effects:
        f, args, d = e.source.fluent, e.source.args, e.delay
        body = [_fluent_lit(i_name(f), args, e.source.value, d)]
        body += [_fluent_lit(t_name(f), args, e.source.value, j, True) for j in range(d - 1, 0, -1)]
        if e.postponable:
            body += [_fluent_lit(i_name(f), args, e.source.value, j, True) for j in range(d - 1, 0, -1)]
        out.append(Rule(_fluent_lit(i_name(f), args, e.target.value), tuple(body)))
    heads = {r.head.pred for r in out}
    arity = {l.pred: len(l.args) for r in out for l in (r.head, *r.body)}
    preds = list(dict.fromkeys(l.pred for r in out for l in (r.head, *r.body)))
    stratify_graph(dependency_graph(out, preds), error=NotGloballyStratified)
    out = add_domain_guards(out, [p for p in preds if p not in heads], arity)
    outputs = {h_name(f) for f in fluents}
    return validate(out, output_predicates=outputs, source_rules=out)


def collisions(program: EcProgram, facts: Iterable[tuple[str, tuple[str, ...]]]) -> list[str]:
    """Simultaneous initiations of different values of one fluent instance."""
    by_init = {i_name(d.name): d.name for d in program.fluents.values() if d.kind == SIMPLE}
    seen: dict[tuple[str, tuple[str, ...]], set[str]] = defaultdict(set)
    for pred, row in facts:
        if pred in by_init:
            seen[by_init[pred], row[:-1]].add(row[-1])
    return [f"{f}({','.join(x)}) initiated with values {', '.join(sorted(vs))} at once"
            for (f, x), vs in sorted(seen.items()) if len(vs) > 1]


# -- direct evaluation ----------------------------------------------------------

Holds = tuple[str, tuple[str, ...], str]


def _unify_args(args, row, sub):
    out = dict(sub)
    for a, c in zip(args, row):
        if isinstance(a, Const):
            if a.name != c:
                return None
        elif out.setdefault(a.name, c) != c:
            return None
    return out


def _ground(args, sub):
    return tuple(a.name if isinstance(a, Const) else sub[a.name] for a in args)


def input_predicates(program: EcProgram) -> set[str]:
    """Names whose stream facts contribute constants to the domain: events
    and fluent predicates that no rule defines."""
    defined = {h_name(d.name) for d in program.fluents.values() if d.kind == SIMPLE}
    for r in program.rules:
        defined.add({INIT: i_name, TERM: t_name, HOLDS: h_name}[r.kind](r.head.fluent))
    for e in program.effects:
        defined.add(i_name(e.target.fluent))
    for d in program.fluents.values():
        if d.kind == SIMPLE and len(d.values) > 1:
            defined.add(t_name(d.name))
    names = set(program.events)
    for d in program.fluents.values():
        names |= set(holds_names(d)) - defined
    return names


class _DirectModel:
    """Time-by-time evaluation of the EC axioms over explicit holds/initiated/
    terminated sets, without going through the translation."""

    def __init__(self, program: EcProgram, stream):
        self.p = program
        self.fl = program.fluents
        self.events: dict[int, set] = defaultdict(set)
        self.given: dict[tuple[str, int], set] = defaultdict(set)
        names = {}
        for d in self.fl.values():
            names[h_name(d.name)] = (HOLDS, d.name)
            if d.kind == SIMPLE:
                names[i_name(d.name)] = (INIT, d.name)
                names[t_name(d.name)] = (TERM, d.name)
        inputs = input_predicates(program)
        self.first_seen: dict[str, int] = {}
        for f in stream:
            pred, args, t = (f.pred, f.args, f.time) if hasattr(f, "pred") else f
            args = tuple(args)
            if pred in names:
                kind, fl = names[pred]
                self.given[kind, t].add((fl, args[:-1], args[-1]))
            else:
                self.events[t].add((pred, args))
            if pred in inputs:
                for c in args:
                    self.first_seen[c] = min(t, self.first_seen.get(c, t))
        self.H: dict[int, set[Holds]] = defaultdict(set)
        self.I: dict[int, set[Holds]] = defaultdict(set)
        self.Tm: dict[int, set[Holds]] = defaultdict(set)
        static = [d.name for d in self.fl.values() if d.kind == STATIC]
        g = nx.MultiDiGraph()
        g.add_nodes_from(static)
        for r in program.rules:
            if r.kind == HOLDS:
                for b in r.body:
                    if b.name in g:
                        g.add_edge(b.name, r.head.fluent, negative=b.negated)
        strat = stratify_graph(g, error=NotGloballyStratified)
        self.static_layers = [[r for r in program.rules if r.kind == HOLDS and r.head.fluent in layer]
                              for layer in strat.strata]

    def _holds(self, b: EcLiteral, sub, t) -> bool:
        if b.kind == HAPPENS:
            return (b.name, _ground(b.args, sub)) in self.events[t]
        return (b.name, _ground(b.args, sub), b.value) in self.H[t]

    def _matches(self, b: EcLiteral, sub, t):
        if b.kind == HAPPENS:
            for name, row in self.events[t]:
                if name == b.name and len(row) == len(b.args):
                    s = _unify_args(b.args, row, sub)
                    if s is not None:
                        yield s
        else:
            for name, row, v in self.H[t]:
                if name == b.name and v == b.value:
                    s = _unify_args(b.args, row, sub)
                    if s is not None:
                        yield s

    def _fire(self, r: EcRule, t: int):
        subs = [{}]
        for b in r.body:
            if not b.negated:
                subs = [s2 for s in subs for s2 in self._matches(b, s, t)]
        domain = sorted(c for c, t0 in self.first_seen.items() if t0 <= t)
        free = list(dict.fromkeys(a.name for x in (r.head, *[b for b in r.body if b.negated])
                                  for a in x.args if isinstance(a, Var)))
        for s in subs:
            missing = [v for v in free if v not in s]
            for vals in itertools.product(domain, repeat=len(missing)):
                full = {**s, **dict(zip(missing, vals))}
                if not any(self._holds(b, full, t) for b in r.body if b.negated):
                    yield (r.head.fluent, _ground(r.head.args, full), r.head.value)

    def step(self, t: int) -> None:
        H = self.H[t]
        for f, x, v in self.I[t - 1]:
            H.add((f, x, v))
        for f, x, v in self.H[t - 1]:
            if self.fl[f].kind == SIMPLE and (f, x, v) not in self.Tm[t - 1]:
                H.add((f, x, v))
        H |= self.given[HOLDS, t]
        for layer in self.static_layers:
            changed = True
            while changed:
                changed = False
                for r in layer:
                    for fact in list(self._fire(r, t)):
                        if fact not in H:
                            H.add(fact)
                            changed = True
        I = self.I[t]
        I |= self.given[INIT, t]
        for r in self.p.rules:
            if r.kind == INIT:
                I.update(self._fire(r, t))
        for e in self.p.effects:
            s = t - e.delay
            if s < 1:
                continue
            between = range(s + 1, t)
            for f, x, v in self.I[s]:
                if f != e.source.fluent or v != e.source.value:
                    continue
                sub = _unify_args(e.source.args, x, {})
                if sub is None:
                    continue
                if any((f, x, v) in self.Tm[u] for u in between):
                    continue  # cancelled by termIn
                if e.postponable and any((f, x, v) in self.I[u] for u in between):
                    continue  # cancelled by initIn
                I.add((f, _ground(e.target.args, sub), e.target.value))
        Tm = self.Tm[t]
        Tm |= self.given[TERM, t]
        for r in self.p.rules:
            if r.kind == TERM:
                Tm.update(self._fire(r, t))
        for f, x, v in I:
            for w in self.fl[f].values:
                if w != v:
                    Tm.add((f, x, w))


def ec_direct_model(program: EcProgram, stream, horizon: int) -> dict[int, set[Holds]]:
    """``holdsAt`` facts ``(fluent, args, value)`` at each time 1..horizon."""
    m = _DirectModel(program, stream)
    for t in range(1, horizon + 1):
        m.step(t)
    return {t: set(m.H[t]) for t in range(1, horizon + 1)}


def ec_direct_eval(program: EcProgram, stream, t: int) -> set[Holds]:
    return ec_direct_model(program, stream, t)[t]
