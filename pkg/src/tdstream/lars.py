"""Plain LARS: parsing, global stratification, translation to temporal
Datalog and a direct reference evaluator.

Concrete syntax::

    verified(X) :- diamond[2] repair(X).          % also: win[2] diamond repair(X)
    trusted(X) :- box[6] verified(X).
    unverified(X) :- box[2] not repair(X).        % negated extended atom
    threat(X,Y) :- box[2] trusted(X), win[2] at[U] unverified(Y),
                   win[2] at[U] connected(X,Y).

Negation may be written before the operator or before the atom; both negate
the whole extended atom.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from .core import DOMAIN_PRED, Program, Stratification, add_domain_guards, stratify_graph, validate
from .errors import (HeadAtOperator, NameCollision, NonTimeWindow, NotGloballyStratified,
                     ParseError, UnboundTimeVariable)
from .syntax import TokenParser
from .terms import Const, Literal, Rule, Term, TimeTerm, Var

PLAIN, AT, WIN_AT, DIAMOND, BOX = "plain", "at", "win_at", "diamond", "box"
_KEYWORDS = {"not", "win", "at", "diamond", "box"}
_COUNT_WINDOWS = {"tuple", "count", "tuples", "partition", "filter"}


@dataclass(frozen=True)
class ExtendedAtom:
    pred: str
    args: tuple[Term, ...] = ()
    form: str = PLAIN
    window: int | None = None
    tvar: str | None = None
    negated: bool = False

    def atom_str(self) -> str:
        return f"{self.pred}({','.join(map(str, self.args))})" if self.args else self.pred

    def __str__(self) -> str:
        neg = "not " if self.negated else ""
        op = {PLAIN: "", AT: f"at[{self.tvar}] ", WIN_AT: f"win[{self.window}] at[{self.tvar}] ",
              DIAMOND: f"diamond[{self.window}] ", BOX: f"box[{self.window}] "}[self.form]
        return f"{neg}{op}{self.atom_str()}"


@dataclass(frozen=True)
class LarsRule:
    head: ExtendedAtom
    body: tuple[ExtendedAtom, ...]
    line: int | None = None

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(map(str, self.body))}."


class LarsParser(TokenParser):
    def rules(self) -> list[LarsRule]:
        out = []
        while not self.at("eof"):
            out.append(self.rule())
        return out

    def rule(self) -> LarsRule:
        start = self.tok
        if start.kind == "lname" and start.text in ("at", "win") and self.peek().kind == "[":
            raise HeadAtOperator(f"line {start.line}: @ and window operators are not allowed in rule heads")
        if start.kind in ("neg",) or (start.kind == "lname" and start.text == "not"):
            self.error("negation is not allowed in rule heads")
        head = ExtendedAtom(*self.atom())
        if self.at("."):
            self.error("rules need a body; ground facts belong in the stream", start)
        self.expect("implies")
        body = [self.extended()]
        while self.accept(","):
            body.append(self.extended())
        self.expect(".")
        rule = LarsRule(head, tuple(body), start.line)
        _check_time_bindings(rule)
        return rule

    def _negation(self) -> bool:
        return bool(self.accept("lname", "not") or self.accept("neg"))

    def _bracket_int(self, what: str) -> int:
        self.expect("[")
        tok = self.tok
        if not self.at("int"):
            raise NonTimeWindow(f"line {tok.line}: {what} needs a time-point count, found {tok.text!r}")
        d = self.int_literal()
        if not self.at("]"):
            raise NonTimeWindow(f"line {tok.line}: only time windows are supported")
        self.expect("]")
        if d < 1:
            raise ParseError(f"window length must be positive, got {d}", tok.line, tok.col)
        return d

    def extended(self) -> ExtendedAtom:
        neg = self._negation()
        t = self.tok
        form, window, tvar = PLAIN, None, None
        if t.kind == "lname" and self.peek().kind == "[":
            if t.text in _COUNT_WINDOWS:
                raise NonTimeWindow(f"line {t.line}: {t.text} windows are not time windows")
            self.i += 1
            if t.text == "win":
                window = self._bracket_int("win")
                op = self.expect("lname")
                if op.text == "at":
                    form = WIN_AT
                    tvar = self._bracket_var()
                elif op.text in (DIAMOND, BOX):
                    form = op.text
                else:
                    self.error("expected at[..], diamond or box after a window", op)
            elif t.text in (DIAMOND, BOX):
                form = t.text
                window = self._bracket_int(t.text)
            elif t.text == "at":
                form = AT
                tvar = self._bracket_var()
            else:
                self.error(f"unknown operator {t.text!r}", t)
        inner = self._negation()
        if neg and inner:
            self.error("double negation", t)
        pred, args = self.atom()
        return ExtendedAtom(pred, args, form, window, tvar, neg or inner)

    def _bracket_var(self) -> str:
        self.expect("[")
        v = self.expect("uname").text
        self.expect("]")
        return v

    def atom(self) -> tuple[str, tuple[Term, ...]]:
        name = self.expect("lname")
        if name.text in _KEYWORDS:
            self.error(f"{name.text!r} is a reserved word", name)
        if "__" in name.text:
            raise NameCollision(f"line {name.line}: predicate {name.text} uses the reserved '__' infix")
        args: list[Term] = []
        if self.accept("("):
            if not self.at(")"):
                args.append(self.object_term())
                while self.accept(","):
                    args.append(self.object_term())
            self.expect(")")
        return name.text, tuple(args)


def _check_time_bindings(rule: LarsRule) -> None:
    bound: set[str] = set()
    for b in rule.body:
        if b.tvar is None:
            continue
        if b.form == WIN_AT and not b.negated:
            bound.add(b.tvar)
        elif b.tvar not in bound:
            raise UnboundTimeVariable(rule, b.tvar)


def parse_lars(text: str) -> list[LarsRule]:
    return LarsParser(text).rules()


def _predicates(rules: Iterable[LarsRule]) -> list[str]:
    return list(dict.fromkeys(a.pred for r in rules for a in (r.head, *r.body)))


def check_global_stratification(rules: Iterable[LarsRule]) -> Stratification:
    """Global stratification of the LARS predicates; raises NotGloballyStratified."""
    import networkx as nx

    rules = list(rules)
    g = nx.MultiDiGraph()
    g.add_nodes_from(_predicates(rules))
    for r in rules:
        for b in r.body:
            g.add_edge(b.pred, r.head.pred, negative=b.negated)
    return stratify_graph(g, error=NotGloballyStratified, latest=True)


# -- translation --------------------------------------------------------------

def var_tuple(n: int) -> tuple[Var, ...]:
    return (Var("X"),) if n == 1 else tuple(Var(f"X{i + 1}") for i in range(n))


def diamond_name(pred: str, d: int) -> str:
    return f"{pred}__diamond_{d}"


def box_name(pred: str, d: int) -> str:
    return f"{pred}__box_{d}"


def time_bindings(rule: LarsRule) -> dict[str, int]:
    """Window of the first positive windowed @ binding each time variable."""
    out: dict[str, int] = {}
    for b in rule.body:
        if b.form == WIN_AT and not b.negated and b.tvar not in out:
            out[b.tvar] = b.window
    return out


def expand_rule(rule: LarsRule) -> tuple[list[tuple[dict[str, int], Rule | None]], dict]:
    """All instances of ``rule``, one per assignment ``T' -> T - i``.

    Instances whose windowed @ condition falls outside its window come back
    as ``None``. Also returns the auxiliary window definitions it needs,
    keyed by ``(form, pred, d, arity)``.
    """
    binds = time_bindings(rule)
    names = list(binds)
    aux: dict[tuple, None] = {}
    out: list[tuple[dict[str, int], Rule | None]] = []
    for combo in itertools.product(*(range(binds[v] + 1) for v in names)):
        mu = dict(zip(names, combo))
        body: list[Literal] = []
        dropped = False
        for b in rule.body:
            if b.form == PLAIN:
                body.append(Literal(b.pred, b.args, TimeTerm("T", 0), b.negated))
            elif b.form == AT:
                body.append(Literal(b.pred, b.args, TimeTerm("T", -mu[b.tvar]), b.negated))
            elif b.form == WIN_AT:
                if mu[b.tvar] <= b.window:
                    body.append(Literal(b.pred, b.args, TimeTerm("T", -mu[b.tvar]), b.negated))
                elif not b.negated:
                    dropped = True
                    break
                # a negated condition that can never hold is simply true
            else:
                name = (diamond_name if b.form == DIAMOND else box_name)(b.pred, b.window)
                aux[(b.form, b.pred, b.window, len(b.args))] = None
                body.append(Literal(name, b.args, TimeTerm("T", 0), b.negated))
        if dropped:
            out.append((mu, None))
        else:
            head = Literal(rule.head.pred, rule.head.args, TimeTerm("T", 0))
            out.append((mu, Rule(head, tuple(body), line=rule.line)))
    return out, aux


def aux_rules(form: str, pred: str, d: int, arity: int) -> list[Rule]:
    xs = var_tuple(arity)
    if form == DIAMOND:
        head = Literal(diamond_name(pred, d), xs)
        return [Rule(head, (Literal(pred, xs, TimeTerm("T", -i)),)) for i in range(d + 1)]
    head = Literal(box_name(pred, d), xs)
    return [Rule(head, tuple(Literal(pred, xs, TimeTerm("T", -i)) for i in range(d + 1)))]


def lars_to_td(rules: Iterable[LarsRule]) -> Program:
    """Translate a globally stratified plain LARS program."""
    rules = list(rules)
    check_global_stratification(rules)
    out: list[Rule] = []
    emitted: set[tuple] = set()
    notes: list[str] = []
    for r in rules:
        instances, aux = expand_rule(r)
        for mu, inst in instances:
            if inst is None:
                shown = ", ".join(f"{v}->T-{i}" for v, i in mu.items())
                notes.append(f"dropped instance of '{r}' with {shown}: window condition cannot hold")
            else:
                out.append(inst)
        for key in aux:
            if key not in emitted:
                emitted.add(key)
                out.extend(aux_rules(*key))
    heads = {r.head.pred for r in rules}
    arity = {a.pred: len(a.args) for r in rules for a in (r.head, *r.body)}
    extensional = [p for p in _predicates(rules) if p not in heads]
    out = add_domain_guards(out, extensional, arity)
    return validate(out, output_predicates=heads, diagnostics=notes, source_rules=out)


# -- direct evaluation ----------------------------------------------------------

def _match(args, row, sub):
    out = sub
    for a, v in zip(args, row):
        if isinstance(a, Const):
            if a.name != v:
                return None
        elif a.name in out:
            if out[a.name] != v:
                return None
        else:
            if out is sub:
                out = dict(sub)
            out[a.name] = v
    return out


def _ground(args, sub) -> tuple[str, ...]:
    return tuple(a.name if isinstance(a, Const) else sub[a.name] for a in args)


class _DirectModel:
    def __init__(self, rules: list[LarsRule], stream):
        self.rules = rules
        self.strat = check_global_stratification(rules)
        heads = {r.head.pred for r in rules}
        self.extensional = {p for p in _predicates(rules) if p not in heads}
        self.facts: dict[tuple[str, int], set] = defaultdict(set)
        self.first_seen: dict[str, int] = {}
        for f in stream:
            pred, args, t = (f.pred, f.args, f.time) if hasattr(f, "pred") else f
            self.facts[pred, t].add(tuple(args))
            if pred in self.extensional:
                for c in args:
                    self.first_seen[c] = min(t, self.first_seen.get(c, t))

    def rows(self, pred: str, t: int):
        return self.facts.get((pred, t), ()) if t >= 1 else ()

    def holds(self, b: ExtendedAtom, sub, tm, t) -> bool:
        row = _ground(b.args, sub)
        if b.form == PLAIN:
            return row in self.rows(b.pred, t)
        if b.form == AT:
            return row in self.rows(b.pred, tm[b.tvar])
        if b.form == WIN_AT:
            t2 = tm[b.tvar]
            return t - b.window <= t2 <= t and row in self.rows(b.pred, t2)
        window = range(t - b.window, t + 1)
        if b.form == DIAMOND:
            return any(row in self.rows(b.pred, s) for s in window)
        return all(row in self.rows(b.pred, s) for s in window)

    def positive(self, b: ExtendedAtom, sub, tm, t):
        if b.form == PLAIN:
            cands = [(t, r) for r in self.rows(b.pred, t)]
        elif b.form == AT or (b.form == WIN_AT and b.tvar in tm):
            t2 = tm[b.tvar]
            if b.form == WIN_AT and not t - b.window <= t2 <= t:
                return
            cands = [(t2, r) for r in self.rows(b.pred, t2)]
        elif b.form == WIN_AT:
            for t2 in range(t - b.window, t + 1):
                for r in self.rows(b.pred, t2):
                    s2 = _match(b.args, r, sub)
                    if s2 is not None:
                        yield s2, {**tm, b.tvar: t2}
            return
        else:
            seen = []
            span = range(t - b.window, t + 1) if b.form == DIAMOND else (t,)
            for t2 in span:
                for r in self.rows(b.pred, t2):
                    s2 = _match(b.args, r, sub)
                    if s2 is not None and s2 not in seen and self.holds(b, s2, tm, t):
                        seen.append(s2)
                        yield s2, tm
            return
        for _, r in cands:
            s2 = _match(b.args, r, sub)
            if s2 is not None:
                yield s2, tm

    def fire(self, rule: LarsRule, t: int):
        states = [({}, {})]
        for b in rule.body:
            if b.negated:
                continue
            states = [n for s, tm in states for n in self.positive(b, s, tm, t)]
            if not states:
                return
        domain = sorted(c for c, t0 in self.first_seen.items() if t0 <= t)
        need = [v for a in (rule.head, *[b for b in rule.body if b.negated])
                for v in (x.name for x in a.args if isinstance(x, Var))]
        need = list(dict.fromkeys(need))
        for s, tm in states:
            free = [v for v in need if v not in s]
            for values in itertools.product(domain, repeat=len(free)):
                full = {**s, **dict(zip(free, values))}
                if all(not self.holds(b, full, tm, t) for b in rule.body if b.negated):
                    yield _ground(rule.head.args, full)

    def run(self, horizon: int) -> dict[int, set[tuple[str, tuple[str, ...]]]]:
        out: dict[int, set] = {}
        by_stratum = defaultdict(list)
        for r in self.rules:
            by_stratum[self.strat.stratum_of[r.head.pred]].append(r)
        for t in range(1, horizon + 1):
            derived = set()
            for i in range(1, len(self.strat) + 1):
                changed = True
                while changed:
                    changed = False
                    for r in by_stratum[i]:
                        for row in list(self.fire(r, t)):
                            if row not in self.facts[r.head.pred, t]:
                                self.facts[r.head.pred, t].add(row)
                                derived.add((r.head.pred, row))
                                changed = True
            out[t] = derived
        return out


def lars_direct_model(rules: Iterable[LarsRule], stream, horizon: int) -> dict[int, set]:
    """Atoms derived at each time 1..horizon, evaluating windows directly."""
    return _DirectModel(list(rules), stream).run(horizon)


def lars_direct_eval(rules: Iterable[LarsRule], stream, t: int) -> set[tuple[str, tuple[str, ...]]]:
    """Atoms derived at time ``t``."""
    return lars_direct_model(rules, stream, t)[t]


def window_holds(model: Mapping[int, set], form: str, pred: str, row, d: int, t: int) -> bool:
    """Evaluate ``diamond[d]``/``box[d]`` over an already computed model."""
    window = range(t - d, t + 1)
    test = any if form == DIAMOND else all
    return test(s >= 1 and (pred, row) in model.get(s, ()) for s in window)
