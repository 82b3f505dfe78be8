"""Program validation, incremental stratification and forget horizons."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import networkx as nx

from .errors import (ArityMismatch, MultipleTimeVariables, NotForwardPropagating,
                     NotTemporallyStratified, UnsafeVariable, ValidationError)
from .terms import Literal, Rule, TimeTerm, Var

BRIDGE_SUFFIX = "__edb"
DOMAIN_PRED = "dom__"


@dataclass(frozen=True)
class Stratification:
    strata: tuple[frozenset[str], ...]
    stratum_of: Mapping[str, int]

    def __len__(self) -> int:
        return len(self.strata)

    def check(self, rules: Iterable[Rule]) -> list[str]:
        """Violations of the zero-offset stratification condition, by rule."""
        bad = []
        for r in rules:
            i = self.stratum_of[r.head.pred]
            for b in r.body:
                if b.offset:
                    continue
                j = self.stratum_of[b.pred]
                if (b.negated and j >= i) or j > i:
                    bad.append(f"{r}: {b.pred} in stratum {j}, head in {i}")
        return bad


@dataclass(frozen=True)
class Program:
    """A validated program.

    ``rules`` is partitioned so each rule's body is either purely extensional
    or purely intensional. ``source_rules`` keeps the rules as written (or as
    emitted by a frontend) for printing.
    """

    rules: tuple[Rule, ...]
    arities: Mapping[str, int]
    extensional: frozenset[str]
    intensional: frozenset[str]
    source_rules: tuple[Rule, ...] = ()
    output_predicates: frozenset[str] = frozenset()
    diagnostics: tuple[str, ...] = ()
    extensional_rules: frozenset[int] = field(default=frozenset())

    def is_extensional_rule(self, index: int) -> bool:
        return index in self.extensional_rules

    def to_text(self) -> str:
        return "".join(f"{r}\n" for r in (self.source_rules or self.rules))


def accepts_input(pred: str) -> bool:
    """Generated bridge and domain predicates cannot be fed from a stream."""
    return pred != DOMAIN_PRED and not pred.endswith(BRIDGE_SUFFIX)


def normalise_rule(rule: Rule) -> Rule:
    """Rename the time variable to ``T`` and shift so the head sits at ``T``."""
    hs = rule.head.time.shift

    def move(l: Literal) -> Literal:
        return Literal(l.pred, l.args, TimeTerm("T", l.time.shift - hs), l.negated)

    return Rule(move(rule.head), tuple(move(b) for b in rule.body), line=rule.line)


def unsafe_variables(rule: Rule) -> list[str]:
    bound = {v for b in rule.positives for v in b.variables()}
    out: list[str] = []
    for l in (rule.head, *rule.negatives):
        for v in l.variables():
            if v not in bound and v not in out:
                out.append(v)
    return out


def _check_rules(rules: list[Rule]) -> tuple[list[Rule], list[ValidationError]]:
    problems: list[ValidationError] = []
    out: list[Rule] = []
    arities: dict[str, set[int]] = defaultdict(set)
    for r in rules:
        tv = r.time_variables()
        if len(tv) > 1:
            problems.append(MultipleTimeVariables(r, tv))
            continue
        n = normalise_rule(r)
        for b in n.body:
            if b.offset < 0:
                problems.append(NotForwardPropagating(r, b))
        for v in unsafe_variables(n):
            problems.append(UnsafeVariable(r, v))
        for l in (n.head, *n.body):
            arities[l.pred].add(len(l.args))
        out.append(n)
    for p, a in arities.items():
        if len(a) > 1:
            problems.append(ArityMismatch(p, a))
    return out, problems


def partition(rules: list[Rule], extensional: set[str]) -> tuple[list[Rule], set[int]]:
    """Insert bridge rules so no body mixes extensional and intensional
    predicates; returns the rewritten rules and the extensional rule indices."""
    taken = {l.pred for r in rules for l in (r.head, *r.body)}
    bridges: dict[str, str] = {}
    out: list[Rule] = []
    ext_rules: set[int] = set()

    def bridge(p: str) -> str:
        if p not in bridges:
            name = p + BRIDGE_SUFFIX
            while name in taken:
                name += "_"
            taken.add(name)
            bridges[p] = name
        return bridges[p]

    for r in rules:
        kinds = {b.pred in extensional for b in r.body}
        if kinds == {True}:
            ext_rules.add(len(out))
            out.append(r)
        elif kinds == {True, False}:
            body = tuple(Literal(bridge(b.pred), b.args, b.time, b.negated) if b.pred in extensional
                         else b for b in r.body)
            out.append(Rule(r.head, body, line=r.line))
        else:
            out.append(r)
    arity = {l.pred: len(l.args) for r in rules for l in r.body}
    for p, name in bridges.items():
        xs = tuple(Var(f"X{i + 1}") for i in range(arity[p]))
        ext_rules.add(len(out))
        out.append(Rule(Literal(name, xs), (Literal(p, xs),)))
    return out, ext_rules


def dependency_graph(rules: Iterable[Rule], preds: Iterable[str], zero_offset_only: bool = True) -> nx.MultiDiGraph:
    """Edges body predicate -> head predicate, attribute ``negative``."""
    g = nx.MultiDiGraph()
    g.add_nodes_from(preds)
    for r in rules:
        for b in r.body:
            if zero_offset_only and b.offset:
                continue
            g.add_edge(b.pred, r.head.pred, negative=b.negated)
    return g


def _find_negative_cycle(g: nx.MultiDiGraph, comp: set[str]):
    sub = g.subgraph(comp)
    for u, v, d in sub.edges(data=True):
        if d["negative"]:
            path = nx.shortest_path(sub, v, u)
            cycle = [(u, v, True)]
            for a, b in zip(path, path[1:]):
                neg = all(e["negative"] for e in sub.get_edge_data(a, b).values())
                cycle.append((a, b, neg))
            return cycle
    return None


def stratify_graph(g: nx.MultiDiGraph, error=NotTemporallyStratified, latest: bool = False) -> Stratification:
    """Stratify a signed dependency graph.

    Predicates go to the lowest stratum they can occupy, or with ``latest``
    to the highest one within the minimal number of strata.
    """
    comps = list(nx.strongly_connected_components(g))
    for c in comps:
        cyc = _find_negative_cycle(g, c)
        if cyc is not None:
            raise error(cyc)
    cond = nx.condensation(nx.DiGraph(g), scc=comps)
    member = cond.graph["mapping"]
    weight: dict[tuple[int, int], int] = {}
    for u, v, d in g.edges(data=True):
        cu, cv = member[u], member[v]
        if cu != cv:
            weight[cu, cv] = max(weight.get((cu, cv), 0), int(d["negative"]))
    order = list(nx.topological_sort(cond))
    level = {c: 1 for c in order}
    for c in order:
        for s in cond.successors(c):
            level[s] = max(level[s], level[c] + weight[c, s])
    if latest and order:
        top = max(level.values())
        high = {c: top for c in order}
        for c in reversed(order):
            for s in cond.successors(c):
                high[c] = min(high[c], high[s] - weight[c, s])
        level = high
    n = max(level.values(), default=0)
    rank = {p: level[member[p]] for p in g.nodes}
    strata = tuple(frozenset(p for p in g.nodes if rank[p] == i) for i in range(1, n + 1))
    return Stratification(strata, MappingProxyType(rank))


def validate(rules: Iterable[Rule], *, output_predicates: Iterable[str] | None = None,
             diagnostics: Iterable[str] = (), source_rules: Iterable[Rule] | None = None) -> Program:
    """Check a raw rule set and build a partitioned Program.

    Raises the first violation found; ``exc.violations`` lists all of them.
    """
    raw = list(rules)
    checked, problems = _check_rules(raw)
    if not problems:
        heads = {r.head.pred for r in checked}
        preds = list(dict.fromkeys(l.pred for r in checked for l in (r.head, *r.body)))
        try:
            stratify_graph(dependency_graph(checked, preds))
        except NotTemporallyStratified as e:
            problems.append(e)
    if problems:
        first = problems[0]
        first.violations = problems
        raise first
    extensional = {p for p in preds if p not in heads}
    parted, ext_rules = partition(checked, extensional)
    arities = {}
    for r in parted:
        for l in (r.head, *r.body):
            arities.setdefault(l.pred, len(l.args))
    heads_after = {r.head.pred for r in parted}
    intensional = frozenset(p for p in arities if p in heads_after)
    outputs = frozenset(output_predicates) if output_predicates is not None else frozenset(heads)
    return Program(
        rules=tuple(parted),
        arities=MappingProxyType(arities),
        extensional=frozenset(p for p in arities if p not in heads_after),
        intensional=intensional,
        source_rules=tuple(source_rules) if source_rules is not None else tuple(raw),
        output_predicates=outputs,
        diagnostics=tuple(diagnostics),
        extensional_rules=frozenset(ext_rules),
    )


def incrementally_stratify(program: Program) -> Stratification:
    """Global stratification of the zero-offset reduct, reused at every t."""
    return stratify_graph(dependency_graph(program.rules, program.arities))


def forget_horizon(program: Program) -> dict[str, int]:
    """Largest body offset at which each predicate is read (0 if never)."""
    k = {p: 0 for p in program.arities}
    for r in program.rules:
        for b in r.body:
            k[b.pred] = max(k[b.pred], b.offset)
    return k


def add_domain_guards(rules: list[Rule], extensional: Iterable[str], arities: Mapping[str, int]) -> list[Rule]:
    """Bind unsafe variables with ``dom__(X, T)``.

    ``dom__`` holds every constant seen in the stream up to ``T`` in any
    argument of an extensional predicate. Frontends use this to keep rules
    with negation-only variables range restricted.
    """
    out: list[Rule] = []
    used = False
    for r in rules:
        unsafe = unsafe_variables(r)
        if unsafe:
            used = True
            guards = tuple(Literal(DOMAIN_PRED, (Var(v),)) for v in unsafe)
            r = Rule(r.head, guards + r.body, line=r.line)
        out.append(r)
    if used:
        x = Var("X")
        for p in extensional:
            n = arities[p]
            xs = tuple(Var(f"X{i + 1}") for i in range(n))
            for i in range(n):
                out.append(Rule(Literal(DOMAIN_PRED, (xs[i],)), (Literal(p, xs),)))
        out.append(Rule(Literal(DOMAIN_PRED, (x,)), (Literal(DOMAIN_PRED, (x,), TimeTerm("T", -1)),)))
    return out
