"""Streaming Trigger Graph materialisation.

The graph is grown one time-point at a time. Within a time-point every
stratum is saturated in rounds; the round counter ``k`` is global and never
reset. Each node fixes the rule it executes, its time-point and the nodes
feeding its positive conditions (p-edges). Negative conditions read from
every node holding the negated predicate at the right time (n-edges).
"""
from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .core import Program, accepts_input, Stratification, forget_horizon, incrementally_stratify
from .errors import OutOfOrderInput, UnknownPredicate
from .terms import Const, Literal, Rule, Var

log = logging.getLogger(__name__)

Row = tuple[str, ...]


@dataclass(eq=False)
class Node:
    id: int
    rule: int
    time: int
    round: int
    sources: tuple[int, ...] = ()
    blockers: tuple[tuple[int, ...], ...] = ()
    leaf: bool = False
    facts: set[Row] = field(default_factory=set)


def _bind(lit: Literal, row: Row, sub: dict[str, str]) -> dict[str, str] | None:
    new = None
    for term, value in zip(lit.args, row):
        if type(term) is Const:
            if term.name != value:
                return None
            continue
        have = sub.get(term.name) if new is None else new.get(term.name)
        if have is None:
            if new is None:
                new = dict(sub)
            new[term.name] = value
        elif have != value:
            return None
    return sub if new is None else new


def _instantiate(lit: Literal, sub: dict[str, str]) -> Row:
    return tuple(a.name if type(a) is Const else sub[a.name] for a in lit.args)


def _join(positives, rows_per_literal) -> list[dict[str, str]]:
    subs: list[dict[str, str]] = [{}]
    for lit, rows in zip(positives, rows_per_literal):
        subs = [s2 for s in subs for row in rows if (s2 := _bind(lit, row, s)) is not None]
        if not subs:
            break
    return subs


# -- query containment for minimisation --------------------------------------

class _Unsat(Exception):
    pass


def _walk(t, sub):
    while type(t) is Var and t.name in sub:
        t = sub[t.name]
    return t


def _unify(a, b, sub) -> None:
    a, b = _walk(a, sub), _walk(b, sub)
    if a == b:
        return
    if type(a) is Var:
        sub[a.name] = b
    elif type(b) is Var:
        sub[b.name] = a
    else:
        raise _Unsat


def _contained(general, specific, budget: int = 2000) -> bool:
    """True when a homomorphism maps ``general`` into ``specific``, i.e. every
    answer of ``specific`` is an answer of ``general``. Gives up (False)
    after ``budget`` backtracking steps."""
    ghead, gatoms = general
    shead, satoms = specific
    if len(ghead) != len(shead):
        return False
    steps = [budget]
    theta: dict[str, object] = {}

    def bind(gargs, sargs, th):
        th = dict(th)
        for g, s in zip(gargs, sargs):
            if type(g) is Var:
                if g.name in th:
                    if th[g.name] != s:
                        return None
                else:
                    th[g.name] = s
            elif g != s:
                return None
        return th

    theta = bind(ghead, shead, theta)
    if theta is None:
        return False
    pool: dict[tuple, list] = defaultdict(list)
    for kind, key, args in satoms:
        pool[kind, key].append(args)
    todo = sorted(gatoms, key=lambda a: len(pool.get((a[0], a[1]), ())))

    def search(i, th) -> bool:
        if i == len(todo):
            return True
        kind, key, args = todo[i]
        for cand in pool.get((kind, key), ()):
            steps[0] -= 1
            if steps[0] < 0:
                return False
            th2 = bind(args, cand, th)
            if th2 is not None and search(i + 1, th2):
                return True
        return False

    return search(0, theta)


class StreamingGraph:
    """Incremental materialiser for one ordered stream.

    Toggles: ``forget`` drops nodes and stream facts past their horizon;
    ``minimise`` removes nodes whose query is contained in another node's;
    ``delta`` keeps only facts not yet derived; ``prune`` discards nodes that
    derive no new fact (with ``delta`` on, exactly the empty ones).
    None of them changes the derived facts.
    """

    def __init__(self, program: Program, strata: Stratification | None = None, *,
                 forget: bool = True, minimise: bool = True, delta: bool = True,
                 prune: bool = True, depth_cap: int = 8, size_cap: int = 32):
        self.program = program
        self.strata = strata or incrementally_stratify(program)
        self.do_forget, self.do_minimise, self.do_delta, self.do_prune = forget, minimise, delta, prune
        self.depth_cap, self.size_cap = depth_cap, size_cap
        self.subset_cap = 6
        self.horizon = forget_horizon(program)
        # Stream facts may also feed intensional predicates; each such
        # predicate gets an input rule ``p(X..,T) :- p(X..,T)`` read from the
        # stream store, instantiated only at time-points with input.
        self._inputs: dict[str, int] = {}
        extra = []
        for p in sorted(program.intensional):
            xs = tuple(Var(f"X{i + 1}") for i in range(program.arities[p]))
            self._inputs[p] = len(program.rules) + len(extra)
            extra.append(Rule(Literal(p, xs), (Literal(p, xs),)))
        self.rules = program.rules + tuple(extra)
        self.time = 0
        self.k = 0
        self.nodes: dict[int, Node] = {}
        self.index: dict[tuple[str, int], list[int]] = defaultdict(list)
        self.stream: dict[tuple[str, int], set[Row]] = defaultdict(set)
        self.interp: dict[tuple[str, int], set[Row]] = defaultdict(set)
        self._ids = itertools.count(1)
        self._seen: set[tuple] = set()
        self._queries: dict[int, object] = {}
        self._keys: dict[int, frozenset] = {}
        self._fresh = itertools.count()
        self.created: list[int] = []
        self.removed_by_minimise: list[int] = []
        self._stratum = 0

        self._pos = [r.positives for r in self.rules]
        self._neg = [r.negatives for r in self.rules]
        self._by_stratum: list[list[int]] = [[] for _ in self.strata.strata]
        for i, r in enumerate(program.rules):
            self._by_stratum[self.strata.stratum_of[r.head.pred] - 1].append(i)
        self._input_ids = set(self._inputs.values())
        self._consistent_rule = []
        for i, r in enumerate(self.rules):
            s = self.strata.stratum_of[r.head.pred]
            self._consistent_rule.append(all(
                self.strata.stratum_of[b.pred] != s or b.offset > 0 for b in self._pos[i]))

    # -- public -------------------------------------------------------------

    def step(self, new_facts: Iterable = (), t: int | None = None) -> list[tuple[str, Row]]:
        """Advance to the next time-point and return facts derived there."""
        t = self.time + 1 if t is None else t
        if t != self.time + 1:
            raise OutOfOrderInput(f"expected time-point {self.time + 1}, got {t}")
        for f in new_facts:
            pred, args, ft = (f.pred, f.args, f.time) if hasattr(f, "pred") else f
            if ft != t:
                raise OutOfOrderInput(f"fact {pred}{tuple(args)} stamped {ft} while processing {t}")
            if pred not in self.program.arities or not accepts_input(pred):
                raise UnknownPredicate(f"{pred} does not occur in the program")
            if len(args) != self.program.arities[pred]:
                raise UnknownPredicate(f"{pred} has arity {self.program.arities[pred]}, got {len(args)}")
            self.stream[pred, t].add(tuple(args))
        self.time = t
        self._seen.clear()
        self._queries.clear()
        self._keys.clear()
        self.created.append(0)
        for j, rule_ids in enumerate(self._by_stratum, 1):
            self._stratum = j
            self._saturate(rule_ids, t)
        return sorted((p, row) for p in self.program.intensional
                      for row in self.interp.get((p, t), ()) if row not in self.stream.get((p, t), ()))

    def forget(self, t: int | None = None) -> int:
        """Remove nodes and stream facts that no later time-point can read."""
        t = self.time if t is None else t
        gone = [n.id for n in self.nodes.values()
                if n.time + self.horizon[self.rules[n.rule].head.pred] + 1 <= t + 1]
        for i in gone:
            self._drop(i)
        for store in (self.stream, self.interp):
            for key in [key for key in store if key[1] + self.horizon[key[0]] + 1 <= t + 1]:
                del store[key]
        for key in [key for key, ids in self.index.items() if not ids]:
            del self.index[key]
        return len(gone)

    def enumerate_consistent(self, rule: int, t: int, k: int) -> Iterator[tuple[int, ...]]:
        cands = self._candidates(rule, t, k)
        if cands is None:
            return iter(())
        return itertools.product(*cands)

    def enumerate_k_compatible(self, rule: int, t: int, k: int) -> Iterator[tuple[int, ...]]:
        cands = self._candidates(rule, t, k)
        if cands is None or not cands:
            return iter(())
        return (tup for tup in itertools.product(*cands)
                if any(self.nodes[u].round == k - 1 for u in tup))

    def minimise(self, new: list[Node]) -> list[Node]:
        """Drop new nodes whose query is contained in another live node's."""
        if not new:
            return new
        new_ids = {n.id for n in new}
        removed: set[int] = set()
        groups: dict[tuple[str, int], dict] = {}
        for v in new:
            qv = self._query(v)
            if qv is None:
                continue
            if qv == "unsat":
                removed.add(v.id)
                continue
            kv = self._keys[v.id]
            group = (self.rules[v.rule].head.pred, v.time)
            if group not in groups:
                groups[group] = self._key_index(group)
            by_keys = groups[group]
            if len(kv) > self.subset_cap:
                continue
            subsets = (frozenset(c) for r in range(len(kv) + 1) for c in itertools.combinations(kv, r))
            cands = sorted(w for ks in subsets for w in by_keys.get(ks, ()))
            for wid in cands:
                if wid == v.id or wid in removed:
                    continue
                qw = self._queries[wid]
                if not _contained(qw, qv):
                    continue
                # equivalent new nodes: keep the older one
                if wid in new_ids and wid > v.id and kv <= self._keys[wid] and _contained(qv, qw):
                    continue
                removed.add(v.id)
                break
        for i in removed:
            self._drop(i)
        self.removed_by_minimise.extend(sorted(removed))
        return [n for n in new if n.id not in removed]

    def _key_index(self, group) -> dict:
        """Live nodes of ``group`` by the set of sources their query reads."""
        by_keys: dict[frozenset, list[int]] = defaultdict(list)
        for wid in self.index.get(group, ()):
            q = self._query(self.nodes[wid])
            if q is not None and q != "unsat":
                by_keys[self._keys[wid]].append(wid)
        return by_keys

    def live_nodes(self) -> int:
        return len(self.nodes)

    def to_dot(self, name: str | None = None) -> str:
        lines = [f"digraph {name or f'stg_t{self.time}'} {{"]
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            lines.append(f'  v{n.id} [label="v{n.id}: rule#{n.rule + 1} @t={n.time} |facts|={len(n.facts)}"];')
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            for j, u in enumerate(n.sources, 1):
                if u in self.nodes:
                    lines.append(f'  v{u} -> v{n.id} [label="{j}"];')
            for j, us in enumerate(n.blockers, 1):
                for u in us:
                    if u in self.nodes:
                        lines.append(f'  v{u} -> v{n.id} [label="{j}", style=dashed];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # -- internals ----------------------------------------------------------

    def _saturate(self, rule_ids: list[int], t: int) -> None:
        first = True
        stratum = self.strata.strata[self._stratum - 1]
        inputs = [self._inputs[p] for p in sorted(stratum)
                  if p in self._inputs and self.stream.get((p, t))]
        rule_ids = inputs + rule_ids
        while True:
            self.k += 1
            k = self.k
            new: list[Node] = []
            for rid in rule_ids:
                if self.program.is_extensional_rule(rid) or rid in self._input_ids:
                    if first:
                        self._add(new, rid, t, k, (), (), leaf=True)
                    continue
                blockers = tuple(tuple(self.index.get((b.pred, t - b.offset), ()))
                                 for b in self._neg[rid])
                if self._consistent_rule[rid]:
                    tuples = self.enumerate_consistent(rid, t, k)
                else:
                    tuples = self.enumerate_k_compatible(rid, t, k)
                for tup in tuples:
                    self._add(new, rid, t, k, tup, blockers)
            first = False
            self.created[-1] += len(new)
            if self.do_minimise:
                new = self.minimise(new)
            fresh = 0
            for n in new:
                gained = self._materialise(n, t)
                fresh += gained
                # a node adding nothing new only repeats facts older nodes
                # already hold and have already been joined with
                if self.do_prune and not gained:
                    self._drop(n.id)
            if fresh == 0:
                break

    def _add(self, new, rid, t, k, sources, blockers, leaf=False):
        key = (rid, t, sources)
        if key in self._seen:
            return
        self._seen.add(key)
        n = Node(next(self._ids), rid, t, k, sources, blockers, leaf)
        self.nodes[n.id] = n
        self.index[self.rules[rid].head.pred, t].append(n.id)
        new.append(n)

    def _drop(self, i: int) -> None:
        n = self.nodes.pop(i)
        ids = self.index.get((self.rules[n.rule].head.pred, n.time))
        if ids is not None and i in ids:
            ids.remove(i)

    def _candidates(self, rule: int, t: int, k: int) -> list[list[int]] | None:
        cands = []
        for b in self._pos[rule]:
            tb = t - b.offset
            if tb < 1:
                return None
            ids = [u for u in self.index.get((b.pred, tb), ()) if self.nodes[u].round < k]
            if not ids:
                return None
            cands.append(ids)
        return cands

    def _materialise(self, n: Node, t: int) -> int:
        rid = n.rule
        pos, neg = self._pos[rid], self._neg[rid]
        if n.leaf:
            pos_rows = [self.stream.get((b.pred, t - b.offset), ()) for b in pos]
            neg_rows = [self.stream.get((b.pred, t - b.offset), ()) for b in neg]
        else:
            pos_rows = [self.nodes[u].facts for u in n.sources]
            neg_rows = []
            for us in n.blockers:
                rows: set[Row] = set()
                for u in us:
                    if u in self.nodes:
                        rows |= self.nodes[u].facts
                neg_rows.append(rows)
        subs = _join(pos, pos_rows)
        head = self.rules[rid].head
        known = self.interp[head.pred, t]
        fresh = 0
        for s in subs:
            if any(_instantiate(b, s) in rows for b, rows in zip(neg, neg_rows)):
                continue
            fact = _instantiate(head, s)
            if fact in known:
                if self.do_delta:
                    continue
            else:
                known.add(fact)
                fresh += 1
            n.facts.add(fact)
        return fresh

    def _expandable(self, u: Node) -> bool:
        return (not u.leaf and u.time == self.time
                and self.strata.stratum_of[self.rules[u.rule].head.pred] == self._stratum)

    def _query(self, n: Node, depth: int = 0):
        """Query of ``n``: head arguments plus atoms over opaque sources.

        Same-stratum, same-time intensional sources are unfolded; everything
        else (leaves, earlier time-points, lower strata, n-edges) is kept as
        an atom keyed by where its facts come from. Returns ``None`` when the
        unfolding exceeds the depth cap and ``"unsat"`` when it cannot match.
        """
        if n.id in self._queries:
            return self._queries[n.id]
        rule = self.rules[n.rule]
        sub: dict[str, object] = {}
        ren: dict[str, Var] = {}

        def rn(args):
            return tuple(ren.setdefault(a.name, Var(f"_{next(self._fresh)}")) if type(a) is Var else a
                         for a in args)

        atoms = []
        try:
            for j, b in enumerate(self._pos[n.rule]):
                args = rn(b.args)
                if n.leaf:
                    atoms.append(("s", (b.pred, n.time - b.offset), args))
                    continue
                u = self.nodes.get(n.sources[j])
                if u is not None and self._expandable(u):
                    q = None if depth >= self.depth_cap else self._rename(self._query(u, depth + 1))
                    if q is None or q == "unsat":
                        self._queries[n.id] = q
                        return q
                    uhead, uatoms = q
                    for a, c in zip(args, uhead):
                        _unify(a, c, sub)
                    atoms.extend(uatoms)
                else:
                    atoms.append(("p", n.sources[j], args))
            for b in self._neg[n.rule]:
                kind = "ns" if n.leaf else "n"
                atoms.append((kind, (b.pred, n.time - b.offset), rn(b.args)))
        except _Unsat:
            self._queries[n.id] = "unsat"
            return "unsat"

        def res(args):
            out = []
            for a in args:
                a = _walk(a, sub)
                out.append(a)
            return tuple(out)

        q = (res(rn(rule.head.args)), [(kd, key, res(args)) for kd, key, args in atoms])
        if len(q[1]) > self.size_cap:
            q = None
        else:
            self._keys[n.id] = frozenset((kd, key) for kd, key, _ in q[1])
        self._queries[n.id] = q
        return q

    def _rename(self, q):
        if q is None or q == "unsat":
            return q
        m: dict[str, Var] = {}

        def rn(args):
            return tuple(m.setdefault(a.name, Var(f"_{next(self._fresh)}")) if type(a) is Var else a
                         for a in args)

        head, atoms = q
        return rn(head), [(kd, key, rn(args)) for kd, key, args in atoms]


def materialise(program: Program, stream, horizon: int, **options) -> set[tuple[str, Row, int]]:
    """Run the engine over ``stream`` for times 1..horizon; all derived facts."""
    by_time: dict[int, list] = defaultdict(list)
    for f in stream:
        pred, args, t = (f.pred, f.args, f.time) if hasattr(f, "pred") else f
        by_time[t].append((pred, tuple(args), t))
    g = StreamingGraph(program, **options)
    out: set[tuple[str, Row, int]] = set()
    for t in range(1, horizon + 1):
        for p, row in g.step(by_time.get(t, ()), t):
            out.add((p, row, t))
        if g.do_forget:
            g.forget(t)
    return out
