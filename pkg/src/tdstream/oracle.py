"""Reference evaluator: the perfect model over a bounded stream prefix.

Deliberately naive. Every rule is re-fired against the full interpretation
until nothing changes, one stratum and one time-point at a time. Used as
ground truth for the streaming engine.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from .core import Program, incrementally_stratify
from .terms import Const, Literal

Atom = tuple[str, tuple[str, ...], int]


def _match(lit: Literal, args: tuple[str, ...], sub: dict[str, str]) -> dict[str, str] | None:
    out = sub
    for term, value in zip(lit.args, args):
        if isinstance(term, Const):
            if term.name != value:
                return None
        else:
            bound = out.get(term.name)
            if bound is None:
                if out is sub:
                    out = dict(sub)
                out[term.name] = value
            elif bound != value:
                return None
    return out


def ground(lit: Literal, sub: dict[str, str]) -> tuple[str, ...]:
    return tuple(a.name if isinstance(a, Const) else sub[a.name] for a in lit.args)


def substitutions(body: tuple[Literal, ...], t: int, facts) -> list[dict[str, str]]:
    """All substitutions satisfying ``body`` at head time ``t``.

    ``facts`` maps ``(pred, time)`` to a set of argument tuples. Negative
    conditions at times before 1 hold vacuously.
    """
    subs: list[dict[str, str]] = [{}]
    for b in body:
        if b.negated:
            continue
        tb = t - b.offset
        if tb < 1:
            return []
        rows = facts.get((b.pred, tb), ())
        subs = [s2 for s in subs for row in rows if (s2 := _match(b, row, s)) is not None]
        if not subs:
            return []
    for b in body:
        if b.negated:
            tb = t - b.offset
            if tb >= 1:
                rows = facts.get((b.pred, tb), ())
                subs = [s for s in subs if ground(b, s) not in rows]
    return subs


def perfect_model(program: Program, stream: Iterable, horizon: int) -> set[Atom]:
    """Facts derived by ``program`` over ``stream`` for times 1..horizon.

    ``stream`` holds objects with ``pred``, ``args`` and ``time`` attributes
    (or equivalent ``(pred, args, time)`` tuples). Stream facts themselves are
    not part of the result.
    """
    strat = incrementally_stratify(program)
    by_stratum: dict[int, list] = defaultdict(list)
    for r in program.rules:
        by_stratum[strat.stratum_of[r.head.pred]].append(r)
    facts: dict[tuple[str, int], set[tuple[str, ...]]] = defaultdict(set)
    for f in stream:
        pred, args, time = (f.pred, f.args, f.time) if hasattr(f, "pred") else f
        if time <= horizon:
            facts[pred, time].add(tuple(args))
    derived: set[Atom] = set()
    for t in range(1, horizon + 1):
        for i in range(1, len(strat) + 1):
            changed = True
            while changed:
                changed = False
                for r in by_stratum[i]:
                    rows = facts[r.head.pred, t]
                    for s in substitutions(r.body, t, facts):
                        fact = ground(r.head, s)
                        if fact not in rows:
                            rows.add(fact)
                            derived.add((r.head.pred, fact, t))
                            changed = True
    return derived
