import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import sample_text
from generators import ec_instance
from tdstream.engine import StreamingGraph, materialise
from tdstream.ec import (SIMPLE, STATIC, collisions, ec_direct_eval, ec_direct_model, ec_to_td, h_name,
                         parse_ec)
from tdstream.errors import (MultipleTimeVariables, NameCollision, NotGloballyStratified, ParseError,
                             SchemaViolation, UnknownFluentValue)
from tdstream.oracle import perfect_model

DECL = "fluent f(1) values {on, off}.\n"


def safety():
    return parse_ec(sample_text("safety.ec"))


def holds(program, stream, horizon):
    m = materialise(ec_to_td(program), stream, horizon)
    return {(p, r, t) for p, r, t in m if p.endswith("_h")}


def test_parse_and_kinds():
    prog = safety()
    assert prog.fluents["safety"].kind == SIMPLE
    assert prog.fluents["integrity_threat_of"].kind == STATIC
    assert prog.fluents["safety"].values == ("verified", "unverified", "trusted")
    (eff,) = prog.effects
    assert (eff.source.value, eff.target.value, eff.delay, eff.postponable) == ("verified", "trusted", 3, False)
    fluents, rules, effects = prog
    assert len(rules) == 3 and effects == prog.effects


def test_translation_text():
    lines = ec_to_td(safety()).to_text().splitlines()
    assert "safety_i(X,verified,T) :- repair(X,T)." in lines
    assert ("safety_i(X,trusted,T) :- safety_i(X,verified,T-3), not safety_t(X,verified,T-2), "
            "not safety_t(X,verified,T-1).") in lines
    for v in ("verified", "unverified", "trusted"):
        assert f"safety_h(X,{v},T) :- safety_i(X,{v},T-1)." in lines
        assert f"safety_h(X,{v},T) :- safety_h(X,{v},T-1), not safety_t(X,{v},T-1)." in lines
        for w in {"verified", "unverified", "trusted"} - {v}:
            assert f"safety_t(X,{v},T) :- safety_i(X,{w},T)." in lines


def test_postponable_adds_initiation_guard():
    prog = parse_ec(DECL + "initiatedAt(f(X)=on, T) :- happensAt(go(X), T).\n"
                    "fi(f(X)=on, f(X)=off, 2).\np(f(X)=on).")
    lines = ec_to_td(prog).to_text().splitlines()
    assert "f_i(X,off,T) :- f_i(X,on,T-2), not f_t(X,on,T-1), not f_i(X,on,T-1)." in lines


def test_repair_then_trusted():
    got = holds(safety(), [("repair", ("a",), 1)], 6)
    assert {t for p, r, t in got if r == ("a", "verified")} == {2, 3, 4}
    assert {t for p, r, t in got if r == ("a", "trusted")} == {5, 6}


def test_delayed_initiation_and_termination():
    td = ec_to_td(safety())
    m = materialise(td, [("repair", ("a",), 1)], 6)
    assert ("safety_i", ("a", "trusted"), 4) in m
    # the trusted initiation at 4 terminates verified, so it is gone at 5
    assert ("safety_t", ("a", "verified"), 4) in m
    assert ("safety_h", ("a", "verified"), 5) not in m


def test_single_value_fluent_has_no_incompatibility_rules():
    prog = parse_ec("fluent f(1) values {on}.\ninitiatedAt(f(X)=on, T) :- happensAt(go(X), T).\n"
                    "terminatedAt(f(X)=on, T) :- happensAt(stop(X), T).")
    text = ec_to_td(prog).to_text()
    assert "f_t(X,on,T) :- f_i(" not in text
    assert "f_t(X,on,T) :- stop(X,T)." in text


def test_warning_cancels_delayed_effect():
    got = holds(safety(), [("repair", ("a",), 1), ("warning", ("a",), 3)], 8)
    assert {t for p, r, t in got if r == ("a", "verified")} == {2, 3}
    assert {t for p, r, t in got if r == ("a", "unverified")} == set(range(4, 9))
    assert not any(r[-1] == "trusted" for _, r, _ in got)


def test_static_fluent_and_input_fluent():
    stream = [("repair", ("a",), 1), ("warning", ("b",), 1), ("connected_i", ("a", "b", "true"), 1)]
    got = holds(safety(), stream, 6)
    assert ("connected_h", ("a", "b", "true"), 2) in got
    threat = {t for p, r, t in got if p == "integrity_threat_of_h"}
    assert threat == {5, 6}
    direct = ec_direct_model(safety(), stream, 6)
    assert ("integrity_threat_of", ("a", "b"), "true") in direct[5]
    assert ec_direct_eval(safety(), stream, 4) == direct[4]


def test_collisions_reported():
    prog = safety()
    td = ec_to_td(prog)
    facts = [("repair", ("a",), 1), ("warning", ("a",), 1)]
    g = StreamingGraph(td)
    derived = g.step(facts, 1)
    (msg,) = collisions(prog, derived)
    assert "safety(a)" in msg and "unverified" in msg and "verified" in msg


@pytest.mark.parametrize("text,exc", [
    ("initiatedAt(f(X)=on, T) :- happensAt(go(X), T).", SchemaViolation),
    (DECL + "initiatedAt(f(X)=up, T) :- happensAt(go(X), T).", UnknownFluentValue),
    (DECL + "initiatedAt(f(X,Y)=on, T) :- happensAt(go(X), T).", SchemaViolation),
    (DECL + "initiatedAt(f(X)=on, T) :- happensAt(go(X), S).", MultipleTimeVariables),
    (DECL + "initiatedAt(f(X)=on, T) :- happensAt(go(X), T-1).", ParseError),
    (DECL + "initiatedAt(f(X)=on, T) :- holdsAt(f(X)=off, T).", SchemaViolation),
    (DECL + "initiatedAt(f(X)=on, T) :- not happensAt(go(X), T).", SchemaViolation),
    (DECL + "holdsAt(f(X)=on, T) :- happensAt(go(X), T).", SchemaViolation),
    (DECL + "fi(f(X)=on, f(X)=off, 0).", SchemaViolation),
    ("fluent f__x(1) values {on}.", NameCollision),
    (DECL + "initiatedAt(f(X)=on, T) :- happensAt(f_h(X), T).", NameCollision),
])
def test_rejections(text, exc):
    with pytest.raises(exc):
        parse_ec(text)


def test_static_negation_cycle_rejected():
    text = ("fluent a(1) values {t}.\nfluent b(1) values {t}.\nfluent c(1) values {t}.\n"
            "holdsAt(a(X)=t, T) :- holdsAt(c(X)=t, T), not holdsAt(b(X)=t, T).\n"
            "holdsAt(b(X)=t, T) :- holdsAt(c(X)=t, T), not holdsAt(a(X)=t, T).")
    with pytest.raises(NotGloballyStratified):
        ec_to_td(parse_ec(text))


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_translation_agrees_with_direct_semantics(rng):
    ec, prog, stream = ec_instance(random.Random(rng.random()), horizon=12)
    m = materialise(prog, stream, 12)
    assert m == perfect_model(prog, stream, 12)
    direct = ec_direct_model(ec, stream, 12)
    want = {(h_name(f), (*x, v), t) for t, fs in direct.items() for f, x, v in fs}
    got = {(p, r, t) for p, r, t in m if p in prog.output_predicates}
    got |= {(p, tuple(r), t) for p, r, t in stream if p in prog.output_predicates}
    assert got == want


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_one_value_at_a_time_without_collisions(rng):
    ec, prog, stream = ec_instance(random.Random(rng.random()), horizon=12)
    fluent_level = {n for d in ec.fluents.values() for n in (h_name(d.name), d.name + "_i", d.name + "_t")}
    if any(p in fluent_level for p, _, _ in stream):
        return
    g = StreamingGraph(prog)
    value = {}
    for t in range(1, 13):
        derived = g.step([f for f in stream if f[2] == t], t)
        g.forget(t)
        if collisions(ec, derived):
            return
        for p, row in derived:
            if p in prog.output_predicates and ec.fluents[p[:-2]].kind == SIMPLE:
                assert value.setdefault((p, row[:-1], t), row[-1]) == row[-1]
