import random
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from conftest import sample_text
from generators import td_program
from tdstream.core import (BRIDGE_SUFFIX, dependency_graph, forget_horizon, incrementally_stratify,
                           validate)
from tdstream.errors import (ArityMismatch, MultipleTimeVariables, NotForwardPropagating,
                             NotTemporallyStratified, UnsafeVariable)
from tdstream.lars import lars_to_td, parse_lars
from tdstream.syntax import parse_tdl


def prog(text):
    return validate(parse_tdl(text))


def test_device_strata_and_horizons():
    p = prog(sample_text("device.tdl"))
    s = incrementally_stratify(p)
    assert s.stratum_of["vf"] == s.stratum_of["uvf"] == 1
    assert s.stratum_of["sf"] == s.stratum_of["tr"] == 2
    assert len(s) == 2
    assert s.check(p.rules) == []
    k = forget_horizon(p)
    assert k["rp"] == k["wn"] == k["sf"] == 1
    assert k["vf"] == k["uvf"] == k["tr"] == 0


def test_extensional_and_intensional():
    p = prog(sample_text("device.tdl"))
    assert p.extensional == {"rp", "wn"}
    assert p.intensional == {"vf", "uvf", "sf", "tr"}
    assert p.output_predicates == p.intensional


def test_translated_lars_horizon():
    p = lars_to_td(parse_lars(sample_text("network.lars")))
    assert forget_horizon(p)["verified"] == 6


def test_future_offset_rejected():
    with pytest.raises(NotForwardPropagating):
        prog("p(X, T) :- q(X, T+1).")


def test_head_shift_is_normalised():
    # head at T+1 is the same as body at T-1
    p = prog("p(X, T+1) :- q(X, T).")
    assert str(p.rules[0]) == "p(X,T) :- q(X,T-1)."
    with pytest.raises(NotForwardPropagating):
        prog("p(X, T-1) :- q(X, T).")


def test_multiple_time_variables_rejected():
    with pytest.raises(MultipleTimeVariables) as e:
        prog("p(X, T) :- q(X, T), r(X, U).")
    assert set(e.value.names) == {"T", "U"}


def test_zero_offset_negation_cycle_rejected():
    with pytest.raises(NotTemporallyStratified) as e:
        prog("p(X, T) :- d(X, T), not q(X, T).\nq(X, T) :- d(X, T), not p(X, T).")
    assert e.value.predicates == {"p", "q"}


def test_negation_through_time_is_fine():
    p = prog("p(X, T) :- d(X, T), not q(X, T-1).\nq(X, T) :- d(X, T), not p(X, T-1).")
    assert len(incrementally_stratify(p)) == 1


def test_unsafe_and_arity():
    with pytest.raises(UnsafeVariable):
        prog("p(X, Y, T) :- q(X, T).")
    with pytest.raises(UnsafeVariable):
        prog("p(X, T) :- q(X, T), not r(Y, T).")
    with pytest.raises(ArityMismatch):
        prog("p(X, T) :- q(X, T).\np(X, T) :- q(X, Y, T).")


def test_all_violations_reported():
    with pytest.raises(NotForwardPropagating) as e:
        prog("p(X, T) :- q(X, T+1).\nr(X, T) :- s(X, T), t(X, U).\nu(X, Y, T) :- s(X, T).")
    kinds = {type(v) for v in e.value.violations}
    assert kinds == {NotForwardPropagating, MultipleTimeVariables, UnsafeVariable}


def test_partition_adds_bridges():
    p = prog("p(X, T) :- e(X, T), p(X, T-1).\np(X, T) :- e(X, T).")
    bridge = "e" + BRIDGE_SUFFIX
    assert bridge in p.intensional
    for i, r in enumerate(p.rules):
        ext = {b.pred in p.extensional for b in r.body}
        assert len(ext) == 1
        assert p.is_extensional_rule(i) == (ext == {True})
    # printing keeps the rules as written
    assert bridge not in p.to_text()


def test_example_programs_validate():
    from tdstream.ec import ec_to_td, parse_ec
    for name in ("device.tdl", "safety.tdl", "traffic.tdl"):
        prog(sample_text(name))
    lars_to_td(parse_lars(sample_text("network.lars")))
    ec_to_td(parse_ec(sample_text("safety.ec")))


def _min_strata(p):
    """Independent count: 1 + most negative edges on any zero-offset path."""
    g = dependency_graph(p.rules, p.arities)

    @lru_cache(None)
    def depth(q):
        best = 0
        for u, _, d in g.in_edges(q, data=True):
            if u != q:
                best = max(best, depth(u) + int(d["negative"]))
        return best

    return 1 + max((depth(q) for q in g.nodes), default=0)


def _acyclic_except_self(p):
    import networkx as nx
    g = dependency_graph(p.rules, p.arities)
    g = nx.DiGraph((u, v) for u, v in g.edges() if u != v)
    return nx.is_directed_acyclic_graph(g)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_stratification_is_valid_and_minimal(rng):
    p = td_program(random.Random(rng.random()))
    s = incrementally_stratify(p)
    assert s.check(p.rules) == []
    assert set(s.stratum_of) == set(p.arities)
    assert all(s.strata)
    if _acyclic_except_self(p):
        assert len(s) == _min_strata(p)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_horizon_covers_every_offset(rng):
    p = td_program(random.Random(rng.random()))
    k = forget_horizon(p)
    for r in p.rules:
        for b in r.body:
            assert 0 <= b.offset <= k[b.pred]


def test_self_negation_rejected():
    with pytest.raises(NotTemporallyStratified) as e:
        prog("p(X, T) :- q(X, T), not p(X, T).")
    assert e.value.cycle == [("p", "p", True)]


def test_no_zero_offset_literals_gives_one_stratum():
    p = prog("p(X, T) :- q(X, T-1), not r(X, T-2).\nr(X, T) :- p(X, T-1).")
    s = incrementally_stratify(p)
    assert len(s) == 1 and s.strata[0] == set(p.arities)


def test_head_only_predicate_has_zero_horizon():
    p = prog("p(X, T) :- q(X, T-3).")
    assert forget_horizon(p) == {"p": 0, "q": 3}


def test_reported_cycle_replays():
    rules = parse_tdl("a(X,T) :- e(X,T), not b(X,T).\nb(X,T) :- c(X,T).\nc(X,T) :- e(X,T), a(X,T).")
    with pytest.raises(NotTemporallyStratified) as e:
        validate(rules)
    cyc = e.value.cycle
    assert cyc[0][0] == cyc[-1][1]
    assert any(neg for _, _, neg in cyc)
    g = dependency_graph(rules, ["a", "b", "c", "e"])
    for u, v, neg in cyc:
        assert any(d["negative"] == neg for d in g.get_edge_data(u, v).values())


def test_translated_lars_matches_brute_force_layering():
    import itertools
    p = lars_to_td(parse_lars(sample_text("network.lars")))
    g = dependency_graph(p.rules, p.arities)
    preds = sorted(p.arities)

    def ok(level):
        return all(level[v] > level[u] if d["negative"] else level[v] >= level[u]
                   for u, v, d in g.edges(data=True))

    assert not any(ok(dict(zip(preds, lv))) for lv in [(1,) * len(preds)])
    layered = [dict(zip(preds, lv)) for lv in itertools.product((1, 2), repeat=len(preds))]
    valid = [lv for lv in layered if ok(lv)]
    assert valid and all(lv["repair"] < lv["unverified"] for lv in valid)
    s = incrementally_stratify(p)
    assert len(s) == 2 and ok(dict(s.stratum_of))
