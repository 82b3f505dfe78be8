import pytest

from tdstream.errors import MultipleTimeVariables, ParseError
from tdstream.syntax import Fact, parse_stream_line, parse_tdl, read_stream
from tdstream.terms import Const, TimeTerm, Var


def test_rule_round_trip():
    text = "sf(X, T) :- sf(X, T-1), not uvf(X, T).\n"
    (r,) = parse_tdl(text)
    assert str(r) == "sf(X,T) :- sf(X,T-1), not uvf(X,T)."
    assert parse_tdl(str(r)) == [r]


def test_constants_and_variables():
    (r,) = parse_tdl("p(a, X, T) :- q(X, b, T-2).")
    assert r.head.args == (Const("a"), Var("X"))
    assert r.body[0].args == (Var("X"), Const("b"))
    assert r.body[0].time == TimeTerm("T", -2)


def test_numeric_constants_and_negation_symbol():
    (r,) = parse_tdl("p(X, T) ← q(X, 42, T), ¬ s(X, T).")
    assert r.body[0].args[1] == Const("42")
    assert r.body[1].negated


def test_comments_are_ignored():
    rules = parse_tdl("% one\np(X,T) :- q(X,T). % two\n")
    assert len(rules) == 1


def test_line_numbers_kept():
    rules = parse_tdl("\n\np(X,T) :- q(X,T).\n")
    assert rules[0].line == 3


@pytest.mark.parametrize("bad", ["p(X,T) :- q(X,T)", "p(X T) :- q(X,T).", "p(X,T) :- .", "p(X,T) q(X,T).", "p(X,T).", "p(X,#) :- q(X,T)."])
def test_syntax_errors(bad):
    with pytest.raises(ParseError):
        parse_tdl(bad)


def test_mixed_time_variables_rejected():
    with pytest.raises(MultipleTimeVariables):
        from tdstream.core import validate
        validate(parse_tdl("p(X,T) :- q(X,T), r(X,U)."))


def test_stream_lines():
    assert parse_stream_line("repair(a)@1") == Fact(1, "repair", ("a",))
    assert parse_stream_line("  connected(a, b) @ 4 ") == Fact(4, "connected", ("a", "b"))
    assert parse_stream_line("tick@3") == Fact(3, "tick", ())
    assert parse_stream_line("@7") == 7
    assert parse_stream_line("") is None
    assert parse_stream_line("% note") is None


def test_stream_reader():
    items = read_stream(["a(x)@1", "", "@2", "b(y)@3"])
    assert items == [Fact(1, "a", ("x",)), 2, Fact(3, "b", ("y",))]


@pytest.mark.parametrize("bad", ["repair(a)", "repair(a)@0", "repair(X@1", "repair(a)@x"])
def test_stream_errors(bad):
    from tdstream.errors import StreamFormatError
    with pytest.raises((StreamFormatError, ParseError)):
        parse_stream_line(bad, 1)
