import numpy as np
import pytest

from conftest import fixture_text, random_ruleset
from nesyvit.rules import (
    Literal,
    Rule,
    RuleSet,
    RuleSyntaxError,
    parse,
    serialize,
    validate_ruleset,
)


class TestParse:
    def test_two_class_fixture(self):
        rs = parse(fixture_text("places_p2.lp"))
        assert len(rs.rules) == 2
        assert [len(r.body) for r in rs.rules] == [1, 1]
        assert rs.rules[0].head == "bathroom"
        assert rs.rules[0].body[0] == Literal("bathroom_tiles1_shower_screen1", negated=False)
        assert rs.class_names == ["bathroom", "bedroom"]

    def test_negated_plain_literals(self):
        rs = parse(fixture_text("places_p3_1.lp"))
        assert all(len(r.body) == 1 and r.body[0].negated for r in rs.rules)

    def test_numeric_predicate_names_and_label_functor(self):
        rs = parse(fixture_text("places_p10_raw.lp"))
        assert len(rs.rules) == 10
        assert rs.rules[0].body == [Literal("14"), Literal("83", negated=True)]
        # Output always uses the target functor.
        assert "target(X,'bedroom')" in serialize(rs)

    def test_dangling_exception_reference(self):
        with pytest.raises(RuleSyntaxError, match="undefined exception"):
            parse("target(X,'c') :- n0(X), not ab1(X).\n")

    def test_positive_ab_literal_rejected(self):
        with pytest.raises(RuleSyntaxError, match="must be negated"):
            parse("target(X,'c') :- ab1(X).\nab1(X) :- n0(X).\n")

    def test_duplicate_predicate_in_body(self):
        with pytest.raises(RuleSyntaxError, match="duplicate"):
            parse("target(X,'c') :- n0(X), not n0(X).\n")

    def test_cycle_through_negation(self):
        text = (
            "target(X,'c') :- not ab1(X).\n"
            "ab1(X) :- not ab2(X).\n"
            "ab2(X) :- not ab1(X).\n"
        )
        with pytest.raises(RuleSyntaxError, match="cycle"):
            parse(text)

    def test_self_cycle(self):
        with pytest.raises(RuleSyntaxError, match="cycle"):
            parse("target(X,'c') :- not ab1(X).\nab1(X) :- not ab1(X).\n")

    def test_missing_period(self):
        with pytest.raises(RuleSyntaxError, match=r":1:"):
            parse("target(X,'c') :- n0(X)\n")

    def test_unknown_functor(self):
        with pytest.raises(RuleSyntaxError, match="unknown head functor"):
            parse("foo(X,'c') :- n0(X).\n")

    def test_facts_parse(self):
        rs = parse("target(X,'c').\n")
        assert rs.rules[0].body == [] and rs.rules[0].exceptions == []

    def test_comments_and_blank_lines(self):
        rs = parse("% a comment\n\ntarget(X,'c') :- n0(X). % trailing\n")
        assert len(rs.rules) == 1

    def test_inventory_directives(self):
        text = "% neurons: a,b,c\n% classes: x,y\ntarget(X,'x') :- a(X).\n"
        rs = parse(text)
        assert rs.neuron_names == ["a", "b", "c"]
        assert rs.class_names == ["x", "y"]

    def test_directive_unknown_neuron_rejected(self):
        with pytest.raises(RuleSyntaxError, match="unknown predicate"):
            parse("% neurons: a\ntarget(X,'x') :- zz(X).\n")


class TestSerialize:
    def test_round_trip_simple(self):
        rs = RuleSet(
            rules=[Rule(head="a", body=[Literal("n0")], exceptions=["ab1"])],
            ab_rules={"ab1": [Rule(head="ab1", body=[Literal("n1", negated=True)])]},
            neuron_names=["n0", "n1"],
            class_names=["a"],
        )
        validate_ruleset(rs)
        assert parse(serialize(rs)) == rs

    def test_round_trip_random(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            rs = random_ruleset(rng)
            assert parse(serialize(rs)) == rs

    def test_serialization_order_is_rule_order(self):
        rs = parse(fixture_text("places_p5.lp"))
        lines = [l for l in serialize(rs).splitlines() if l.startswith("target")]
        heads = [l.split("'")[1] for l in lines]
        assert heads == ["bathroom", "living_room", "dining_room", "bedroom", "kitchen"]

    def test_fact_serialization(self):
        rs = parse("target(X,'c').\n")
        assert "target(X,'c')." in serialize(rs)
