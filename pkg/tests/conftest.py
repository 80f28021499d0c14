"""Shared test helpers: fixture paths, a random rule-set generator, and an
independent bottom-up evaluator used as the oracle for the top-down runtime."""
from __future__ import annotations

import os

import numpy as np

from nesyvit.rules import Literal, Rule, RuleSet, validate_ruleset

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def fixture_text(name: str) -> str:
    with open(fixture_path(name), "r", encoding="utf-8") as fh:
        return fh.read()


def random_ruleset(
    rng: np.random.Generator,
    max_neurons: int = 6,
    max_rules: int = 8,
    max_depth: int = 2,
) -> RuleSet:
    """Random stratified rule set within the given size bounds."""
    d = int(rng.integers(1, max_neurons + 1))
    neurons = [f"n{j}" for j in range(d)]
    classes = [f"c{j}" for j in range(int(rng.integers(1, 4)))]
    ab_defs: dict[str, list[Rule]] = {}
    counter = [0]

    def make_rule(head: str, depth: int) -> Rule:
        n_body = int(rng.integers(0, min(3, d) + 1))
        cols = rng.choice(d, size=n_body, replace=False)
        body = [Literal(neurons[int(c)], bool(rng.integers(0, 2))) for c in sorted(cols)]
        exceptions: list[str] = []
        if depth < max_depth and rng.random() < 0.4:
            counter[0] += 1
            ab_id = f"ab{counter[0]}"
            defs = [make_rule(ab_id, depth + 1) for _ in range(int(rng.integers(1, 3)))]
            ab_defs[ab_id] = defs
            exceptions.append(ab_id)
        return Rule(head=head, body=body, exceptions=exceptions)

    n_rules = int(rng.integers(1, max_rules + 1))
    rules = [make_rule(classes[int(rng.integers(len(classes)))], 0) for _ in range(n_rules)]
    rs = RuleSet(rules=rules, ab_rules=ab_defs, neuron_names=neurons, class_names=classes)
    validate_ruleset(rs)
    return rs


def _body_holds(rule: Rule, env: dict[str, int], ab_truth: dict[str, bool]) -> bool:
    for lit in rule.body:
        value = env[lit.pred] == 1
        if (not value) if lit.negated else value:
            continue
        return False
    return all(not ab_truth[ab] for ab in rule.exceptions)


def model_classify(rs: RuleSet, bits) -> tuple[str | None, int | None]:
    """Oracle: compute the full stratified model bottom-up, then pick the
    first class rule whose body is true in the model."""
    env = {name: int(v) for name, v in zip(rs.neuron_names, np.asarray(bits).reshape(-1))}
    ab_truth: dict[str, bool] = {}
    remaining = dict(rs.ab_rules)
    while remaining:
        progressed = False
        for ab in list(remaining):
            deps = {x for rule in remaining[ab] for x in rule.exceptions}
            if deps <= set(ab_truth):
                ab_truth[ab] = any(_body_holds(r, env, ab_truth) for r in remaining[ab])
                del remaining[ab]
                progressed = True
        assert progressed, "ab dependency graph is not stratified"
    for index, rule in enumerate(rs.rules):
        if _body_holds(rule, env, ab_truth):
            return rule.head, index
    return None, None
