"""Greedy default-rule induction with exception learning over binary tables.

Rules are grown one literal at a time by information gain.  Default bodies
use asserted literals; residual false positives, when tolerable under the
ratio bound, are delegated to a fresh ``abN`` exception predicate whose
defining rules are learned recursively with the positive and negative
examples swapped.  Rules that end up covering too few examples (the tail
bound) are pruned.

Learning is deterministic: identical tables and parameters produce
identical rule sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryConceptTable, default_neuron_names
from .rules import Literal, Rule, RuleSet, validate_ruleset


@dataclass
class FoldParams:
    """Learner knobs.

    ratio bounds false-positives/true-positives for a rule's default part;
    tail is the minimum number of training examples a class rule must cover
    (a fraction of the table when <= 1, an absolute count otherwise);
    max_exception_depth caps nested exception learning.
    """

    ratio: float = 0.8
    tail: float = 5e-3
    max_exception_depth: int = 4

    def __post_init__(self) -> None:
        if not (0.0 <= self.ratio <= 1.0):
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.tail < 0.0:
            raise ValueError(f"tail must be nonnegative, got {self.tail}")
        if self.max_exception_depth < 0:
            raise ValueError("max_exception_depth must be nonnegative")

    def tail_threshold(self, n: int) -> float:
        """Minimum example count a class rule must cover for a table of n rows."""
        return self.tail * n if self.tail <= 1.0 else self.tail


def _gain(tp: int, fp: int, p: int, n: int) -> float:
    """Information gain of the covered subset relative to the parent set."""
    if tp == 0:
        return 0.0
    return tp * (math.log2(tp / (tp + fp)) - math.log2(p / (p + n)))


def best_literal(
    pos: np.ndarray,
    neg: np.ndarray,
    used: set[str] | None = None,
    names: list[str] | None = None,
    polarity: str = "both",
) -> tuple[Literal, float] | None:
    """Highest-gain unused literal over the given example split, or None.

    Candidate literals assert a column or (with polarity "both") negate it.
    Ties break toward the lower column index, asserted polarity first.
    Returns None when no candidate has strictly positive gain.
    """
    pos = np.asarray(pos, dtype=np.uint8)
    neg = np.asarray(neg, dtype=np.uint8)
    if pos.shape[0] == 0:
        raise ValueError("positive example set must be nonempty")
    if polarity not in ("both", "positive"):
        raise ValueError(f"unknown polarity {polarity!r}")
    d = pos.shape[1]
    if names is None:
        names = default_neuron_names(d)
    used = used or set()
    p, n = pos.shape[0], neg.shape[0]
    pos_ones = pos.sum(axis=0)
    neg_ones = neg.sum(axis=0) if n else np.zeros(d, dtype=np.int64)

    best: tuple[Literal, float] | None = None
    for col in range(d):
        if names[col] in used:
            continue
        candidates = [(False, int(pos_ones[col]), int(neg_ones[col]))]
        if polarity == "both":
            candidates.append((True, p - int(pos_ones[col]), n - int(neg_ones[col])))
        for negated, tp, fp in candidates:
            gain = _gain(tp, fp, p, n)
            if gain > 0.0 and (best is None or gain > best[1]):
                best = (Literal(pred=names[col], negated=negated), gain)
    return best


class _Learner:
    """Shared state for one learning run: names, params, ab allocation."""

    def __init__(self, names: list[str], params: FoldParams):
        self.names = names
        self.col = {name: j for j, name in enumerate(names)}
        self.params = params
        self.ab_count = 0
        self.ab_defs: dict[str, list[Rule]] = {}

    def fresh_ab(self) -> str:
        self.ab_count += 1
        return f"ab{self.ab_count}"

    def covers(self, rule: Rule, rows: np.ndarray) -> np.ndarray:
        """Row mask where the rule fires (body holds, no exception fires)."""
        mask = np.ones(rows.shape[0], dtype=bool)
        for lit in rule.body:
            want = 0 if lit.negated else 1
            mask &= rows[:, self.col[lit.pred]] == want
        for ab in rule.exceptions:
            mask &= ~self.ab_fires(ab, rows)
        return mask

    def ab_fires(self, ab: str, rows: np.ndarray) -> np.ndarray:
        fired = np.zeros(rows.shape[0], dtype=bool)
        for rule in self.ab_defs[ab]:
            fired |= self.covers(rule, rows)
        return fired

    def learn_rule(
        self,
        head: str,
        pos: np.ndarray,
        growth_neg: np.ndarray,
        gate_neg: np.ndarray | None,
        depth: int,
    ) -> Rule | None:
        """One default rule for head, or None when the ratio bound fails.

        Literals are grown by gain against growth_neg; the false-positive
        ratio gate and exception learning run against gate_neg (the rows a
        firing rule would actually claim).  The pools coincide except in
        the multi-class driver, where growth sees every other-class row but
        the gate sees only rows not yet claimed by earlier rules.
        """
        if gate_neg is None:
            gate_neg = growth_neg
        body: list[Literal] = []
        used: set[str] = set()
        cur_pos, cur_growth, cur_gate = pos, growth_neg, gate_neg
        while cur_growth.shape[0] > 0:
            found = best_literal(cur_pos, cur_growth, used, names=self.names, polarity="positive")
            if found is None:
                break
            lit, _ = found
            col = self.col[lit.pred]
            body.append(lit)
            used.add(lit.pred)
            cur_pos = cur_pos[cur_pos[:, col] == 1]
            cur_growth = cur_growth[cur_growth[:, col] == 1]
            cur_gate = cur_gate[cur_gate[:, col] == 1]

        rule = Rule(head=head, body=body)
        if cur_gate.shape[0] == 0:
            return rule
        tp, fp = cur_pos.shape[0], cur_gate.shape[0]
        if tp == 0 or fp / tp > self.params.ratio:
            return None
        if depth >= self.params.max_exception_depth:
            return rule  # depth bound reached: keep the residual false positives

        # Swap: learn what distinguishes the covered negatives, as exceptions.
        ab_id = self.fresh_ab()
        ab_list: list[Rule] = []
        rem = cur_gate
        while rem.shape[0] > 0:
            sub = self.learn_rule(ab_id, rem, cur_pos, None, depth + 1)
            if sub is None:
                break
            covered = self.covers(sub, rem)
            if not covered.any():
                break
            ab_list.append(sub)
            rem = rem[~covered]
        if ab_list:
            self.ab_defs[ab_id] = ab_list
            rule.exceptions.append(ab_id)
        return rule


def learn_rule(
    pos: np.ndarray,
    neg: np.ndarray,
    params: FoldParams | None = None,
    depth: int = 0,
    head: str = "head",
    names: list[str] | None = None,
) -> tuple[Rule, dict[str, list[Rule]]] | None:
    """Learn a single rule for head; returns (rule, new ab definitions)."""
    pos = np.asarray(pos, dtype=np.uint8)
    neg = np.asarray(neg, dtype=np.uint8)
    if pos.shape[0] == 0:
        raise ValueError("positive example set must be nonempty")
    params = params or FoldParams()
    if names is None:
        names = default_neuron_names(pos.shape[1])
    learner = _Learner(names, params)
    rule = learner.learn_rule(head, pos, neg, None, depth)
    if rule is None:
        return None
    return rule, _reachable_abs([rule], learner.ab_defs)


def _reachable_abs(rules: list[Rule], ab_defs: dict[str, list[Rule]]) -> dict[str, list[Rule]]:
    """Keep only ab definitions reachable from the kept class rules."""
    keep: dict[str, list[Rule]] = {}
    stack = [ab for rule in rules for ab in rule.exceptions]
    while stack:
        ab = stack.pop()
        if ab in keep:
            continue
        keep[ab] = ab_defs[ab]
        for rule in ab_defs[ab]:
            stack.extend(rule.exceptions)
    # Deterministic ordering by allocation number.
    return {ab: keep[ab] for ab in sorted(keep, key=lambda a: int(a[2:]))}


def learn(table: BinaryConceptTable, params: FoldParams | None = None) -> RuleSet:
    """Induce an ordered rule set from a binary concept table.

    Repeatedly targets the class with the most unclaimed examples (ties to
    the lower class index) and learns one rule: literal growth runs against
    every other-class row, while the ratio gate and exceptions see only the
    rows still unclaimed, i.e. exactly what reaches this position of the
    decision list under first-match evaluation.  An appended rule claims
    every row it fires on.  Classes for which no rule survives the ratio
    and tail bounds are left uncovered (the interpreter abstains there).
    """
    params = params or FoldParams()
    if table.n == 0:
        raise ValueError("table must be nonempty")
    present = [int(c) for c in np.unique(table.labels)]
    if len(present) < 2:
        raise ValueError("rule learning needs at least 2 classes in the table")
    threshold = params.tail_threshold(table.n)

    learner = _Learner(list(table.neuron_names), params)
    growth_neg = {c: table.bits[table.labels != c] for c in present}
    unclaimed = np.ones(table.n, dtype=bool)
    exhausted: set[int] = set()
    rules: list[Rule] = []
    while True:
        live = [
            (c, int((unclaimed & (table.labels == c)).sum()))
            for c in present
            if c not in exhausted
        ]
        live = [(c, count) for c, count in live if count > 0]
        if not live or sum(count for _, count in live) < threshold:
            break
        live.sort(key=lambda item: (-item[1], item[0]))
        c = live[0][0]
        pos = table.bits[unclaimed & (table.labels == c)]
        gate_neg = table.bits[unclaimed & (table.labels != c)]
        rule = learner.learn_rule(table.class_names[c], pos, growth_neg[c], gate_neg, depth=0)
        if rule is None:
            exhausted.add(c)
            continue
        tp = int(learner.covers(rule, pos).sum())
        if tp == 0 or tp < threshold:
            exhausted.add(c)  # prune the rule; class left uncovered
            continue
        rules.append(rule)
        unclaimed &= ~learner.covers(rule, table.bits)

    rs = RuleSet(
        rules=rules,
        ab_rules=_reachable_abs(rules, learner.ab_defs),
        neuron_names=list(table.neuron_names),
        class_names=list(table.class_names),
    )
    validate_ruleset(rs)
    return rs
