"""Top-down rule-set evaluation over binarized concept vectors.

Class rules are scanned in order; a rule fires when every body literal
holds against the bit vector and every ``not abN`` goal fails, with the
``abN`` predicates evaluated recursively over their own rules (negation as
failure).  The first firing rule decides the class; if none fires the
prediction abstains.  ``justify`` records the same evaluation as a trace.

Rule sets are immutable once built, so everything here is pure and safe to
run concurrently over samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BinaryConceptTable
from .rules import Rule, RuleSet


@dataclass
class Prediction:
    class_name: str | None
    fired_rule_index: int | None

    @property
    def abstained(self) -> bool:
        return self.class_name is None


@dataclass
class LiteralTrace:
    text: str
    holds: bool
    sub: list["RuleTrace"] = field(default_factory=list)


@dataclass
class RuleTrace:
    rule_text: str
    fired: bool
    literals: list[LiteralTrace] = field(default_factory=list)


@dataclass
class Justification:
    """Per-rule evaluation records, in scan order, ending at the fired rule."""

    traces: list[RuleTrace]
    prediction: Prediction


@dataclass
class RuleSetStats:
    rules: int
    unique_predicates: int
    size: int


@dataclass
class Evaluation:
    accuracy: float
    class_names: list[str]
    predicted_names: list[str]  # confusion columns: these plus abstain
    confusion: np.ndarray
    support: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def to_csv(self) -> str:
        lines = ["class,precision,recall,support"]
        for i, name in enumerate(self.class_names):
            lines.append(f"{name},{self.precision[i]:.6f},{self.recall[i]:.6f},{int(self.support[i])}")
        lines.append(f"accuracy,{self.accuracy:.6f},,{int(self.support.sum())}")
        return "\n".join(lines) + "\n"


def _bit_env(rs: RuleSet, bits) -> dict[str, int]:
    values = np.asarray(bits).reshape(-1)
    if values.shape[0] != len(rs.neuron_names):
        raise ValueError(
            f"bit vector has {values.shape[0]} entries, rule set expects {len(rs.neuron_names)}"
        )
    if values.size and not np.isin(values, (0, 1)).all():
        raise ValueError("bit vector entries must be 0 or 1")
    return {name: int(v) for name, v in zip(rs.neuron_names, values)}


def _rule_fires(rs: RuleSet, rule: Rule, env: dict[str, int], memo: dict[str, bool]) -> bool:
    for lit in rule.body:
        holds = env[lit.pred] == 1
        if lit.negated:
            holds = not holds
        if not holds:
            return False
    for ab in rule.exceptions:
        if _ab_fires(rs, ab, env, memo):
            return False
    return True


def _ab_fires(rs: RuleSet, ab: str, env: dict[str, int], memo: dict[str, bool]) -> bool:
    if ab not in memo:
        memo[ab] = any(_rule_fires(rs, rule, env, memo) for rule in rs.ab_rules[ab])
    return memo[ab]


def classify(rs: RuleSet, bits) -> Prediction:
    """First-match prediction for one binarized vector."""
    env = _bit_env(rs, bits)
    memo: dict[str, bool] = {}
    for index, rule in enumerate(rs.rules):
        if _rule_fires(rs, rule, env, memo):
            return Prediction(class_name=rule.head, fired_rule_index=index)
    return Prediction(class_name=None, fired_rule_index=None)


def _trace_rule(rs: RuleSet, rule: Rule, env: dict[str, int]) -> RuleTrace:
    fired = True
    literals: list[LiteralTrace] = []
    for lit in rule.body:
        value = env[lit.pred] == 1
        holds = (not value) if lit.negated else value
        literals.append(LiteralTrace(text=lit.render(), holds=holds))
        fired = fired and holds
    for ab in rule.exceptions:
        sub: list[RuleTrace] = []
        ab_fired = False
        for ab_rule in rs.ab_rules[ab]:
            trace = _trace_rule(rs, ab_rule, env)
            sub.append(trace)
            if trace.fired:
                ab_fired = True
                break
        literals.append(LiteralTrace(text=f"not {ab}(X)", holds=not ab_fired, sub=sub))
        fired = fired and not ab_fired
    return RuleTrace(rule_text=rs.rule_text(rule), fired=fired, literals=literals)


def justify(rs: RuleSet, bits) -> Justification:
    """Trace the evaluation that classify performs, rule by rule."""
    env = _bit_env(rs, bits)
    traces: list[RuleTrace] = []
    for index, rule in enumerate(rs.rules):
        trace = _trace_rule(rs, rule, env)
        traces.append(trace)
        if trace.fired:
            return Justification(
                traces=traces,
                prediction=Prediction(class_name=rule.head, fired_rule_index=index),
            )
    return Justification(traces=traces, prediction=Prediction(None, None))


def render_justification(j: Justification) -> str:
    lines: list[str] = []

    def emit(trace: RuleTrace, depth: int) -> None:
        pad = "  " * depth
        verdict = "fired" if trace.fired else "failed"
        lines.append(f"{pad}{trace.rule_text}  [{verdict}]")
        for lit in trace.literals:
            mark = "holds" if lit.holds else "fails"
            lines.append(f"{pad}  {lit.text}  [{mark}]")
            for sub in lit.sub:
                emit(sub, depth + 2)

    for trace in j.traces:
        emit(trace, 0)
    if j.prediction.abstained:
        lines.append("prediction: abstain")
    else:
        lines.append(f"prediction: {j.prediction.class_name}")
    return "\n".join(lines) + "\n"


def evaluate(rs: RuleSet, table: BinaryConceptTable) -> Evaluation:
    """Accuracy and confusion over a table; abstentions count as errors."""
    if table.n == 0:
        raise ValueError("cannot evaluate on an empty table")
    predicted_names = list(rs.class_names)
    pred_col = {name: j for j, name in enumerate(predicted_names)}
    abstain_col = len(predicted_names)
    confusion = np.zeros((len(table.class_names), abstain_col + 1), dtype=np.int64)
    correct = 0
    for i in range(table.n):
        prediction = classify(rs, table.bits[i])
        true_name = table.class_names[table.labels[i]]
        if prediction.abstained:
            col = abstain_col
        else:
            col = pred_col[prediction.class_name]
            if prediction.class_name == true_name:
                correct += 1
        confusion[table.labels[i], col] += 1

    support = confusion.sum(axis=1).astype(np.float64)
    precision = np.zeros(len(table.class_names))
    recall = np.zeros(len(table.class_names))
    for i, name in enumerate(table.class_names):
        hits = confusion[i, pred_col[name]] if name in pred_col else 0
        predicted_total = confusion[:, pred_col[name]].sum() if name in pred_col else 0
        precision[i] = hits / predicted_total if predicted_total else 0.0
        recall[i] = hits / support[i] if support[i] else 0.0
    return Evaluation(
        accuracy=correct / table.n,
        class_names=list(table.class_names),
        predicted_names=predicted_names + ["<abstain>"],
        confusion=confusion,
        support=support,
        precision=precision,
        recall=recall,
    )


def stats(rs: RuleSet) -> RuleSetStats:
    """Rule, distinct-predicate, and body-occurrence counts.

    Exception (abN) defining rules count as rules, and their bodies (plus
    every ``not abN`` goal) count toward size and distinctness.
    """
    all_rules = list(rs.rules) + [r for defs in rs.ab_rules.values() for r in defs]
    names: set[str] = set()
    size = 0
    for rule in all_rules:
        for lit in rule.body:
            names.add(lit.pred)
            size += 1
        for ab in rule.exceptions:
            names.add(ab)
            size += 1
    return RuleSetStats(rules=len(all_rules), unique_predicates=len(names), size=size)
