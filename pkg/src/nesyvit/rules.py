"""Rule-set data model and its text format.

A rule set is an ordered list of class rules plus definitions for the
``abN`` exception predicates they reference.  The text format is one rule
per line, e.g.::

    target(X,'bedroom') :- bed1(X), not ab1(X).
    ab1(X) :- lamp1(X).

``%`` starts a comment.  ``% neurons:`` / ``% classes:`` comment directives
carry the full predicate and class inventories so that serialization
round-trips exactly; without them the inventories are inferred from the
rules in order of first appearance.  Heads of class rules may use either
the ``target`` or ``label`` functor on input; output always uses ``target``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import FormatError

AB_NAME = re.compile(r"ab[0-9]+\Z")
NAME_CHARS = re.compile(r"[A-Za-z0-9_]+")
HEAD_FUNCTORS = ("target", "label")


class RuleSyntaxError(FormatError):
    """Rule text that does not conform to the grammar."""


@dataclass(frozen=True)
class Literal:
    """A body literal: predicate name plus a negation-as-failure flag."""

    pred: str
    negated: bool = False

    def render(self) -> str:
        text = f"{self.pred}(X)"
        return f"not {text}" if self.negated else text


@dataclass
class Rule:
    """One rule: conditions (body) plus negated exception references.

    ``head`` is a class name for class rules or an ``abN`` id for exception
    rules.  ``exceptions`` holds ab ids; each renders as ``not abN(X)``.
    """

    head: str
    body: list[Literal] = field(default_factory=list)
    exceptions: list[str] = field(default_factory=list)

    def render(self, head_text: str) -> str:
        parts = [lit.render() for lit in self.body]
        parts += [f"not {ab}(X)" for ab in self.exceptions]
        if not parts:
            return f"{head_text}."
        return f"{head_text} :- {', '.join(parts)}."


@dataclass
class RuleSet:
    rules: list[Rule] = field(default_factory=list)
    ab_rules: dict[str, list[Rule]] = field(default_factory=dict)
    neuron_names: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def rule_text(self, rule: Rule) -> str:
        if AB_NAME.match(rule.head):
            return rule.render(f"{rule.head}(X)")
        return rule.render(f"target(X,'{rule.head}')")


def validate_ruleset(rs: RuleSet) -> None:
    """Check referential integrity, stratification, and body sanity."""
    neuron_set = set(rs.neuron_names)
    if len(neuron_set) != len(rs.neuron_names):
        raise ValueError("duplicate neuron names")
    for name in rs.neuron_names:
        if AB_NAME.match(name):
            raise ValueError(f"neuron name {name!r} collides with the reserved ab pattern")

    def check_rule(rule: Rule, owner: str) -> None:
        seen: set[str] = set()
        for lit in rule.body:
            if AB_NAME.match(lit.pred):
                raise ValueError(
                    f"{owner}: exception predicate {lit.pred!r} must appear as 'not {lit.pred}'"
                )
            if lit.pred not in neuron_set:
                raise ValueError(f"{owner}: unknown predicate {lit.pred!r}")
            if lit.pred in seen:
                raise ValueError(f"{owner}: duplicate predicate {lit.pred!r} in body")
            seen.add(lit.pred)
        for ab in rule.exceptions:
            if ab not in rs.ab_rules:
                raise ValueError(f"{owner}: undefined exception predicate {ab!r}")
            if ab in seen:
                raise ValueError(f"{owner}: duplicate predicate {ab!r} in body")
            seen.add(ab)

    class_set = set(rs.class_names)
    for i, rule in enumerate(rs.rules):
        if rule.head not in class_set:
            raise ValueError(f"rule {i + 1}: unknown class {rule.head!r}")
        check_rule(rule, f"rule {i + 1}")
    for ab, defs in rs.ab_rules.items():
        if not defs:
            raise ValueError(f"{ab}: exception predicate has no defining rules")
        for j, rule in enumerate(defs):
            if rule.head != ab:
                raise ValueError(f"{ab}: defining rule {j + 1} has head {rule.head!r}")
            check_rule(rule, f"{ab} rule {j + 1}")

    # Stratification: every ab reference is negated, so any dependency cycle
    # among ab predicates is a cycle through negation.
    state: dict[str, int] = {}

    def visit(ab: str) -> None:
        mark = state.get(ab, 0)
        if mark == 1:
            raise ValueError(f"exception predicate cycle through {ab!r}")
        if mark == 2:
            return
        state[ab] = 1
        for rule in rs.ab_rules[ab]:
            for dep in rule.exceptions:
                visit(dep)
        state[ab] = 2

    for ab in rs.ab_rules:
        visit(ab)


def serialize(rs: RuleSet, header_comment: str | None = None, inventory: bool = True) -> str:
    """Render a rule set as text; class rules first, then ab definitions."""
    lines: list[str] = []
    if header_comment:
        lines.append(f"% {header_comment}")
    if inventory:
        lines.append(f"% neurons: {','.join(rs.neuron_names)}")
        lines.append(f"% classes: {','.join(rs.class_names)}")
    for rule in rs.rules:
        lines.append(rs.rule_text(rule))
    for ab in rs.ab_rules:
        for rule in rs.ab_rules[ab]:
            lines.append(rs.rule_text(rule))
    return "\n".join(lines) + "\n"


def save_rules(rs: RuleSet, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(rs, header_comment=header_comment))


def load_rules(path: str) -> RuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), source=path)


class _LineScanner:
    """Cursor over one line of rule text with positioned errors."""

    def __init__(self, text: str, source: str, lineno: int):
        self.text = text
        self.source = source
        self.lineno = lineno
        self.pos = 0

    def error(self, message: str) -> RuleSyntaxError:
        return RuleSyntaxError(f"{self.source}:{self.lineno}:{self.pos + 1}: {message}")

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, token: str) -> None:
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            raise self.error(f"expected {token!r}")
        self.pos += len(token)

    def name(self) -> str:
        self.skip_ws()
        match = NAME_CHARS.match(self.text, self.pos)
        if not match:
            raise self.error("expected a predicate name")
        self.pos = match.end()
        return match.group(0)

    def variable(self) -> str:
        self.expect("(")
        self.skip_ws()
        match = NAME_CHARS.match(self.text, self.pos)
        if not match:
            raise self.error("expected a variable")
        self.pos = match.end()
        self.expect(")")
        return match.group(0)

    def quoted_or_bare(self) -> str:
        self.skip_ws()
        if self.peek() == "'":
            end = self.text.find("'", self.pos + 1)
            if end < 0:
                raise self.error("unterminated quoted name")
            value = self.text[self.pos + 1 : end]
            self.pos = end + 1
            return value
        return self.name()

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def _strip_comment(line: str) -> str:
    """Remove a trailing % comment, ignoring % inside quoted names."""
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def _parse_line(sc: _LineScanner) -> tuple[str, bool, Rule]:
    """Parse one rule line; returns (head, is_ab, rule)."""
    functor = sc.name()
    if AB_NAME.match(functor):
        sc.variable()
        head, is_ab = functor, True
    elif functor in HEAD_FUNCTORS:
        sc.expect("(")
        sc.skip_ws()
        match = NAME_CHARS.match(sc.text, sc.pos)
        if not match:
            raise sc.error("expected a variable")
        sc.pos = match.end()
        sc.expect(",")
        head = sc.quoted_or_bare()
        sc.expect(")")
        is_ab = False
    else:
        raise sc.error(f"unknown head functor {functor!r}")

    rule = Rule(head=head)
    sc.skip_ws()
    if sc.peek() == ".":
        sc.pos += 1
    else:
        sc.expect(":-")
        while True:
            sc.skip_ws()
            negated = False
            if re.match(r"not\b", sc.text[sc.pos :]):
                negated = True
                sc.pos += 3
            pred = sc.name()
            sc.variable()
            if AB_NAME.match(pred):
                if not negated:
                    raise sc.error(f"exception predicate {pred!r} must be negated")
                rule.exceptions.append(pred)
            else:
                rule.body.append(Literal(pred=pred, negated=negated))
            sc.skip_ws()
            if sc.peek() == ",":
                sc.pos += 1
                continue
            if sc.peek() == ".":
                sc.pos += 1
                break
            raise sc.error("expected ',' or '.'")
    if not sc.at_end():
        raise sc.error("trailing text after rule")
    return rule.head, is_ab, rule


def parse(text: str, source: str = "<rules>") -> RuleSet:
    """Parse rule text into a validated RuleSet."""
    declared_neurons: list[str] | None = None
    declared_classes: list[str] | None = None
    class_rules: list[Rule] = []
    ab_rules: dict[str, list[Rule]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("%"):
            content = stripped[1:].strip()
            for directive, target in (("neurons:", "neurons"), ("classes:", "classes")):
                if content.startswith(directive):
                    names = [t.strip() for t in content[len(directive):].split(",") if t.strip()]
                    if target == "neurons" and declared_neurons is None:
                        declared_neurons = names
                    elif target == "classes" and declared_classes is None:
                        declared_classes = names
            continue
        line = _strip_comment(raw).strip()
        if not line:
            continue
        sc = _LineScanner(line, source, lineno)
        head, is_ab, rule = _parse_line(sc)
        if is_ab:
            ab_rules.setdefault(head, []).append(rule)
        else:
            class_rules.append(rule)

    # Inventories: declared via directives, or inferred in appearance order.
    seen_neurons: list[str] = []
    seen_set: set[str] = set()
    seen_classes: list[str] = []
    class_set: set[str] = set()
    all_rules = class_rules + [r for defs in ab_rules.values() for r in defs]
    for rule in class_rules:
        if rule.head not in class_set:
            class_set.add(rule.head)
            seen_classes.append(rule.head)
    for rule in all_rules:
        for lit in rule.body:
            if lit.pred not in seen_set:
                seen_set.add(lit.pred)
                seen_neurons.append(lit.pred)

    neuron_names = declared_neurons if declared_neurons is not None else seen_neurons
    class_names = declared_classes if declared_classes is not None else seen_classes
    rs = RuleSet(
        rules=class_rules,
        ab_rules=ab_rules,
        neuron_names=neuron_names,
        class_names=class_names,
    )
    try:
        validate_ruleset(rs)
    except ValueError as exc:
        raise RuleSyntaxError(f"{source}: {exc}") from None
    return rs
