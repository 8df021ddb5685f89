"""Prioritized condition -> action rules for auto-approval.

Rule files are line-oriented:

    # comment
    R1 10 amount > 10000 AND region = "offshore" -> escalate

One rule per line: id, integer priority (lower wins), a boolean condition
over declared case fields, `->`, and an action. Conditions support the
comparisons = != < <= > >= (unicode forms accepted), AND / OR / NOT and
parentheses. Evaluation is first-match in (priority, file order); no rule
matching yields the set's default action with matched = False.

Conditions compile once into scalar and vectorized closures, so a parsed
RuleSet evaluates quickly on both single cases and event batches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional

import numpy as np

MAX_EXPR_DEPTH = 32


class RuleAction(str, Enum):
    APPROVE = "approve"
    REJECT = "reject"
    ESCALATE = "escalate"


# field name -> "number" | "string"; conditions may reference nothing else
FIELD_TYPES: dict[str, str] = {
    "amount": "number",
    "timestamp": "number",
    "account": "string",
    "region": "string",
    "channel": "string",
    "risk_score": "number",
    "anomaly_flag": "string",
    "doc_class": "string",
}


class RuleSyntaxError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class DuplicateId(Exception):
    pass


class UnknownField(Exception):
    pass


class TypeMismatch(Exception):
    pass


class EmptyBatch(Exception):
    pass


# ---------------------------------------------------------------------------
# Condition AST
# ---------------------------------------------------------------------------

_OPS = {
    "=": "eq", "!=": "ne", "≠": "ne",
    "<": "lt", "<=": "le", "≤": "le",
    ">": "gt", ">=": "ge", "≥": "ge",
}

_SCALAR_CMP = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Comparison:
    field: str
    op: str  # canonical: eq ne lt le gt ge
    literal: object  # float or str

    def render(self) -> str:
        op_txt = {"eq": "=", "ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}[self.op]
        if isinstance(self.literal, str):
            lit = f'"{self.literal}"'
        else:
            lit = repr(self.literal) if self.literal != int(self.literal) else str(int(self.literal))
        return f"{self.field} {op_txt} {lit}"


@dataclass(frozen=True)
class NotExpr:
    inner: object

    def render(self) -> str:
        return f"NOT {_render_child(self.inner)}"


@dataclass(frozen=True)
class BoolExpr:
    op: str  # "and" | "or"
    parts: tuple

    def render(self) -> str:
        joiner = " AND " if self.op == "and" else " OR "
        return joiner.join(_render_child(p) for p in self.parts)


def _render_child(node) -> str:
    if isinstance(node, BoolExpr):
        return f"({node.render()})"
    return node.render()


def _compile_scalar(node) -> Callable[[Mapping], bool]:
    if isinstance(node, Comparison):
        field, lit = node.field, node.literal
        cmp = _SCALAR_CMP[node.op]
        want_number = isinstance(lit, float)

        def run(fields: Mapping) -> bool:
            try:
                val = fields[field]
            except KeyError:
                raise UnknownField(f"field '{field}' not present on this case")
            if isinstance(val, str) == want_number:
                raise TypeMismatch(
                    f"field '{field}' value {val!r} incompatible with literal {lit!r}")
            return cmp(val, lit)

        return run
    if isinstance(node, NotExpr):
        inner = _compile_scalar(node.inner)
        return lambda fields: not inner(fields)
    parts = [_compile_scalar(p) for p in node.parts]
    if node.op == "and":
        return lambda fields: all(p(fields) for p in parts)
    return lambda fields: any(p(fields) for p in parts)


def _compile_vector(node) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
    if isinstance(node, Comparison):
        field, lit = node.field, node.literal
        cmp = _SCALAR_CMP[node.op]

        def run(cols: Mapping[str, np.ndarray]) -> np.ndarray:
            return cmp(cols[field], lit)

        return run
    if isinstance(node, NotExpr):
        inner = _compile_vector(node.inner)
        return lambda cols: ~inner(cols)
    parts = [_compile_vector(p) for p in node.parts]
    if node.op == "and":
        def run_and(cols):
            acc = parts[0](cols)
            for p in parts[1:]:
                acc = acc & p(cols)
            return acc
        return run_and

    def run_or(cols):
        acc = parts[0](cols)
        for p in parts[1:]:
            acc = acc | p(cols)
        return acc
    return run_or


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r'\s*(?:(?P<string>"[^"]*")|(?P<arrow>->)|(?P<op><=|>=|!=|≤|≥|≠|[=<>])'
    r'|(?P<lpar>\()|(?P<rpar>\))|(?P<word>[A-Za-z0-9_.\-]+))'
)


def _tokenize(text: str, line_no: int) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise RuleSyntaxError(line_no, f"cannot tokenize near {rest[:20]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line = line_no

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise RuleSyntaxError(self.line, "unexpected end of expression")
        self.pos += 1
        return tok

    def parse_or(self, depth: int = 0):
        self._check_depth(depth)
        parts = [self.parse_and(depth + 1)]
        while self._at_word("OR"):
            self.next()
            parts.append(self.parse_and(depth + 1))
        return parts[0] if len(parts) == 1 else BoolExpr("or", tuple(parts))

    def parse_and(self, depth: int):
        self._check_depth(depth)
        parts = [self.parse_not(depth + 1)]
        while self._at_word("AND"):
            self.next()
            parts.append(self.parse_not(depth + 1))
        return parts[0] if len(parts) == 1 else BoolExpr("and", tuple(parts))

    def parse_not(self, depth: int):
        self._check_depth(depth)
        if self._at_word("NOT"):
            self.next()
            return NotExpr(self.parse_not(depth + 1))
        return self.parse_atom(depth + 1)

    def parse_atom(self, depth: int):
        self._check_depth(depth)
        tok = self.next()
        if tok[0] == "lpar":
            inner = self.parse_or(depth + 1)
            closing = self.next()
            if closing[0] != "rpar":
                raise RuleSyntaxError(self.line, "expected ')'")
            return inner
        if tok[0] != "word":
            raise RuleSyntaxError(self.line, f"expected a field name, got {tok[1]!r}")
        field = tok[1]
        if field not in FIELD_TYPES:
            raise UnknownField(f"line {self.line}: unknown field '{field}'")
        op_tok = self.next()
        if op_tok[0] != "op":
            raise RuleSyntaxError(self.line, f"expected a comparison after '{field}'")
        op = _OPS[op_tok[1]]
        lit_tok = self.next()
        if lit_tok[0] == "string":
            literal: object = lit_tok[1][1:-1]
        elif lit_tok[0] == "word":
            try:
                literal = float(lit_tok[1])
            except ValueError:
                raise RuleSyntaxError(
                    self.line, f"literal {lit_tok[1]!r} is neither a number nor quoted")
        else:
            raise RuleSyntaxError(self.line, f"expected a literal, got {lit_tok[1]!r}")
        expected = FIELD_TYPES[field]
        if expected == "number" and isinstance(literal, str):
            raise TypeMismatch(f"line {self.line}: numeric field '{field}' compared to string")
        if expected == "string" and isinstance(literal, float):
            raise TypeMismatch(f"line {self.line}: string field '{field}' compared to number")
        return Comparison(field, op, literal)

    def _at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "word" and tok[1] == word

    def _check_depth(self, depth: int) -> None:
        if depth > MAX_EXPR_DEPTH:
            raise RuleSyntaxError(self.line, f"expression deeper than {MAX_EXPR_DEPTH}")


# ---------------------------------------------------------------------------
# Rules and rule sets
# ---------------------------------------------------------------------------

@dataclass
class Rule:
    id: str
    priority: int
    condition: object
    action: RuleAction
    file_order: int
    _scalar: Callable = None
    _vector: Callable = None

    def __post_init__(self):
        if self._scalar is None:
            self._scalar = _compile_scalar(self.condition)
        if self._vector is None:
            self._vector = _compile_vector(self.condition)

    def matches(self, fields: Mapping) -> bool:
        return self._scalar(fields)

    def render(self) -> str:
        return f"{self.id} {self.priority} {self.condition.render()} -> {self.action.value}"


@dataclass
class Decision:
    action: RuleAction
    matched_rule_id: Optional[str]
    matched: bool


class RuleSet:
    def __init__(self, rules: list[Rule], default_action: RuleAction = RuleAction.ESCALATE):
        self.default_action = default_action
        self.rules = sorted(rules, key=lambda r: (r.priority, r.file_order))

    def __len__(self) -> int:
        return len(self.rules)

    def canonical_lines(self) -> list[str]:
        return [r.render() for r in self.rules]


def parse_rules(text: str, default_action: RuleAction = RuleAction.ESCALATE) -> RuleSet:
    """Parse a rule file; the first error is reported with its line number."""
    rules: list[Rule] = []
    seen_ids: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = _tokenize(line, line_no)
        if len(tokens) < 5:
            raise RuleSyntaxError(line_no, "expected: <id> <priority> <condition> -> <action>")
        if tokens[0][0] != "word":
            raise RuleSyntaxError(line_no, "rule id must come first")
        rule_id = tokens[0][1]
        if rule_id in seen_ids:
            raise DuplicateId(f"line {line_no}: duplicate rule id '{rule_id}'")
        if tokens[1][0] != "word":
            raise RuleSyntaxError(line_no, "priority must follow the rule id")
        try:
            priority = int(tokens[1][1])
        except ValueError:
            raise RuleSyntaxError(line_no, f"priority {tokens[1][1]!r} is not an integer")
        try:
            arrow = next(i for i, t in enumerate(tokens) if t[0] == "arrow")
        except StopIteration:
            raise RuleSyntaxError(line_no, "missing '->'")
        if arrow != len(tokens) - 2:
            raise RuleSyntaxError(line_no, "exactly one action must follow '->'")
        action_tok = tokens[-1]
        try:
            action = RuleAction(action_tok[1])
        except ValueError:
            raise RuleSyntaxError(line_no, f"unknown action {action_tok[1]!r}")
        parser = _Parser(tokens[2:arrow], line_no)
        condition = parser.parse_or()
        if parser.peek() is not None:
            raise RuleSyntaxError(line_no, f"trailing tokens after condition: {parser.peek()[1]!r}")
        seen_ids.add(rule_id)
        rules.append(Rule(rule_id, priority, condition, action, file_order=len(rules)))
    return RuleSet(rules, default_action=default_action)


def parse_rules_file(path: str, default_action: RuleAction = RuleAction.ESCALATE) -> RuleSet:
    with open(path, "r", encoding="utf-8") as f:
        return parse_rules(f.read(), default_action=default_action)


def evaluate(ruleset: RuleSet, fields: Mapping) -> Decision:
    """First matching rule in (priority, file order) wins; pure, no side effects."""
    for rule in ruleset.rules:
        if rule.matches(fields):
            return Decision(rule.action, rule.id, True)
    return Decision(ruleset.default_action, None, False)


def evaluate_batch(ruleset: RuleSet, columns: Mapping[str, np.ndarray]):
    """Vectorized first-match over a batch.

    columns maps field name -> array. Returns (actions, rule_idx) where
    rule_idx is the index into ruleset.rules or -1 for the default.
    """
    sizes = {len(v) for v in columns.values()}
    if len(sizes) != 1:
        raise ValueError("all columns must have equal length")
    n = sizes.pop()
    rule_idx = np.full(n, -1, dtype=np.int64)
    undecided = np.ones(n, dtype=bool)
    for k, rule in enumerate(ruleset.rules):
        if not undecided.any():
            break
        hit = rule._vector(columns) & undecided
        rule_idx[hit] = k
        undecided &= ~hit
    actions = np.full(n, ACTION_CODE[ruleset.default_action], dtype=np.int8)
    for k, rule in enumerate(ruleset.rules):
        actions[rule_idx == k] = ACTION_CODE[rule.action]
    return actions, rule_idx


ACTION_CODE = {RuleAction.APPROVE: 0, RuleAction.REJECT: 1, RuleAction.ESCALATE: 2}
ACTION_BY_CODE = {v: k for k, v in ACTION_CODE.items()}


def coverage(ruleset: RuleSet, cases: list[Mapping]) -> float:
    """Fraction of cases matched by some rule."""
    if not cases:
        raise EmptyBatch("coverage needs a non-empty batch")
    hits = sum(1 for fields in cases if evaluate(ruleset, fields).matched)
    return hits / len(cases)


def generate_rules(n: int, seed: int = 0) -> str:
    """Synthetic rule files for parser/engine benchmarks."""
    rng = np.random.default_rng(seed)
    regions = ["domestic", "eu", "apac", "offshore"]
    channels = ["online", "branch", "api"]
    actions = ["approve", "reject", "escalate"]
    lines = ["# synthetic benchmark rules"]
    for i in range(n):
        lo = int(rng.integers(0, 500_000))
        hi = lo + int(rng.integers(1, 100_000))
        region = regions[int(rng.integers(0, len(regions)))]
        channel = channels[int(rng.integers(0, len(channels)))]
        action = actions[int(rng.integers(0, len(actions)))]
        priority = int(rng.integers(1, 1000))
        lines.append(
            f'B{i:05d} {priority} amount > {lo} AND amount <= {hi} '
            f'AND (region = "{region}" OR channel = "{channel}") -> {action}'
        )
    return "\n".join(lines) + "\n"
