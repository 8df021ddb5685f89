import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autocomply import rules

from oracles import evaluate_rules_exhaustive


def test_parse_single_rule():
    rs = rules.parse_rules('R1 10 amount > 10000 AND region = "offshore" -> escalate\n')
    assert len(rs) == 1
    rule = rs.rules[0]
    assert rule.id == "R1"
    assert rule.priority == 10
    assert rule.action is rules.RuleAction.ESCALATE


def test_duplicate_id_rejected():
    text = 'R1 10 amount > 1 -> approve\nR1 20 amount > 2 -> reject\n'
    with pytest.raises(rules.DuplicateId):
        rules.parse_rules(text)


def test_truncated_expression_reports_line():
    with pytest.raises(rules.RuleSyntaxError) as err:
        rules.parse_rules("R2 5 amount > -> approve")
    assert err.value.line == 1


def test_error_line_numbers_count_comments():
    text = '# header\nR1 1 amount > 0 -> approve\nR2 2 amount >\n'
    with pytest.raises(rules.RuleSyntaxError) as err:
        rules.parse_rules(text)
    assert err.value.line == 3


def test_unknown_field_rejected():
    with pytest.raises(rules.UnknownField):
        rules.parse_rules('R1 1 wealth > 10 -> approve')


def test_type_mismatch_at_parse():
    with pytest.raises(rules.TypeMismatch):
        rules.parse_rules('R1 1 amount = "big" -> approve')
    with pytest.raises(rules.TypeMismatch):
        rules.parse_rules('R1 1 region > 5 -> approve')


def test_unknown_action_rejected():
    with pytest.raises(rules.RuleSyntaxError):
        rules.parse_rules('R1 1 amount > 5 -> shred')


def test_comments_and_blank_lines_skipped():
    text = "# comment\n\nR1 1 amount <= 5 -> approve  # trailing comment\n"
    rs = rules.parse_rules(text)
    assert len(rs) == 1


def test_unicode_comparison_operators():
    rs = rules.parse_rules('R1 1 amount ≥ 5 AND amount ≤ 10 AND amount ≠ 7 -> approve')
    assert rules.evaluate(rs, {"amount": 6.0}).matched
    assert not rules.evaluate(rs, {"amount": 7.0}).matched
    assert not rules.evaluate(rs, {"amount": 11.0}).matched


def test_not_and_parentheses():
    rs = rules.parse_rules(
        'R1 1 NOT (region = "offshore" OR amount > 100) -> approve')
    assert rules.evaluate(rs, {"region": "eu", "amount": 50.0}).matched
    assert not rules.evaluate(rs, {"region": "offshore", "amount": 50.0}).matched
    assert not rules.evaluate(rs, {"region": "eu", "amount": 500.0}).matched


def test_expression_depth_limit():
    condition = "(" * 40 + "amount > 1" + ")" * 40
    with pytest.raises(rules.RuleSyntaxError):
        rules.parse_rules(f"R1 1 {condition} -> approve")


def test_empty_ruleset_yields_default_escalate():
    rs = rules.RuleSet([])
    decision = rules.evaluate(rs, {"amount": 1.0})
    assert decision.action is rules.RuleAction.ESCALATE
    assert not decision.matched
    assert decision.matched_rule_id is None


def test_single_match_trace():
    rs = rules.parse_rules(
        "R1 10 amount > 10000 -> escalate\nR2 20 amount <= 10000 -> approve\n")
    decision = rules.evaluate(rs, {"amount": 5000.0})
    assert decision.action is rules.RuleAction.APPROVE
    assert decision.matched_rule_id == "R2"


def test_equal_priority_earlier_in_file_wins():
    rs = rules.parse_rules(
        "R1 10 amount > 0 -> approve\nR2 10 amount > 0 -> reject\n")
    fields = {"amount": 5.0}
    decision = rules.evaluate(rs, fields)
    action, rule_id = evaluate_rules_exhaustive(rs, fields)
    assert decision.matched_rule_id == "R1" == rule_id
    assert decision.action is action


def test_evaluation_missing_field_raises():
    rs = rules.parse_rules("R1 1 risk_score > 0.5 -> escalate")
    with pytest.raises(rules.UnknownField):
        rules.evaluate(rs, {"amount": 1.0})


def test_evaluation_type_mismatch_raises():
    rs = rules.parse_rules("R1 1 amount > 5 -> approve")
    with pytest.raises(rules.TypeMismatch):
        rules.evaluate(rs, {"amount": "not-a-number"})


_FIELDS = ["amount", "risk_score"]
_rule_strategy = st.builds(
    lambda field, op, lit, action, prio: (field, op, lit, action, prio),
    st.sampled_from(_FIELDS),
    st.sampled_from(["=", "!=", "<", "<=", ">", ">="]),
    st.integers(0, 20),
    st.sampled_from(["approve", "reject", "escalate"]),
    st.integers(1, 5),
)


@settings(max_examples=120, deadline=None)
@given(st.lists(_rule_strategy, min_size=1, max_size=12),
       st.integers(0, 20), st.integers(0, 20))
def test_priority_soundness_against_exhaustive_oracle(specs, amount, risk):
    lines = [
        f"G{i:03d} {prio} {field} {op} {lit} -> {action}"
        for i, (field, op, lit, action, prio) in enumerate(specs)
    ]
    rs = rules.parse_rules("\n".join(lines))
    fields = {"amount": float(amount), "risk_score": float(risk)}
    decision = rules.evaluate(rs, fields)
    action, rule_id = evaluate_rules_exhaustive(rs, fields)
    assert decision.action is action
    assert decision.matched_rule_id == rule_id
    # vectorized path gives the same answer
    cols = {"amount": np.array([fields["amount"]]),
            "risk_score": np.array([fields["risk_score"]])}
    actions, ridx = rules.evaluate_batch(rs, cols)
    assert rules.ACTION_BY_CODE[int(actions[0])] is decision.action
    matched_id = rs.rules[int(ridx[0])].id if ridx[0] >= 0 else None
    assert matched_id == decision.matched_rule_id


def test_evaluate_is_pure():
    rs = rules.parse_rules("R1 1 amount > 5 -> approve")
    fields = {"amount": 10.0}
    first = rules.evaluate(rs, fields)
    second = rules.evaluate(rs, fields)
    assert first == second


def test_coverage_examples():
    cases = [{"amount": float(v)} for v in (1, 10, 100, 1000)]
    with pytest.raises(rules.EmptyBatch):
        rules.coverage(rules.RuleSet([]), [])
    assert rules.coverage(rules.RuleSet([]), cases) == 0.0
    catch_all = rules.parse_rules("R1 1 amount >= 0 -> approve")
    assert rules.coverage(catch_all, cases) == 1.0


def test_coverage_monotone_in_added_rules():
    rng = np.random.default_rng(0)
    cases = [{"amount": float(a)} for a in rng.integers(0, 100, size=200)]
    lines = ["R1 1 amount < 10 -> approve",
             "R2 2 amount > 80 -> reject",
             "R3 3 amount = 50 -> escalate"]
    previous = 0.0
    for k in range(1, len(lines) + 1):
        rs = rules.parse_rules("\n".join(lines[:k]))
        cov = rules.coverage(rs, cases)
        assert cov >= previous
        previous = cov


def test_generated_rule_files_parse():
    text = rules.generate_rules(200, seed=3)
    rs = rules.parse_rules(text)
    assert len(rs) == 200


def test_canonical_lines_sorted_by_priority_then_order():
    rs = rules.parse_rules(
        "B 20 amount > 1 -> approve\nA 10 amount > 2 -> reject\nC 10 amount > 3 -> escalate\n")
    lines = rs.canonical_lines()
    assert lines[0].startswith("A 10")
    assert lines[1].startswith("C 10")
    assert lines[2].startswith("B 20")
