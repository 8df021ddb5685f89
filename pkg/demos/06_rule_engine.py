"""Evaluate transactions against the shipped demo rule set."""
from autocomply.rules import coverage, evaluate, parse_rules
from autocomply.workload import demo_ruleset_text

ruleset = parse_rules(demo_ruleset_text())
print(f"loaded {len(ruleset)} rules; default action: {ruleset.default_action.value}")

samples = [
    {"amount": 45.0, "region": "domestic", "channel": "online",
     "account": "ACC-0001", "timestamp": 1e12},
    {"amount": 8_200.0, "region": "offshore", "channel": "api",
     "account": "ACC-0002", "timestamp": 1e12},
    {"amount": 320_000.0, "region": "eu", "channel": "branch",
     "account": "ACC-0003", "timestamp": 1e12},
]
for fields in samples:
    decision = evaluate(ruleset, fields)
    rule = decision.matched_rule_id or "(none)"
    print(f"amount {fields['amount']:>10.2f} {fields['region']:<9} "
          f"-> {decision.action.value:<9} via {rule}")

print(f"\ncoverage over these samples: {coverage(ruleset, samples):.2f}")
