"""Compliance automation engine.

Scores transaction streams and compliance documents for risk, auto-approves
cases through a prioritized rule engine, escalates uncertain cases to human
review, learns the escalation policy with Q-learning, and reproduces the
process-efficiency arithmetic through a seeded workload simulator.
"""

__version__ = "0.1.0"
