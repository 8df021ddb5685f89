"""Learn the escalation-routing policy with tabular Q-learning.

States combine risk bucket, anomaly flag and queue load; actions are
auto-approve, escalate to a human, or reject. Rewards penalize
approving violations hardest, so the learned policy approves clean
low-risk cases, escalates the murky middle, and rejects high risk.
"""
from autocomply.dqn import DqnTrainConfig, N_STATES, state_from_index, train_dqn

q = train_dqn(DqnTrainConfig(episodes=800, seed=7))

print(f"{'state':<28}{'action':<14}{'q-values'}")
for i in range(N_STATES):
    state = state_from_index(i)
    name = f"{state.risk.value}/{state.anomaly.value}/{state.load.value}"
    action = q.greedy_action(state).value
    values = ", ".join(f"{v:+.2f}" for v in q.table[i])
    print(f"{name:<28}{action:<14}[{values}]")
