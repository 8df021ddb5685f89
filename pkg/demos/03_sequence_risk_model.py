"""Train the conv + LSTM risk scorer on the burst-detection task.

A sequence is a violation when three consecutive steps carry a high
amount; isolated spikes of the same height are legitimate, so the model
has to learn run length, not peak value.
"""
from autocomply.seqmodel import SeqModelConfig, train_sequence_model
from autocomply.workload import make_sequence_task

train_samples = make_sequence_task(800, seed=11)
valid_samples = make_sequence_task(200, seed=12)

config = SeqModelConfig(input_dim=8, epochs=12, learning_rate=2e-3, seed=5)
model, history = train_sequence_model(config, train_samples, valid_samples)

print("epoch  train-loss  valid-accuracy")
for i, (loss, acc) in enumerate(zip(history.train_loss, history.valid_accuracy), 1):
    print(f"{i:>5}  {loss:>10.4f}  {acc:>14.3f}")

sample = valid_samples[0]
print(f"\none validation sequence ({sample.label.value}): "
      f"risk score {model.risk_score(sample.sequence):.3f}")
