"""Train the one-class SVM on clean traffic and score injected anomalies."""
from autocomply.svm import decision_scores, train
from autocomply.workload import make_anomaly_benchmark, roc_auc

train_x, test_x, is_anomaly = make_anomaly_benchmark(
    n_train=400, n_test=400, anomaly_rate=0.15, seed=3)

model = train(train_x, nu=0.1)
print(f"trained on {len(train_x)} clean rows")
print(f"support vectors kept: {len(model.alphas)} "
      f"({len(model.alphas) / len(train_x):.0%} of the data)")
print(f"kernel bandwidth (median heuristic): {model.kernel.gamma_kernel:.4f}")

scores = decision_scores(model, test_x)
auc = roc_auc(-scores, is_anomaly)  # lower score = more anomalous
print(f"ROC-AUC separating injected anomalies: {auc:.4f}")

flagged = scores < 0
print(f"flagged {flagged.sum()} of {len(test_x)} test rows as outliers; "
      f"{(flagged & is_anomaly).sum()} of them are true anomalies")
