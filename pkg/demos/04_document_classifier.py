"""Classify compliance documents with the TF-IDF + softmax pipeline."""
from autocomply.docclf import train_doc_classifier
from autocomply.workload import make_doc_corpus

texts, labels = make_doc_corpus(600, seed=21)
model, history = train_doc_classifier(texts[:480], labels[:480], epochs=50)

hits = sum(1 for t, y in zip(texts[480:], labels[480:]) if model.classify(t)[0] == y)
print(f"vocabulary: {len(model.vocab)} terms")
print(f"held-out accuracy: {hits / 120:.3f}")

for text in (
    "quarterly consent review under gdpr erasure requests",
    "suspicious layering and structuring through shell accounts",
    "failover runbook and sla uptime targets for the quarter",
):
    label, probs = model.classify(text)
    print(f"\n  {text!r}\n  -> {label} (p = {probs.max():.3f})")
