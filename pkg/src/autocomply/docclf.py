"""Compliance-document classification: tokens -> TF-IDF -> softmax regression.

The text path is deliberately linear and fully inspectable: a rule-based
tokenizer, raw-count TF with natural-log IDF, and a linear softmax head
trained with the in-house autodiff. The interface (text in, label plus a
probability simplex out) leaves room to swap in a heavier encoder later.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from . import nn

DEFAULT_CLASSES = ("data_security", "privacy", "operational", "non_compliance_risk")

_SPLIT_RE = re.compile(r"[^a-z0-9]+")


class EmptyVocabulary(Exception):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non-alphanumeric run, drop empties. No stemming."""
    return [t for t in _SPLIT_RE.split(text.lower()) if t]


class Vocabulary:
    """Dense term -> index map with document frequencies."""

    def __init__(self, index: dict[str, int], doc_freq: np.ndarray, n_docs: int):
        self.index = index
        self.doc_freq = doc_freq
        self.n_docs = n_docs

    def __len__(self) -> int:
        return len(self.index)

    @classmethod
    def fit(cls, token_lists: list[list[str]]) -> "Vocabulary":
        """Deterministic given corpus order: terms indexed by first appearance."""
        index: dict[str, int] = {}
        dfs: list[int] = []
        for tokens in token_lists:
            for term in dict.fromkeys(tokens):  # unique, order-preserving
                if term in index:
                    dfs[index[term]] += 1
                else:
                    index[term] = len(dfs)
                    dfs.append(1)
        return cls(index, np.asarray(dfs, dtype=np.float64), n_docs=len(token_lists))

    def to_json_dict(self) -> dict:
        return {term: [idx, int(self.doc_freq[idx])] for term, idx in self.index.items()} | {
            "__n_docs__": [len(self.index), self.n_docs]
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def from_json_dict(cls, d: dict) -> "Vocabulary":
        meta = d.pop("__n_docs__")
        n_docs = meta[1]
        index = {}
        dfs = np.zeros(len(d), dtype=np.float64)
        for term, (idx, df) in d.items():
            index[term] = idx
            dfs[idx] = df
        return cls(index, dfs, n_docs)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def tfidf(vocab: Vocabulary, tokens: list[str]) -> np.ndarray:
    """weight(t) = count(t) * ln(n_docs / df(t)); unknown terms dropped."""
    if len(vocab) == 0:
        raise EmptyVocabulary("vocabulary has no terms")
    vec = np.zeros(len(vocab))
    for term in tokens:
        idx = vocab.index.get(term)
        if idx is not None:
            vec[idx] += 1.0
    nz = vec > 0
    vec[nz] *= np.log(vocab.n_docs / vocab.doc_freq[nz])
    return vec


@dataclass
class DocClassifier:
    vocab: Vocabulary
    classes: tuple[str, ...]
    weights: np.ndarray  # V x C
    bias: np.ndarray  # C

    def logits(self, text: str) -> np.ndarray:
        x = tfidf(self.vocab, tokenize(text))
        return x @ self.weights + self.bias

    def classify(self, text: str) -> tuple[str, np.ndarray]:
        """(argmax label, softmax probabilities); ties go to the lowest class index."""
        probs = nn.softmax_raw(self.logits(text))
        return self.classes[int(np.argmax(probs))], probs

    def save(self, path_base: str) -> None:
        nn.save_checkpoint(path_base, {"weights": self.weights, "bias": self.bias})
        self.vocab.save(path_base + ".vocab.json")
        with open(path_base + ".classes.json", "w", encoding="utf-8") as f:
            json.dump(list(self.classes), f)

    @classmethod
    def load(cls, path_base: str) -> "DocClassifier":
        arrays = nn.load_checkpoint(path_base)
        vocab = Vocabulary.load(path_base + ".vocab.json")
        with open(path_base + ".classes.json", "r", encoding="utf-8") as f:
            classes = tuple(json.load(f))
        return cls(vocab=vocab, classes=classes, weights=arrays["weights"], bias=arrays["bias"])


def train_doc_classifier(
    texts: list[str],
    labels: list[str],
    classes: tuple[str, ...] = DEFAULT_CLASSES,
    epochs: int = 60,
    lr: float = 0.5,
    seed: int = 0,
) -> tuple[DocClassifier, list[float]]:
    """Full-batch softmax regression on TF-IDF rows; returns (model, loss history)."""
    if len(texts) != len(labels):
        raise ValueError("texts and labels must align")
    token_lists = [tokenize(t) for t in texts]
    vocab = Vocabulary.fit(token_lists)
    if len(vocab) == 0:
        raise EmptyVocabulary("training corpus produced no terms")
    x = np.stack([tfidf(vocab, toks) for toks in token_lists])
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.asarray([class_index[lbl] for lbl in labels], dtype=np.int64)

    rng = nn.SplitMix64(seed)
    w = nn.parameter(nn.xavier_uniform((len(vocab), len(classes)), len(vocab), len(classes), rng),
                     name="weights")
    b = nn.parameter(np.zeros(len(classes)), name="bias")
    opt = nn.Adam([w, b], lr=lr)
    history: list[float] = []
    xt = nn.Tensor(x)
    for _ in range(epochs):
        nn.zero_grads([w, b])
        loss = nn.softmax_cross_entropy(xt @ w + b, y)
        nn.backward(loss)
        opt.step()
        history.append(float(loss.data))
    return DocClassifier(vocab=vocab, classes=tuple(classes),
                         weights=w.data.copy(), bias=b.data.copy()), history
