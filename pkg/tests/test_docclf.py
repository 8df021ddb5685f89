import numpy as np
import pytest

from autocomply import docclf, nn
from autocomply.workload import make_doc_corpus


def test_tokenize_rule_application():
    assert docclf.tokenize("GDPR Article 5; data-retention!") == \
        ["gdpr", "article", "5", "data", "retention"]


def test_tokenize_empty():
    assert docclf.tokenize("") == []


def test_tokenize_idempotent_on_clean_text():
    tokens = docclf.tokenize("risk report q3; Fraud-flags observed 12x")
    assert docclf.tokenize(" ".join(tokens)) == tokens


def _vocab(corpus):
    return docclf.Vocabulary.fit([docclf.tokenize(t) for t in corpus])


def test_tfidf_hand_arithmetic():
    vocab = _vocab(["a b", "a c"])
    vec = docclf.tfidf(vocab, docclf.tokenize("a c"))
    assert vec[vocab.index["a"]] == pytest.approx(0.0)  # in every doc
    assert vec[vocab.index["c"]] == pytest.approx(np.log(2.0), abs=1e-4)
    assert vec[vocab.index["c"]] == pytest.approx(0.6931, abs=1e-4)


def test_tfidf_term_in_all_docs_weighs_zero():
    vocab = _vocab(["x y", "x z", "x w"])
    vec = docclf.tfidf(vocab, ["x", "x", "x"])
    assert vec[vocab.index["x"]] == 0.0


def test_tfidf_empty_tokens_is_zero_vector():
    vocab = _vocab(["a b", "c d"])
    np.testing.assert_array_equal(docclf.tfidf(vocab, []), np.zeros(len(vocab)))


def test_tfidf_unknown_terms_dropped():
    vocab = _vocab(["a b"])
    vec = docclf.tfidf(vocab, ["zzz", "a"])
    assert vec.sum() == pytest.approx(vec[vocab.index["a"]])


def test_empty_vocabulary_raises():
    vocab = docclf.Vocabulary.fit([])
    with pytest.raises(docclf.EmptyVocabulary):
        docclf.tfidf(vocab, ["a"])


def test_vocabulary_fit_deterministic_and_dense():
    corpus = ["b a", "c a", "d"]
    v1 = _vocab(corpus)
    v2 = _vocab(corpus)
    assert v1.index == v2.index
    assert sorted(v1.index.values()) == list(range(len(v1)))
    assert (v1.doc_freq >= 1).all()


def test_vocabulary_json_round_trip(tmp_path):
    vocab = _vocab(["alpha beta", "beta gamma"])
    path = str(tmp_path / "vocab.json")
    vocab.save(path)
    back = docclf.Vocabulary.load(path)
    assert back.index == vocab.index
    assert back.n_docs == vocab.n_docs
    np.testing.assert_array_equal(back.doc_freq, vocab.doc_freq)


def test_probabilities_sum_to_one():
    texts, labels = make_doc_corpus(60, seed=1)
    model, _ = docclf.train_doc_classifier(texts, labels, epochs=10)
    _, probs = model.classify("laundering sanctions report")
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert (probs > 0).all()


def test_zero_initialized_model_is_uniform():
    vocab = _vocab(["a b", "c d"])
    model = docclf.DocClassifier(vocab=vocab, classes=docclf.DEFAULT_CLASSES,
                                 weights=np.zeros((len(vocab), 4)), bias=np.zeros(4))
    label, probs = model.classify("a b c")
    np.testing.assert_allclose(probs, np.full(4, 0.25), atol=1e-12)
    assert label == docclf.DEFAULT_CLASSES[0]  # tie -> lowest class index


def test_empty_text_yields_bias_only_prediction():
    vocab = _vocab(["a b", "c d"])
    bias = np.array([0.0, 2.0, 0.0, 0.0])
    model = docclf.DocClassifier(vocab=vocab, classes=docclf.DEFAULT_CLASSES,
                                 weights=np.zeros((len(vocab), 4)), bias=bias)
    label, probs = model.classify("")
    assert label == docclf.DEFAULT_CLASSES[1]
    np.testing.assert_allclose(probs, nn.softmax_raw(bias), atol=1e-12)


def test_softmax_shift_invariance_of_argmax():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(20, 4))
    for shift in (-100.0, 0.0, 3.5, 250.0):
        shifted = nn.softmax_raw(logits + shift)
        base = nn.softmax_raw(logits)
        np.testing.assert_array_equal(base.argmax(axis=1), shifted.argmax(axis=1))
        np.testing.assert_allclose(base, shifted, atol=1e-9)


def test_classifier_on_disjoint_keyword_corpus():
    texts, labels = make_doc_corpus(500, seed=3)
    split = 400
    model, history = docclf.train_doc_classifier(texts[:split], labels[:split], epochs=60)
    hits = 0
    confident = True
    for text, label in zip(texts[split:], labels[split:]):
        predicted, probs = model.classify(text)
        if predicted == label:
            hits += 1
            if probs.max() < 0.5:
                confident = False
    assert hits / (len(texts) - split) >= 0.94
    assert confident, "a correctly classified doc had top probability < 0.5"
    assert history[-1] < history[0]


def test_classifier_round_trip(tmp_path):
    texts, labels = make_doc_corpus(80, seed=4)
    model, _ = docclf.train_doc_classifier(texts, labels, epochs=15)
    base = str(tmp_path / "doc")
    model.save(base)
    back = docclf.DocClassifier.load(base)
    for text in texts[:10]:
        a_label, a_probs = model.classify(text)
        b_label, b_probs = back.classify(text)
        assert a_label == b_label
        np.testing.assert_allclose(a_probs, b_probs, atol=1e-12)
