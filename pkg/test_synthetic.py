import numpy as np
import pytest

from errors import ArgumentError
from lexicon import load_lexicon
from synthetic import build_chain, gen_synthetic, random_lexicon, validate_sizes, write_synthetic


def test_random_lexicon_shapes():
    lex = random_lexicon(30, 50, 20, np.random.default_rng(0))
    lex.check_invariants()
    assert (lex.K, lex.M, lex.N) == (30, 50, 20)
    assert lex.senses_per_word.min() >= 1 and lex.senses_per_word.max() <= 3
    assert lex.sememes_per_sense.min() >= 1 and lex.sememes_per_sense.max() <= 5


def test_chain_rows_are_distributions(rng):
    lex = random_lexicon(12, 30, 15, rng)
    transition, start = build_chain(lex, 0.7, rng)
    assert transition.shape == (30, 30)
    assert np.allclose(transition.sum(axis=1), 1.0)
    assert start.sum() == pytest.approx(1.0)
    assert np.all(transition >= 0)


def test_zero_signal_is_uniform_over_words():
    corpus = gen_synthetic(K=10, M=25, N=12, corpus_len=2000, signal_strength=0.0, seed=4)
    assert np.allclose(corpus.word_marginals(), 1 / 12)
    assert corpus.oracle_perplexity(corpus.splits["test"]) == pytest.approx(12.0, rel=1e-10)


def test_same_seed_same_corpus():
    a = gen_synthetic(K=10, M=25, N=12, corpus_len=500, signal_strength=0.8, seed=9)
    b = gen_synthetic(K=10, M=25, N=12, corpus_len=500, signal_strength=0.8, seed=9)
    c = gen_synthetic(K=10, M=25, N=12, corpus_len=500, signal_strength=0.8, seed=10)
    assert a.lexicon == b.lexicon
    for name in a.splits:
        assert all(np.array_equal(x, y) for x, y in zip(a.splits[name], b.splits[name]))
    assert not all(np.array_equal(x, y) for x, y in zip(a.splits["train"], c.splits["train"]))


def test_split_budgets_and_sentence_lengths():
    corpus = gen_synthetic(K=10, M=25, N=12, corpus_len=1200, signal_strength=0.5, seed=2)
    sizes = {name: sum(s.shape[0] for s in sentences) for name, sentences in corpus.splits.items()}
    assert sizes == {"train": 1000, "valid": 100, "test": 100}
    lengths = [s.shape[0] for sentences in corpus.splits.values() for s in sentences]
    assert max(lengths) <= 25
    # only the last sentence of a split can be cut short
    for sentences in corpus.splits.values():
        assert all(s.shape[0] >= 5 for s in sentences[:-1])


def test_senses_emit_their_words():
    corpus = gen_synthetic(K=10, M=25, N=12, corpus_len=300, signal_strength=0.9, seed=1)
    for words, senses in zip(corpus.splits["train"], corpus.senses["train"]):
        assert np.array_equal(corpus.lexicon.sense_word_array[senses], words)


def test_truth_rows_are_distributions():
    corpus = gen_synthetic(K=10, M=25, N=12, corpus_len=300, signal_strength=0.9, seed=1)
    rows = corpus.token_distributions(corpus.splits["test"][0])
    assert np.allclose(rows.sum(axis=1), 1.0)
    assert np.all(rows[np.arange(rows.shape[0]), corpus.splits["test"][0]] > 0)


def test_marginals_match_empirical_frequencies():
    corpus = gen_synthetic(K=15, M=40, N=20, corpus_len=100_000, signal_strength=0.8, seed=7, proportions=(1, 0, 0))
    counts = np.bincount(np.concatenate(corpus.splits["train"]), minlength=20)
    empirical = counts / counts.sum()
    marginals = corpus.word_marginals()
    assert marginals.sum() == pytest.approx(1.0)
    assert np.abs(empirical - marginals).max() < 0.01


def test_structure_beats_uniform():
    corpus = gen_synthetic(K=30, M=60, N=40, corpus_len=20_000, signal_strength=0.9, seed=3)
    assert corpus.oracle_perplexity(corpus.splits["train"]) < 40


@pytest.mark.parametrize("sizes", [
    dict(K=0, M=5, N=5),
    dict(K=5, M=4, N=5),
    dict(K=5, M=16, N=5),
])
def test_size_errors(sizes):
    assert validate_sizes(corpus_len=100, signal_strength=0.5, **sizes)
    with pytest.raises(ArgumentError):
        gen_synthetic(corpus_len=100, signal_strength=0.5, seed=1, **sizes)


def test_signal_out_of_range():
    with pytest.raises(ArgumentError, match="signal_strength"):
        gen_synthetic(K=5, M=5, N=5, corpus_len=100, signal_strength=1.5, seed=1)


def test_write_synthetic(tmp_path):
    corpus = gen_synthetic(K=10, M=25, N=12, corpus_len=600, signal_strength=0.5, seed=5)
    paths = write_synthetic(corpus, str(tmp_path / "syn"), export_truth=True)

    assert load_lexicon(paths["lexicon"]) == corpus.lexicon
    lines = open(paths["valid"], encoding="utf-8").read().splitlines()
    assert len(lines) == len(corpus.splits["valid"])
    assert lines[0].split() == [corpus.lexicon.words[w] for w in corpus.splits["valid"][0]]

    truth = np.load(paths["test.truth"])
    assert truth.shape == (sum(s.shape[0] for s in corpus.splits["test"]), 12)
    assert np.allclose(truth.sum(axis=1), 1.0)

    marginals = [float(line.split("\t")[1]) for line in open(paths["marginals"], encoding="utf-8")]
    assert sum(marginals) == pytest.approx(1.0)
