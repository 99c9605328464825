"""
Synthetic corpora where sememe structure drives the next word.

Generative process, per position inside a sentence:
  1. pick a sememe k from the previous sense's sememes' transition rows,
  2. pick a sense uniformly among the senses annotated with k,
  3. emit that sense's word.
With probability 1 - signal_strength the step instead draws a word
uniformly and one of its senses uniformly. Sentences start from that
same word-uniform draw, so signal_strength = 0 gives an i.i.d. uniform
stream. Everything is a finite Markov chain over senses, which makes
exact marginals and the Bayes-optimal next-word distribution available.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from errors import ArgumentError
from lexicon import Lexicon, save_lexicon

logger = logging.getLogger(__name__)

MAX_SENSES_PER_WORD = 3
MAX_SEMEMES_PER_SENSE = 5
DIRICHLET_CONCENTRATION = 0.1
DEFAULT_PROPORTIONS = (10.0, 1.0, 1.0)
DEFAULT_SENTENCE_LEN = (5, 25)


@dataclass
class SyntheticCorpus:
    lexicon: Lexicon
    transition: np.ndarray
    start: np.ndarray
    signal_strength: float
    seed: int
    sentence_len: tuple[int, int]
    splits: dict[str, list[np.ndarray]] = field(default_factory=dict)
    senses: dict[str, list[np.ndarray]] = field(default_factory=dict)

    def word_marginals(self) -> np.ndarray:
        """Expected unigram frequency of every word under the sentence-restart process."""
        lo, hi = self.sentence_len
        lengths = np.arange(lo, hi + 1)
        p = self.start.copy()
        sense_freq = np.zeros_like(p)
        for t in range(hi):
            # share of sentences that still have a position t
            survive = np.mean(lengths > t)
            sense_freq += survive * p
            p = p @ self.transition
        sense_freq /= lengths.mean()
        return _sum_by_word(sense_freq, self.lexicon)

    def token_distributions(self, sentence: np.ndarray) -> np.ndarray:
        """(n, N) exact P(w_t | w_<t) by forward filtering over the hidden senses."""
        lex = self.lexicon
        ids = np.asarray(sentence, dtype=np.int64)
        rows = np.zeros((ids.shape[0], lex.N))
        belief: Optional[np.ndarray] = None
        for t, w in enumerate(ids.tolist()):
            predictive = self.start if belief is None else belief @ self.transition
            rows[t] = _sum_by_word(predictive, lex)
            mask = np.zeros(lex.M)
            mask[list(lex.word_senses[w])] = 1.0
            posterior = predictive * mask
            belief = posterior / posterior.sum()
        return rows

    def oracle_perplexity(self, sentences: Sequence[np.ndarray], skip_first: bool = True) -> float:
        """Perplexity of the generator itself, scoring the same tokens evaluation scores."""
        total, count = 0.0, 0
        for ids in sentences:
            ids = np.asarray(ids, dtype=np.int64)
            dist = self.token_distributions(ids)
            first = 1 if skip_first else 0
            picked = dist[np.arange(first, ids.shape[0]), ids[first:]]
            total += -np.log(picked).sum()
            count += picked.shape[0]
        if count == 0:
            raise ArgumentError("no tokens to score")
        return math.exp(total / count)


def _sum_by_word(sense_values: np.ndarray, lex: Lexicon) -> np.ndarray:
    out = np.zeros(lex.N)
    np.add.at(out, lex.sense_word_array, sense_values)
    return out


def validate_sizes(K: int, M: int, N: int, corpus_len: int, signal_strength: float) -> list[str]:
    problems = []
    if K < 1 or N < 1:
        problems.append(f"K and N must be >= 1 (got K={K}, N={N})")
    if not N <= M <= MAX_SENSES_PER_WORD * N:
        problems.append(f"M must be in [N, {MAX_SENSES_PER_WORD}N] (got M={M}, N={N})")
    if corpus_len < 2:
        problems.append(f"corpus_len must be >= 2 (got {corpus_len})")
    if not 0.0 <= signal_strength <= 1.0:
        problems.append(f"signal_strength must be in [0, 1] (got {signal_strength})")
    return problems


def random_lexicon(K: int, M: int, N: int, rng: np.random.Generator) -> Lexicon:
    """N words with 1-3 senses each (M total), every sense with 1-5 distinct sememes."""
    senses_per_word = np.ones(N, dtype=np.int64)
    for _ in range(M - N):
        open_words = np.flatnonzero(senses_per_word < MAX_SENSES_PER_WORD)
        senses_per_word[rng.choice(open_words)] += 1

    width = max(3, len(str(max(N, K) - 1)))
    words = [f"w{w:0{width}d}" for w in range(N)]
    sememes = [f"s{k:0{width}d}" for k in range(K)]

    word_senses, sense_sememes = [], []
    cap = min(MAX_SEMEMES_PER_SENSE, K)
    for w in range(N):
        block = []
        for _ in range(senses_per_word[w]):
            size = int(rng.integers(1, cap + 1))
            block.append(len(sense_sememes))
            sense_sememes.append(sorted(int(k) for k in rng.choice(K, size=size, replace=False)))
        word_senses.append(block)
    return Lexicon.build(words, sememes, word_senses, sense_sememes)


def build_chain(lex: Lexicon, signal_strength: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(M, M) sense transition matrix and the (M,) sentence-start distribution."""
    start = 1.0 / (lex.N * lex.senses_per_word[lex.sense_word_array])

    active = np.flatnonzero(lex.senses_per_sememe > 0)
    rows = rng.dirichlet(np.full(active.shape[0], DIRICHLET_CONCENTRATION), size=lex.K)

    # mean of the previous sense's sememe rows
    incidence = np.zeros((lex.M, lex.K))
    incidence[lex.edge_sense, lex.edge_sememe] = 1.0
    incidence /= lex.sememes_per_sense[:, None]
    sememe_given_prev = incidence @ rows

    # uniform sense among those annotated with the sememe
    emission = np.zeros((active.shape[0], lex.M))
    for j, k in enumerate(active.tolist()):
        senses = list(lex.sememe_senses[k])
        emission[j, senses] = 1.0 / len(senses)

    transition = signal_strength * (sememe_given_prev @ emission) + (1.0 - signal_strength) * start[None, :]
    transition /= transition.sum(axis=1, keepdims=True)
    return transition, start


def _sample(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.shape[0] - 1)


def gen_synthetic(
    K: int,
    M: int,
    N: int,
    corpus_len: int,
    signal_strength: float,
    seed: int,
    proportions: Sequence[float] = DEFAULT_PROPORTIONS,
    sentence_len: tuple[int, int] = DEFAULT_SENTENCE_LEN,
    names: Sequence[str] = ("train", "valid", "test"),
) -> SyntheticCorpus:
    """Deterministic per seed: same arguments, same lexicon and same token stream."""
    problems = validate_sizes(K, M, N, corpus_len, signal_strength)
    if not 1 <= sentence_len[0] <= sentence_len[1]:
        problems.append(f"sentence_len must satisfy 1 <= lo <= hi (got {sentence_len})")
    if len(proportions) != len(names) or any(p < 0 for p in proportions) or sum(proportions) <= 0:
        problems.append("proportions must be non-negative, one per split, not all zero")
    if problems:
        raise ArgumentError("; ".join(problems))

    rng = np.random.default_rng(seed)
    lex = random_lexicon(K, M, N, rng)
    transition, start = build_chain(lex, signal_strength, rng)
    corpus = SyntheticCorpus(
        lexicon=lex,
        transition=transition,
        start=start,
        signal_strength=signal_strength,
        seed=seed,
        sentence_len=tuple(sentence_len),
    )

    cdf_rows = np.cumsum(transition, axis=1)
    cdf_start = np.cumsum(start)
    shares = np.asarray(proportions, dtype=np.float64) / np.sum(proportions)
    budgets = np.floor(shares * corpus_len).astype(np.int64)
    budgets[0] += corpus_len - budgets.sum()

    for name, budget in zip(names, budgets.tolist()):
        words, senses = [], []
        remaining = budget
        while remaining > 0:
            length = min(int(rng.integers(sentence_len[0], sentence_len[1] + 1)), remaining)
            path = np.empty(length, dtype=np.int64)
            draws = rng.random(length)
            path[0] = _sample(cdf_start, draws[0])
            for t in range(1, length):
                path[t] = _sample(cdf_rows[path[t - 1]], draws[t])
            senses.append(path)
            words.append(lex.sense_word_array[path])
            remaining -= length
        corpus.splits[name] = words
        corpus.senses[name] = senses

    logger.info(
        f"Generated synthetic corpus: K={K} M={M} N={N} tokens={corpus_len} "
        f"signal={signal_strength} seed={seed}"
    )
    return corpus


def write_synthetic(corpus: SyntheticCorpus, out_dir: str, export_truth: bool = False) -> dict[str, str]:
    """Lexicon TSV, one token file per split and the word marginals; optionally per-token truth."""
    os.makedirs(out_dir, exist_ok=True)
    lex = corpus.lexicon
    paths = {"lexicon": os.path.join(out_dir, "lexicon.tsv")}
    save_lexicon(lex, paths["lexicon"])

    for name, sentences in corpus.splits.items():
        paths[name] = os.path.join(out_dir, f"{name}.txt")
        with open(paths[name], "w", encoding="utf-8", newline="\n") as f:
            for ids in sentences:
                f.write(" ".join(lex.words[w] for w in ids.tolist()) + "\n")
        if export_truth:
            paths[f"{name}.truth"] = os.path.join(out_dir, f"{name}.truth.npy")
            np.save(paths[f"{name}.truth"], np.concatenate([corpus.token_distributions(s) for s in sentences]))

    paths["marginals"] = os.path.join(out_dir, "marginals.tsv")
    with open(paths["marginals"], "w", encoding="utf-8", newline="\n") as f:
        for word, p in zip(lex.words, corpus.word_marginals().tolist()):
            f.write(f"{word}\t{p!r}\n")
    return paths
