"""
Sememe-driven decoder.

Three stages sit on top of the context vector g:
  sememe gates   q_k = sigmoid(g . v_k + b_k)
  sense logits   l_s = sum over experts e_k of s: q_k C_{k,s} g^T U_k w_s
  word probs     P(w) = sum over senses of w: softmax(l)_s
with U_k = sum_r alpha_{k,r} Q_r and w_s tied to the word's input embedding.
The tied plain-softmax baseline lives here too.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from errors import ArgumentError, ContractViolation
from lexicon import Lexicon, NormalizationMode, normalization_constant
from numerics import Tape, Tensor, constant, softmax

logger = logging.getLogger(__name__)


@dataclass
class SememeActivations:
    q: np.ndarray


@dataclass
class SenseDistribution:
    probs: np.ndarray
    logits: np.ndarray


@dataclass
class WordDistribution:
    probs: np.ndarray


@dataclass
class TopKReport:
    words: list[tuple[int, float]]
    sememes: list[tuple[int, float]]


def sdlm_extra_parameters(K: int, H1: int, H2: int, R: int) -> int:
    """Parameters SDLM adds over the tied softmax baseline."""
    return K * (H1 + 1) + R * H1 * H2 + K * R


def _as_batch(g: Union[np.ndarray, Tensor], dtype) -> Tensor:
    data = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=dtype)
    if data.ndim == 1:
        data = data[None, :]
    return constant(data, dtype)


def _rank(values: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top k by value, ties broken by ascending id."""
    ids = np.arange(values.shape[0])
    order = np.lexsort((ids, -values))[:k]
    return [(int(i), float(values[i])) for i in order]


class SememeDecoder:
    """Sparse product of sememe experts over senses, marginalized to words."""

    kind = "sdlm"

    def __init__(
        self,
        lexicon: Lexicon,
        mode: NormalizationMode,
        sememe_weight: Tensor,
        sememe_bias: Tensor,
        basis: Tensor,
        mixture: Tensor,
        embedding: Tensor,
    ):
        K, H1 = sememe_weight.shape
        R, _, H2 = basis.shape
        if K != lexicon.K or mixture.shape != (K, R) or embedding.shape != (lexicon.N, H2):
            raise ArgumentError("decoder parameter shapes do not match the lexicon")
        self.lexicon = lexicon
        self.mode = NormalizationMode(mode)
        self.sememe_weight = sememe_weight
        self.sememe_bias = sememe_bias
        self.basis = basis
        self.mixture = mixture
        self.embedding = embedding
        self.dtype = embedding.data.dtype
        self.edge_coef = constant(lexicon.edge_coefficients(self.mode), self.dtype)

    # --- tape path (training and batched inference) ---

    def gates(self, tape: Tape, g: Tensor) -> Tensor:
        """(B, H1) -> (B, K) sememe probabilities."""
        return tape.sigmoid(tape.add(tape.einsum("bh,kh->bk", g, self.sememe_weight), self.sememe_bias))

    def mixture_weights(self, tape: Tape) -> Tensor:
        """alpha as a row-wise softmax of the unconstrained mixture logits."""
        return tape.exp(tape.log_softmax(self.mixture, axis=1))

    def sense_logit_tensor(self, tape: Tape, g: Tensor, gates: Optional[Tensor] = None) -> Tensor:
        """Factorized (B, M) sense logits.

        p_r = g^T Q_r is formed once per basis, each sense then reads its
        word's R scores and mixes them with beta_{s,r}, accumulated over the
        sparse edge list.
        """
        lex = self.lexicon
        q = gates if gates is not None else self.gates(tape, g)
        alpha = self.mixture_weights(tape)

        projected = tape.einsum("bh,rhd->brd", g, self.basis)
        word_scores = tape.einsum("brd,nd->brn", projected, self.embedding)
        sense_scores = tape.take(word_scores, lex.sense_word_array, axis=2)

        edge_gate = tape.mul(tape.take(q, lex.edge_sememe, axis=1), self.edge_coef)
        edge_alpha = tape.take(alpha, lex.edge_sememe, axis=0)
        edge_beta = tape.einsum("be,er->ber", edge_gate, edge_alpha)
        beta = tape.scatter_add(edge_beta, lex.edge_sense, lex.M, axis=1)

        return tape.einsum("bmr,brm->bm", beta, sense_scores)

    def word_log_probs(self, tape: Tape, g: Tensor) -> Tensor:
        """(B, N) log P(w|g), summing each word's senses in a shifted log domain."""
        lex = self.lexicon
        log_p = tape.log_softmax(self.sense_logit_tensor(tape, g), axis=1)

        shift = np.full((log_p.shape[0], lex.N), -np.inf, dtype=log_p.data.dtype)
        np.maximum.at(shift, (slice(None), lex.sense_word_array), log_p.data)
        per_sense = constant(shift[:, lex.sense_word_array], log_p.data.dtype)

        scaled = tape.exp(tape.sub(log_p, per_sense))
        summed = tape.scatter_add(scaled, lex.sense_word_array, lex.N, axis=1)
        return tape.add(tape.log(summed), constant(shift, log_p.data.dtype))

    # --- numpy-facing operations ---

    def predict_sememes(self, g: np.ndarray) -> SememeActivations:
        q = self.gates(Tape(record=False), _as_batch(g, self.dtype)).data
        return SememeActivations(q=q[0] if np.ndim(g) == 1 else q)

    def _u(self, k: int) -> np.ndarray:
        alpha = softmax(self.mixture.data, axis=1)
        return np.einsum("r,rhd->hd", alpha[k], self.basis.data)

    def expert_score(self, g: np.ndarray, s: int, k: int) -> float:
        """phi_k(g, w_s) = g^T U_k w_s for a connected (k, s)."""
        if k not in self.lexicon.sense_sememes[s]:
            raise ContractViolation(f"sense {s} is not connected to sememe {k}")
        w = self.embedding.data[self.lexicon.sense_word[s]]
        return float(np.asarray(g) @ self._u(k) @ w)

    def expert_distribution(self, g: np.ndarray, k: int) -> tuple[tuple[int, ...], np.ndarray]:
        """One expert's own normalized distribution over the senses it connects to."""
        senses = self.lexicon.sememe_senses[k]
        if not senses:
            raise ArgumentError(f"sememe {k} has no connected senses")
        q_k = self.predict_sememes(g).q[k]
        U = self._u(k)
        g = np.asarray(g)
        scores = np.array([
            q_k * normalization_constant(self.lexicon, k, s, self.mode)
            * (g @ U @ self.embedding.data[self.lexicon.sense_word[s]])
            for s in senses
        ])
        return senses, softmax(scores)

    def sense_logits(self, g: np.ndarray, gates: Optional[np.ndarray] = None) -> np.ndarray:
        batch = _as_batch(g, self.dtype)
        gate_tensor = None if gates is None else _as_batch(gates, self.dtype)
        logits = self.sense_logit_tensor(Tape(record=False), batch, gate_tensor).data
        return logits[0] if np.ndim(g) == 1 else logits

    def naive_sense_logits(self, g: np.ndarray, gates: Optional[np.ndarray] = None) -> np.ndarray:
        """Triple loop over senses, experts and dense U_k; reference for the fast path."""
        g = np.asarray(g, dtype=np.float64)
        lex = self.lexicon
        q = self.predict_sememes(g).q if gates is None else np.asarray(gates)
        U = [self._u(k) for k in range(lex.K)]
        logits = np.zeros(lex.M)
        for s in range(lex.M):
            w = self.embedding.data[lex.sense_word[s]]
            for k in lex.sense_sememes[s]:
                logits[s] += q[k] * normalization_constant(lex, k, s, self.mode) * (g @ U[k] @ w)
        return logits

    def predict_senses(self, g: np.ndarray, gates: Optional[np.ndarray] = None) -> SenseDistribution:
        logits = self.sense_logits(g, gates)
        return SenseDistribution(probs=softmax(logits), logits=logits)

    def word_distribution(self, g: np.ndarray) -> WordDistribution:
        return predict_words(self.predict_senses(g), self.lexicon)


class TiedSoftmaxDecoder:
    """Plain softmax over words scored by g . x_w on the tied table."""

    kind = "baseline"

    def __init__(self, lexicon: Lexicon, embedding: Tensor):
        if embedding.shape[0] != lexicon.N:
            raise ArgumentError("embedding rows do not match the vocabulary")
        self.lexicon = lexicon
        self.embedding = embedding
        self.dtype = embedding.data.dtype

    def logit_tensor(self, tape: Tape, g: Tensor) -> Tensor:
        return tape.einsum("bh,nh->bn", g, self.embedding)

    def word_log_probs(self, tape: Tape, g: Tensor) -> Tensor:
        return tape.log_softmax(self.logit_tensor(tape, g), axis=1)

    def baseline_logits(self, g: np.ndarray) -> np.ndarray:
        logits = self.logit_tensor(Tape(record=False), _as_batch(g, self.dtype)).data
        return logits[0] if np.ndim(g) == 1 else logits

    def word_distribution(self, g: np.ndarray) -> WordDistribution:
        return WordDistribution(probs=softmax(self.baseline_logits(g)))


Decoder = Union[SememeDecoder, TiedSoftmaxDecoder]


def predict_words(sense_dist: SenseDistribution, lex: Lexicon) -> WordDistribution:
    """P(w) as the exactly rounded sum of its senses' probabilities.

    Rounding each word total once leaves sum_w P(w) within a few ulp of
    sum_s P(s); the two are not bit-identical.
    """
    p = sense_dist.probs
    return WordDistribution(probs=np.array([math.fsum(p[list(senses)]) for senses in lex.word_senses]))


def top_k_report(g: np.ndarray, decoder: Decoder, lex: Lexicon, k: int) -> TopKReport:
    """Top-k words by P(w|g) and top-k sememes by gate value."""
    limit = min(lex.N, lex.K) if isinstance(decoder, SememeDecoder) else lex.N
    if not 1 <= k <= limit:
        raise ArgumentError(f"k must be in [1, {limit}] (got {k})")
    words = _rank(decoder.word_distribution(g).probs, k)
    sememes = _rank(decoder.predict_sememes(g).q, k) if isinstance(decoder, SememeDecoder) else []
    return TopKReport(words=words, sememes=sememes)
