"""
Word-sense-sememe hierarchy.

Loads the lexicon TSV, validates it and precomputes the sparse incidence
arrays and normalization constants the decoder reads on every step.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from errors import ArgumentError, ContractViolation, LexiconValidationError, SchemaError

logger = logging.getLogger(__name__)

# Tokens that are never annotated but must still own a sense
SPECIAL_TOKENS = ("<unk>", "<N>", "<date>", "<year>", "<time>")
SPECIAL_SEMEME_PREFIX = "special:"

_ESCAPES = {"\\": "\\", "t": "\t", "n": "\n", ",": ",", "#": "#"}


class NormalizationMode(str, Enum):
    LEFT = "left"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class LexiconStats:
    K: int
    M: int
    N: int
    edge_count: int
    mean_sememes_per_word: float
    mean_senses_per_expert: float

    @property
    def lambda_ratio(self) -> float:
        """Edges per word."""
        return self.edge_count / self.N if self.N else 0.0


@dataclass(frozen=True, eq=False)
class Lexicon:
    """Immutable incidence structure over dense word/sense/sememe ids."""
    words: tuple[str, ...]
    sememes: tuple[str, ...]
    word_senses: tuple[tuple[int, ...], ...]
    sense_sememes: tuple[tuple[int, ...], ...]
    sememe_senses: tuple[tuple[int, ...], ...]
    sense_word: tuple[int, ...]

    @classmethod
    def build(
        cls,
        words: Sequence[str],
        sememes: Sequence[str],
        word_senses: Sequence[Sequence[int]],
        sense_sememes: Sequence[Sequence[int]],
    ) -> 'Lexicon':
        """Derive the transpose and owner maps, then validate everything."""
        M, K = len(sense_sememes), len(sememes)
        if len(word_senses) != len(words):
            raise LexiconValidationError("word_senses must have one entry per word")

        sense_word = [-1] * M
        for w, senses in enumerate(word_senses):
            if not senses:
                raise LexiconValidationError(f"word {words[w]!r} has no senses")
            for s in senses:
                if not 0 <= s < M:
                    raise LexiconValidationError(f"sense id {s} out of range")
                if sense_word[s] != -1:
                    raise LexiconValidationError(f"sense {s} belongs to more than one word")
                sense_word[s] = w
        if -1 in sense_word:
            raise LexiconValidationError(f"sense {sense_word.index(-1)} has no owner word")

        sememe_senses: list[list[int]] = [[] for _ in range(K)]
        for s, labels in enumerate(sense_sememes):
            if not labels:
                raise LexiconValidationError(f"sense {s} of {words[sense_word[s]]!r} has no sememes")
            if len(set(labels)) != len(labels):
                raise LexiconValidationError(f"sense {s} of {words[sense_word[s]]!r} repeats a sememe")
            for k in labels:
                if not 0 <= k < K:
                    raise LexiconValidationError(f"sememe id {k} out of range")
                sememe_senses[k].append(s)

        if len(set(words)) != len(words):
            raise LexiconValidationError("duplicate surface string in words")

        return cls(
            words=tuple(words),
            sememes=tuple(sememes),
            word_senses=tuple(tuple(s) for s in word_senses),
            sense_sememes=tuple(tuple(e) for e in sense_sememes),
            sememe_senses=tuple(tuple(s) for s in sememe_senses),
            sense_word=tuple(sense_word),
        )

    # --- sizes ---

    @property
    def K(self) -> int:
        return len(self.sememes)

    @property
    def M(self) -> int:
        return len(self.sense_sememes)

    @property
    def N(self) -> int:
        return len(self.words)

    @property
    def edge_count(self) -> int:
        return int(self.edge_sense.shape[0])

    # --- precomputed indexes ---

    @cached_property
    def word_index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    @cached_property
    def sememe_index(self) -> dict[str, int]:
        return {e: i for i, e in enumerate(self.sememes)}

    @cached_property
    def edge_sense(self) -> np.ndarray:
        """Sense id of every edge, edges listed sense by sense."""
        return np.array([s for s, e in enumerate(self.sense_sememes) for _ in e], dtype=np.int64)

    @cached_property
    def edge_sememe(self) -> np.ndarray:
        return np.array([k for e in self.sense_sememes for k in e], dtype=np.int64)

    @cached_property
    def sense_word_array(self) -> np.ndarray:
        return np.array(self.sense_word, dtype=np.int64)

    @cached_property
    def sememes_per_sense(self) -> np.ndarray:
        return np.array([len(e) for e in self.sense_sememes], dtype=np.int64)

    @cached_property
    def senses_per_sememe(self) -> np.ndarray:
        return np.array([len(s) for s in self.sememe_senses], dtype=np.int64)

    @cached_property
    def senses_per_word(self) -> np.ndarray:
        return np.array([len(s) for s in self.word_senses], dtype=np.int64)

    @cached_property
    def mean_sememes_by_word(self) -> np.ndarray:
        """(sum over senses of |E(s)|) / |S(w)| for every word."""
        totals = np.array(
            [sum(len(self.sense_sememes[s]) for s in senses) for senses in self.word_senses],
            dtype=np.float64,
        )
        return totals / self.senses_per_word

    def edge_coefficients(self, mode: NormalizationMode) -> np.ndarray:
        """C_{k,s} for every edge, aligned with edge_sense/edge_sememe."""
        cache = self.__dict__.setdefault("_coefficients", {})
        mode = NormalizationMode(mode)
        if mode not in cache:
            left = self.sememes_per_sense[self.edge_sense].astype(np.float64)
            if mode == NormalizationMode.LEFT:
                coef = 1.0 / left
            else:
                right = self.senses_per_sememe[self.edge_sememe].astype(np.float64)
                coef = 1.0 / np.sqrt(left * right)
            coef.setflags(write=False)
            cache[mode] = coef
        return cache[mode]

    def sememes_of_word(self, w: int) -> set[int]:
        return {k for s in self.word_senses[w] for k in self.sense_sememes[s]}

    def check_invariants(self) -> None:
        """Re-verify transpose consistency; raises LexiconValidationError."""
        forward = {(k, s) for s, e in enumerate(self.sense_sememes) for k in e}
        backward = {(k, s) for k, d in enumerate(self.sememe_senses) for s in d}
        if forward != backward:
            raise LexiconValidationError("sememe_senses is not the transpose of sense_sememes")
        if sum(len(d) for d in self.sememe_senses) != self.edge_count:
            raise LexiconValidationError("edge counts disagree")

    # --- content identity ---

    def content(self) -> tuple:
        """Label-level view that ignores how ids were assigned."""
        return tuple(
            (self.words[w], tuple(tuple(self.sememes[k] for k in self.sense_sememes[s]) for s in senses))
            for w, senses in enumerate(self.word_senses)
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Lexicon):
            return NotImplemented
        return self.content() == other.content()

    def __hash__(self) -> int:
        return hash(self.content())

    def digest(self) -> str:
        return hashlib.sha256(serialize_lexicon(self).encode("utf-8")).hexdigest()


# --- TSV codec ---

def _escape(text: str, leading_hash: bool = False) -> str:
    out = text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace(",", "\\,")
    if leading_hash and out.startswith("#"):
        out = "\\" + out
    return out


def _unescape(text: str, line: int) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise SchemaError("dangling escape at end of field", line)
            nxt = text[i + 1]
            if nxt not in _ESCAPES:
                raise SchemaError(f"unknown escape \\{nxt}", line)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _split_labels(field: str, line: int) -> list[str]:
    """Split on commas that are not escaped, then unescape each label."""
    if field == "":
        return []
    parts, current, i = [], [], 0
    while i < len(field):
        ch = field[i]
        if ch == "\\" and i + 1 < len(field):
            current.append(field[i:i + 2])
            i += 2
            continue
        if ch == ",":
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    parts.append("".join(current))

    labels = []
    for part in parts:
        if part == "":
            raise SchemaError("empty sememe label", line)
        labels.append(_unescape(part, line))
    return labels


def build_lexicon(entries: Iterable[tuple[str, Sequence[Sequence[str]]]]) -> Lexicon:
    """Build from (word, [sememe labels of each sense]) pairs.

    Sememe ids follow first appearance; sense ids are contiguous per word
    so every word owns one block of senses.
    """
    words: list[str] = []
    sememes: list[str] = []
    sememe_ids: dict[str, int] = {}
    word_senses: list[list[int]] = []
    sense_sememes: list[list[int]] = []

    for word, senses in entries:
        words.append(word)
        block = []
        for labels in senses:
            for label in labels:
                if label not in sememe_ids:
                    sememe_ids[label] = len(sememes)
                    sememes.append(label)
            block.append(len(sense_sememes))
            sense_sememes.append([sememe_ids[label] for label in labels])
        word_senses.append(block)

    return Lexicon.build(words, sememes, word_senses, sense_sememes)


def parse_lexicon(source: Iterable[str]) -> Lexicon:
    """Parse `word<TAB>ordinal<TAB>sememe,sememe,...` lines into a Lexicon.

    Word, sense and sememe ids all follow first appearance in the file, so
    interleaved words own non-contiguous sense ids.
    """
    words: list[str] = []
    word_ids: dict[str, int] = {}
    word_senses: list[list[int]] = []
    sememes: list[str] = []
    sememe_ids: dict[str, int] = {}
    sense_sememes: list[list[int]] = []

    for lineno, raw in enumerate(source, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue

        cols = line.split("\t")
        if len(cols) != 3:
            raise SchemaError(f"expected 3 tab-separated columns, found {len(cols)}", lineno)
        word = _unescape(cols[0], lineno)
        if not word:
            raise SchemaError("empty word", lineno)
        try:
            ordinal = int(cols[1])
        except ValueError:
            raise SchemaError(f"sense ordinal {cols[1]!r} is not an integer", lineno) from None

        labels = _split_labels(cols[2], lineno)
        if not labels:
            raise LexiconValidationError(f"line {lineno}: sense {word!r}/{ordinal} has no sememes")
        if len(set(labels)) != len(labels):
            raise LexiconValidationError(f"line {lineno}: sense {word!r}/{ordinal} repeats a sememe")

        if word not in word_ids:
            word_ids[word] = len(words)
            words.append(word)
            word_senses.append([])
        senses = word_senses[word_ids[word]]
        if ordinal < len(senses):
            raise SchemaError(f"duplicate sense {word!r}/{ordinal}", lineno)
        if ordinal != len(senses):
            raise SchemaError(f"sense ordinals of {word!r} must be consecutive from 0 (expected {len(senses)}, got {ordinal})", lineno)

        for label in labels:
            if label not in sememe_ids:
                sememe_ids[label] = len(sememes)
                sememes.append(label)
        senses.append(len(sense_sememes))
        sense_sememes.append([sememe_ids[label] for label in labels])

    lex = Lexicon.build(words, sememes, word_senses, sense_sememes)
    logger.debug(f"Parsed lexicon: N={lex.N} M={lex.M} K={lex.K} edges={lex.edge_count}")
    return lex


def serialize_lexicon(lex: Lexicon) -> str:
    lines = []
    for w, senses in enumerate(lex.word_senses):
        word = _escape(lex.words[w], leading_hash=True)
        for ordinal, s in enumerate(senses):
            labels = ",".join(_escape(lex.sememes[k]) for k in lex.sense_sememes[s])
            lines.append(f"{word}\t{ordinal}\t{labels}\n")
    return "".join(lines)


def load_lexicon(path: str) -> Lexicon:
    with open(path, "r", encoding="utf-8") as f:
        return parse_lexicon(f)


def save_lexicon(lex: Lexicon, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_lexicon(lex))


# --- derived lexicons ---

def with_special_tokens(lex: Lexicon, tokens: Iterable[str] = SPECIAL_TOKENS) -> Lexicon:
    """Give every missing token one sense carrying one dedicated sememe."""
    words = list(lex.words)
    sememes = list(lex.sememes)
    word_senses = [list(s) for s in lex.word_senses]
    sense_sememes = [list(e) for e in lex.sense_sememes]
    present = set(words)

    added = 0
    for token in tokens:
        if token in present:
            continue
        present.add(token)
        label = f"{SPECIAL_SEMEME_PREFIX}{token}"
        if label in lex.sememe_index:
            raise LexiconValidationError(f"sememe label {label!r} is reserved for special tokens")
        sememes.append(label)
        words.append(token)
        word_senses.append([len(sense_sememes)])
        sense_sememes.append([len(sememes) - 1])
        added += 1

    if not added:
        return lex
    logger.info(f"Added {added} special tokens with synthetic sememes")
    return Lexicon.build(words, sememes, word_senses, sense_sememes)


def normalization_constant(lex: Lexicon, k: int, s: int, mode: NormalizationMode) -> float:
    """C_{k,s}: 1/|E(s)| (left) or 1/sqrt(|E(s)| |D(e_k)|) (symmetric)."""
    if not (0 <= s < lex.M and 0 <= k < lex.K) or k not in lex.sense_sememes[s]:
        raise ContractViolation(f"sense {s} is not connected to sememe {k}")
    left = len(lex.sense_sememes[s])
    if NormalizationMode(mode) == NormalizationMode.LEFT:
        return 1.0 / left
    return 1.0 / math.sqrt(left * len(lex.sememe_senses[k]))


def compute_stats(lex: Lexicon) -> LexiconStats:
    union_sizes = sum(len(lex.sememes_of_word(w)) for w in range(lex.N))
    edges = sum(len(d) for d in lex.sememe_senses)
    return LexiconStats(
        K=lex.K,
        M=lex.M,
        N=lex.N,
        edge_count=lex.edge_count,
        mean_sememes_per_word=union_sizes / lex.N if lex.N else 0.0,
        mean_senses_per_expert=edges / lex.K if lex.K else 0.0,
    )


def ablate_edges(lex: Lexicon, fraction: float, seed: int) -> Lexicon:
    """Drop floor(fraction * edges) random sense-sememe edges, never orphaning a sense.

    The sememe inventory is kept as is so a model trained on the ablated
    lexicon has the same parameter shapes as one trained on the full one.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError(f"fraction must be in [0, 1] (got {fraction})")

    target = int(math.floor(fraction * lex.edge_count + 1e-9))
    if target == 0:
        return lex

    rng = np.random.default_rng(seed)
    remaining = lex.sememes_per_sense.copy()
    removed = np.zeros(lex.edge_count, dtype=bool)
    n_removed = 0
    for e in rng.permutation(lex.edge_count):
        if n_removed == target:
            break
        s = lex.edge_sense[e]
        if remaining[s] > 1:
            removed[e] = True
            remaining[s] -= 1
            n_removed += 1

    if n_removed < target:
        logger.warning(f"Ablation guard bound: removed {n_removed} of {target} requested edges")

    sense_sememes: list[list[int]] = [[] for _ in range(lex.M)]
    for e in range(lex.edge_count):
        if not removed[e]:
            sense_sememes[lex.edge_sense[e]].append(int(lex.edge_sememe[e]))

    ablated = Lexicon.build(lex.words, lex.sememes, lex.word_senses, sense_sememes)
    logger.info(f"Ablated lexicon: {lex.edge_count} -> {ablated.edge_count} edges (seed={seed})")
    return ablated
