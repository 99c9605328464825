"""
Raw text to token files.

Pipeline per line: whitespace chunks, number/date/year/time canonicalization,
forward maximum matching for chunks the dictionary does not cover, then a
frequency cut against the training split. Rare or uncovered tokens become
<unk>; punctuation is kept and gets its own special-sememe entry.
"""

import logging
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from errors import ArgumentError, InputError
from lexicon import SPECIAL_TOKENS, Lexicon, build_lexicon, save_lexicon, with_special_tokens

logger = logging.getLogger(__name__)

UNK = "<unk>"

# Sentence shuffling then a split by token share, 734k / 10k / 19k
DEFAULT_SPLIT = (734.0, 10.0, 19.0)

_DIGIT = r"[0-9０-９]"
_CN_NUMERAL = "零〇一二三四五六七八九十百千万亿两"

# Order matters: earlier alternatives win at the same position
CANONICAL_PATTERNS: tuple[tuple[str, str], ...] = (
    ("<time>", rf"(?<!{_DIGIT}){_DIGIT}{{1,2}}[:：]{_DIGIT}{{2}}(?:[:：]{_DIGIT}{{2}})?(?!{_DIGIT})"),
    ("<time>", rf"(?<!{_DIGIT}){_DIGIT}{{1,2}}[时点](?:{_DIGIT}{{1,2}}分)?"),
    ("<date>", rf"(?<!{_DIGIT}){_DIGIT}{{4}}[-/.]{_DIGIT}{{1,2}}[-/.]{_DIGIT}{{1,2}}(?!{_DIGIT})"),
    ("<date>", rf"(?<!{_DIGIT}){_DIGIT}{{4}}年{_DIGIT}{{1,2}}月(?:{_DIGIT}{{1,2}}日)?"),
    ("<date>", rf"(?<!{_DIGIT}){_DIGIT}{{1,2}}月{_DIGIT}{{1,2}}日"),
    ("<year>", rf"(?<!{_DIGIT}){_DIGIT}{{4}}年"),
    ("<year>", r"(?<![0-9０-９.,])(?:1[5-9][0-9]{2}|20[0-9]{2})(?![0-9０-９.,%％])"),
    ("<N>", rf"{_DIGIT}+(?:[.,．，]{_DIGIT}+)*[%％]?"),
    ("<N>", rf"[{_CN_NUMERAL}]{{2,}}"),
)

_CANONICAL = re.compile("|".join(f"({pattern})" for _, pattern in CANONICAL_PATTERNS))


@dataclass
class PreprocessResult:
    splits: dict[str, list[list[str]]]
    lexicon: Lexicon
    counts: Counter = field(default_factory=Counter)
    unk_rate: float = 0.0


def is_punctuation(token: str) -> bool:
    return bool(token) and all(unicodedata.category(ch).startswith("P") for ch in token)


# --- tokenization ---

def canonicalize(text: str) -> list[tuple[str, bool]]:
    """Split text into (piece, is_special) runs with pattern matches replaced."""
    pieces = []
    pos = 0
    for match in _CANONICAL.finditer(text):
        if match.start() > pos:
            pieces.append((text[pos:match.start()], False))
        pieces.append((CANONICAL_PATTERNS[match.lastindex - 1][0], True))
        pos = match.end()
    if pos < len(text):
        pieces.append((text[pos:], False))
    return pieces


def fmm_segment(sentence: str, dictionary: Iterable[str], max_len: Optional[int] = None) -> list[str]:
    """Forward maximum matching: longest dictionary prefix first, else one character."""
    words = dictionary if isinstance(dictionary, (set, frozenset)) else set(dictionary)
    if not words:
        raise ArgumentError("fmm_segment needs a non-empty dictionary")
    if max_len is None:
        max_len = max(len(w) for w in words)

    tokens = []
    i = 0
    while i < len(sentence):
        for j in range(min(len(sentence), i + max_len), i, -1):
            if sentence[i:j] in words:
                break
        else:
            j = i + 1
        tokens.append(sentence[i:j])
        i = j
    return tokens


def tokenize_line(
    line: str,
    dictionary: set[str],
    canonicalize_numbers: bool = True,
    segment_unknown: bool = True,
    max_len: Optional[int] = None,
) -> list[str]:
    tokens: list[str] = []
    for chunk in line.split():
        if chunk in SPECIAL_TOKENS or chunk in dictionary:
            tokens.append(chunk)
            continue
        pieces = canonicalize(chunk) if canonicalize_numbers else [(chunk, False)]
        for piece, special in pieces:
            if special or piece in dictionary or not segment_unknown:
                tokens.append(piece)
            else:
                tokens.extend(fmm_segment(piece, dictionary, max_len))
    return tokens


# --- vocabulary ---

def build_vocabulary(
    sentences: Iterable[Sequence[str]],
    lexicon: Lexicon,
    min_count: int,
) -> tuple[list[str], Counter]:
    """Tokens seen at least min_count times that the lexicon covers (or punctuation), plus specials."""
    if min_count < 1:
        raise ArgumentError(f"min_count must be >= 1 (got {min_count})")
    counts: Counter = Counter(token for sentence in sentences for token in sentence)
    covered = lexicon.word_index
    kept = {t for t, c in counts.items() if c >= min_count and (t in covered or is_punctuation(t))}
    vocabulary = [w for w in lexicon.words if w in kept]
    vocabulary += sorted(t for t in kept if t not in covered)
    vocabulary += [t for t in SPECIAL_TOKENS if t not in kept]
    return vocabulary, counts


def restrict_lexicon(lexicon: Lexicon, vocabulary: Sequence[str]) -> Lexicon:
    """Keep only vocabulary words; uncovered vocabulary entries get special sememes."""
    keep = set(vocabulary)
    entries = [
        (word, [[lexicon.sememes[k] for k in lexicon.sense_sememes[s]] for s in lexicon.word_senses[w]])
        for w, word in enumerate(lexicon.words)
        if word in keep
    ]
    covered = {word for word, _ in entries}
    return with_special_tokens(build_lexicon(entries), [t for t in vocabulary if t not in covered])


def map_unknown(sentences: Iterable[Sequence[str]], vocabulary: set[str]) -> list[list[str]]:
    return [[t if t in vocabulary else UNK for t in sentence] for sentence in sentences]


def preprocess(
    splits: dict[str, Sequence[str]],
    lexicon: Lexicon,
    min_count: int = 5,
    canonicalize_numbers: bool = True,
    segment_unknown: bool = True,
    train_split: str = "train",
) -> PreprocessResult:
    """Tokenize raw lines of every split and freeze the vocabulary on the training split."""
    if train_split not in splits:
        raise ArgumentError(f"missing {train_split!r} split")
    dictionary = set(lexicon.words)
    max_len = max(len(w) for w in dictionary)

    tokenized = {
        name: [tokenize_line(line, dictionary, canonicalize_numbers, segment_unknown, max_len) for line in lines]
        for name, lines in splits.items()
    }
    tokenized = {name: [s for s in sentences if s] for name, sentences in tokenized.items()}

    vocabulary, counts = build_vocabulary(tokenized[train_split], lexicon, min_count)
    vocab_set = set(vocabulary)
    mapped = {name: map_unknown(sentences, vocab_set) for name, sentences in tokenized.items()}

    total = sum(len(s) for s in mapped[train_split])
    unk = sum(s.count(UNK) for s in mapped[train_split])
    result = PreprocessResult(
        splits=mapped,
        lexicon=restrict_lexicon(lexicon, vocabulary),
        counts=counts,
        unk_rate=unk / total if total else 0.0,
    )
    logger.info(
        f"Preprocessed {total} training tokens: vocabulary {result.lexicon.N}, "
        f"<unk> rate {result.unk_rate:.2%}"
    )
    return result


def split_sentences(
    sentences: Sequence[Sequence[str]],
    proportions: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 1,
    names: Sequence[str] = ("train", "valid", "test"),
) -> dict[str, list[list[str]]]:
    """Shuffle sentences, then cut by cumulative token share."""
    if len(proportions) != len(names) or any(p < 0 for p in proportions) or sum(proportions) <= 0:
        raise ArgumentError("proportions must be non-negative, one per split, not all zero")
    order = np.random.default_rng(seed).permutation(len(sentences))
    shuffled = [list(sentences[i]) for i in order]

    lengths = np.array([len(s) for s in shuffled], dtype=np.float64)
    cumulative = np.cumsum(lengths) / max(lengths.sum(), 1.0)
    bounds = np.cumsum(proportions) / np.sum(proportions)
    assignment = np.searchsorted(bounds, cumulative, side="left")
    assignment = np.minimum(assignment, len(names) - 1)

    result: dict[str, list[list[str]]] = {name: [] for name in names}
    for sentence, idx in zip(shuffled, assignment):
        result[names[idx]].append(sentence)
    return result


# --- files ---

def read_text_lines(path: str) -> list[str]:
    """UTF-8 lines without terminators; malformed bytes raise InputError with the line number."""
    lines = []
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, 1):
            try:
                lines.append(raw.decode("utf-8").rstrip("\r\n"))
            except UnicodeDecodeError as e:
                raise InputError(f"{path}: malformed UTF-8 ({e.reason})", lineno) from None
    return lines


def read_token_file(path: str) -> list[list[str]]:
    return [line.split() for line in read_text_lines(path) if line.strip()]


def write_token_file(path: str, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sentence in sentences:
            f.write(" ".join(sentence) + "\n")


def encode_sentences(sentences: Iterable[Sequence[str]], lexicon: Lexicon) -> list[np.ndarray]:
    """Token strings to word-id arrays, falling back to <unk>."""
    index = lexicon.word_index
    unk = index.get(UNK)
    encoded = []
    for sentence in sentences:
        ids = []
        for token in sentence:
            w = index.get(token, unk)
            if w is None:
                raise ArgumentError(f"token {token!r} is not in the vocabulary and there is no {UNK}")
            ids.append(w)
        encoded.append(np.array(ids, dtype=np.int64))
    return encoded


def flatten(sentences: Sequence[np.ndarray]) -> np.ndarray:
    if not sentences:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(sentences)


def write_preprocessed(result: PreprocessResult, out_dir: str) -> dict[str, str]:
    """Write <split>.txt token files and vocab.tsv; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, sentences in result.splits.items():
        paths[name] = os.path.join(out_dir, f"{name}.txt")
        write_token_file(paths[name], sentences)
    paths["lexicon"] = os.path.join(out_dir, "vocab.tsv")
    save_lexicon(result.lexicon, paths["lexicon"])
    return paths
