"""
Perplexity evaluation and the analyses built on it.

Per-token NLLs are collected once, then partitioned two ways: by the
target word's sense count (=1 / >1) and by its mean sememe count per
sense. Bucket perplexities recombine to the overall one in log space.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from config import TrainConfig
from decoder import top_k_report
from errors import ArgumentError, ContractViolation
from lexicon import Lexicon, ablate_edges
from model import LanguageModel
from numerics import Tape
from training import train

logger = logging.getLogger(__name__)

SENSE_BUCKETS = ("=1", ">1")
SEMEME_EDGES = (1.0, 2.0, 4.0, 7.0, 14.0)
SEMEME_BUCKETS = ("[1,2)", "[2,4)", "[4,7)", "[7,14)", "[14,inf)")

PARTITIONS = {
    "senses": SENSE_BUCKETS,
    "sememes": SEMEME_BUCKETS,
}

# Numeric bounds of each bucket for the table file
_BUCKET_BOUNDS = {
    "=1": (1.0, 2.0),
    ">1": (2.0, math.inf),
    "[1,2)": (1.0, 2.0),
    "[2,4)": (2.0, 4.0),
    "[4,7)": (4.0, 7.0),
    "[7,14)": (7.0, 14.0),
    "[14,inf)": (14.0, math.inf),
}


@dataclass
class BucketStats:
    tokens: int = 0
    nll_sum: float = 0.0

    @property
    def ppl(self) -> Optional[float]:
        if self.tokens == 0:
            return None
        return math.exp(self.nll_sum / self.tokens)


@dataclass
class EvalReport:
    label: str
    tokens: int
    nll_sum: float
    buckets: dict[str, dict[str, BucketStats]] = field(default_factory=dict)
    corpus_digest: str = ""
    reset_per_sentence: bool = True

    @property
    def ppl(self) -> float:
        return math.exp(self.nll_sum / self.tokens)

    def recombined_ppl(self, partition: str) -> float:
        """exp of the token-weighted mean of log bucket perplexities."""
        parts = [b for b in self.buckets[partition].values() if b.tokens]
        weighted = math.fsum(b.tokens * math.log(b.ppl) for b in parts)
        return math.exp(weighted / sum(b.tokens for b in parts))


@dataclass
class ComparisonRow:
    partition: str
    bucket: str
    tokens: int
    ppl_a: Optional[float]
    ppl_b: Optional[float]

    @property
    def delta(self) -> Optional[float]:
        if self.ppl_a is None or self.ppl_b is None:
            return None
        return self.ppl_a - self.ppl_b

    @property
    def ratio(self) -> Optional[float]:
        """Delta relative to the first (reference) model."""
        delta = self.delta
        return None if delta is None else delta / self.ppl_a


@dataclass
class RobustnessResult:
    fraction: float
    edges_full: int
    edges_ablated: int
    ppl_full: float
    ppl_ablated: float

    @property
    def degradation(self) -> float:
        return self.ppl_ablated - self.ppl_full


@dataclass
class CaseStudy:
    context: list[str]
    target: Optional[str]
    words: list[tuple[str, float]]
    sememes: list[tuple[str, float, bool]]


# --- corpus identity ---

def corpus_digest(sentences: Sequence[np.ndarray]) -> str:
    h = hashlib.sha256()
    for ids in sentences:
        ids = np.asarray(ids, dtype="<i8")
        h.update(np.int64(ids.size).astype("<i8").tobytes())
        h.update(ids.tobytes())
    return h.hexdigest()


# --- per-token scoring ---

def _check_ids(ids: np.ndarray, N: int) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= N):
        raise ContractViolation(f"token id outside the vocabulary [0, {N}); map OOV words to <unk> first")


def _score_sentences(model: LanguageModel, sentences: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Fresh state per sentence; the first token of each sentence is context only."""
    nlls, targets = [], []
    for ids in sentences:
        if ids.shape[0] < 2:
            continue
        log_p, _ = model.log_probs(Tape(record=False), ids[:-1, None], model.initial_state(1))
        tgt = ids[1:]
        nlls.append(-log_p.data[np.arange(tgt.shape[0]), tgt])
        targets.append(tgt)
    if not nlls:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(nlls).astype(np.float64), np.concatenate(targets)


def _score_stream(model: LanguageModel, sentences: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """State carried across sentence boundaries; only the very first token is unscored."""
    stream = np.concatenate([np.asarray(s, dtype=np.int64) for s in sentences]) if sentences else np.zeros(0, np.int64)
    nlls, targets = [], []
    state = model.initial_state(1)
    window = model.config.bptt_len
    for start in range(0, max(stream.shape[0] - 1, 0), window):
        inputs = stream[start:start + window]
        tgt = stream[start + 1:start + 1 + window]
        inputs = inputs[:tgt.shape[0]]
        log_p, state = model.log_probs(Tape(record=False), inputs[:, None], state)
        nlls.append(-log_p.data[np.arange(tgt.shape[0]), tgt])
        targets.append(tgt)
    if not nlls:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(nlls).astype(np.float64), np.concatenate(targets)


def token_nlls(
    model: LanguageModel,
    sentences: Sequence[np.ndarray],
    reset_per_sentence: bool = True,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-target NLLs and target ids, in corpus order whatever the worker count."""
    sentences = [np.asarray(s, dtype=np.int64).reshape(-1) for s in sentences]
    for ids in sentences:
        _check_ids(ids, model.lexicon.N)

    if not reset_per_sentence:
        return _score_stream(model, sentences)
    if workers <= 1 or len(sentences) < 2:
        return _score_sentences(model, sentences)

    shards = [list(chunk) for chunk in np.array_split(np.arange(len(sentences)), workers) if len(chunk)]
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        parts = list(pool.map(lambda idx: _score_sentences(model, [sentences[i] for i in idx]), shards))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sememe_bucket(mean_sememes: float) -> str:
    for label, lower, upper in zip(SEMEME_BUCKETS, SEMEME_EDGES, SEMEME_EDGES[1:] + (math.inf,)):
        if lower <= mean_sememes < upper:
            return label
    raise ContractViolation(f"mean sememe count {mean_sememes} below 1")


def bucket_report(
    nlls: np.ndarray,
    targets: np.ndarray,
    lexicon: Lexicon,
    label: str = "",
    digest: str = "",
    reset_per_sentence: bool = True,
) -> EvalReport:
    if nlls.shape[0] == 0:
        raise ArgumentError("nothing to evaluate: no sentence has two or more tokens")

    sense_of = {w: "=1" if n == 1 else ">1" for w, n in enumerate(lexicon.senses_per_word)}
    sememe_of = {w: sememe_bucket(float(m)) for w, m in enumerate(lexicon.mean_sememes_by_word)}

    buckets = {name: {b: BucketStats() for b in names} for name, names in PARTITIONS.items()}
    grouped: dict[tuple[str, str], list[float]] = {}
    for nll, w in zip(nlls.tolist(), targets.tolist()):
        grouped.setdefault(("senses", sense_of[w]), []).append(nll)
        grouped.setdefault(("sememes", sememe_of[w]), []).append(nll)
    for (partition, bucket), values in grouped.items():
        buckets[partition][bucket] = BucketStats(tokens=len(values), nll_sum=math.fsum(values))

    return EvalReport(
        label=label,
        tokens=int(nlls.shape[0]),
        nll_sum=math.fsum(nlls.tolist()),
        buckets=buckets,
        corpus_digest=digest,
        reset_per_sentence=reset_per_sentence,
    )


def evaluate(
    model: LanguageModel,
    sentences: Sequence[np.ndarray],
    reset_per_sentence: bool = True,
    workers: int = 1,
    label: str = "",
) -> EvalReport:
    """Perplexity with dropout off, overall and per bucket."""
    nlls, targets = token_nlls(model, sentences, reset_per_sentence, workers)
    report = bucket_report(
        nlls, targets, model.lexicon,
        label=label or model.config.decoder_kind.value,
        digest=corpus_digest(sentences),
        reset_per_sentence=reset_per_sentence,
    )
    logger.info(f"Evaluated {report.label}: ppl={report.ppl:.3f} over {report.tokens} tokens")
    return report


# --- comparison ---

def compare(a: EvalReport, b: EvalReport) -> list[ComparisonRow]:
    """Rows of (ppl_a, ppl_b, delta = a - b, ratio = delta / a), overall first."""
    if a.corpus_digest != b.corpus_digest or a.tokens != b.tokens:
        raise ArgumentError("reports were computed on different corpora")
    if a.reset_per_sentence != b.reset_per_sentence:
        raise ArgumentError("reports use different state handling at sentence boundaries")

    rows = [ComparisonRow("all", "all", a.tokens, a.ppl, b.ppl)]
    for partition, names in PARTITIONS.items():
        for bucket in names:
            sa, sb = a.buckets[partition][bucket], b.buckets[partition][bucket]
            rows.append(ComparisonRow(partition, bucket, sa.tokens, sa.ppl, sb.ppl))
    return rows


def _fmt(value: Optional[float], spec: str = ".2f") -> str:
    return "-" if value is None else format(value, spec)


def format_comparison(rows: list[ComparisonRow], label_a: str = "a", label_b: str = "b") -> str:
    lines = [f"partition\tbucket\ttokens\t{label_a}\t{label_b}\tdelta\tdelta/{label_a}"]
    for r in rows:
        ratio = "-" if r.ratio is None else f"{100 * r.ratio:.1f}%"
        lines.append(
            f"{r.partition}\t{r.bucket}\t{r.tokens}\t{_fmt(r.ppl_a)}\t{_fmt(r.ppl_b)}\t{_fmt(r.delta)}\t{ratio}"
        )
    return "\n".join(lines) + "\n"


# --- report files ---

def format_report(report: EvalReport) -> str:
    """One `key: value` pair per line."""
    lines = [
        f"label: {report.label}",
        f"corpus_digest: {report.corpus_digest}",
        f"reset_per_sentence: {str(report.reset_per_sentence).lower()}",
        f"tokens: {report.tokens}",
        f"ppl: {report.ppl!r}",
    ]
    for partition, names in PARTITIONS.items():
        for bucket in names:
            stats = report.buckets[partition][bucket]
            lines.append(f"{partition}{bucket}.tokens: {stats.tokens}")
            lines.append(f"{partition}{bucket}.ppl: {'-' if stats.ppl is None else repr(stats.ppl)}")
    return "\n".join(lines) + "\n"


def format_table(report: EvalReport) -> str:
    """Tab-separated numeric rows: partition (0 all, 1 senses, 2 sememes), bounds, counts, ppl."""
    lines = ["partition\tlower\tupper\ttokens\tnll_sum\tppl"]
    lines.append(f"0\t-inf\tinf\t{report.tokens}\t{report.nll_sum!r}\t{report.ppl!r}")
    for code, (partition, names) in enumerate(PARTITIONS.items(), 1):
        for bucket in names:
            stats = report.buckets[partition][bucket]
            lower, upper = _BUCKET_BOUNDS[bucket]
            ppl = "nan" if stats.ppl is None else repr(stats.ppl)
            lines.append(f"{code}\t{lower!r}\t{upper!r}\t{stats.tokens}\t{stats.nll_sum!r}\t{ppl}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path: str, table_path: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_report(report))
    if table_path:
        with open(table_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_table(report))
    logger.info(f"Wrote report to {path}")


# --- robustness ---

def robustness_run(
    config: TrainConfig,
    lexicon: Lexicon,
    fraction: float,
    seed: int,
    train_ids: np.ndarray,
    valid_ids: Optional[np.ndarray],
    test_sentences: Sequence[np.ndarray],
) -> RobustnessResult:
    """Train twice with identical config and seed, on the full and on an ablated lexicon."""
    ablated = ablate_edges(lexicon, fraction, seed)

    perplexities = []
    for lex in (lexicon, ablated):
        model = LanguageModel(lex, config)
        train(model, train_ids, valid_ids)
        perplexities.append(evaluate(model, test_sentences).ppl)

    result = RobustnessResult(
        fraction=fraction,
        edges_full=lexicon.edge_count,
        edges_ablated=ablated.edge_count,
        ppl_full=perplexities[0],
        ppl_ablated=perplexities[1],
    )
    logger.info(
        f"Robustness at {fraction:.0%}: ppl {result.ppl_full:.3f} -> {result.ppl_ablated:.3f} "
        f"({result.edges_full} -> {result.edges_ablated} edges)"
    )
    return result


# --- case study ---

def case_study(
    model: LanguageModel,
    context_ids: Sequence[int],
    k: int = 5,
    target: Optional[int] = None,
) -> CaseStudy:
    """Top-k next words and sememes after a context; sememes annotated on target are flagged."""
    lex = model.lexicon
    ids = np.asarray(context_ids, dtype=np.int64)
    _check_ids(ids, lex.N)
    report = top_k_report(model.context(ids), model.decoder, lex, k)
    annotated = lex.sememes_of_word(target) if target is not None else set()
    return CaseStudy(
        context=[lex.words[i] for i in ids.tolist()],
        target=lex.words[target] if target is not None else None,
        words=[(lex.words[w], p) for w, p in report.words],
        sememes=[(lex.sememes[s], q, s in annotated) for s, q in report.sememes],
    )


def format_case_study(study: CaseStudy) -> str:
    lines = [f"context: {' '.join(study.context)}"]
    if study.target is not None:
        lines.append(f"target: {study.target}")
    lines.append("words:")
    lines.extend(f"  {word}\t{p:.6f}" for word, p in study.words)
    if study.sememes:
        lines.append("sememes:")
        lines.extend(f"  {'*' if hit else ' '}{label}\t{q:.6f}" for label, q, hit in study.sememes)
    return "\n".join(lines) + "\n"
