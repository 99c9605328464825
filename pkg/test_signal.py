"""
Synthetic-signal runs: the sememe decoder against a tied softmax of the
same size, on data whose transitions really are sememe-driven.
Slow; enable with SDLM_RUN_SLOW=1.
"""

import os

import pytest

from config import DecoderKind, TrainConfig
from corpus import flatten
from evaluation import PARTITIONS, evaluate
from lexicon import ablate_edges
from model import LanguageModel
from synthetic import gen_synthetic
from training import train

pytestmark = pytest.mark.skipif(os.getenv("SDLM_RUN_SLOW") != "1", reason="set SDLM_RUN_SLOW=1 for synthetic-signal runs")

SEEDS = (1, 2, 3)
SDLM_DIM = 32


def _config(seed, kind=DecoderKind.SDLM, dim=SDLM_DIM):
    return TrainConfig(
        decoder_kind=kind, input_dim=dim, context_dim=dim, layers=1, basis=4,
        lr0=1.0, batch_size=20, bptt_len=35, max_epochs=6, seed=seed,
    )


def _matched_baseline_dim(lexicon, seed):
    """Largest tied-softmax width whose parameter count does not exceed the SDLM's."""
    budget = LanguageModel(lexicon, _config(seed)).parameter_count()
    dim = SDLM_DIM
    while LanguageModel(lexicon, _config(seed, DecoderKind.BASELINE, dim + 1)).parameter_count() <= budget:
        dim += 1
    return dim


@pytest.fixture(scope="module")
def runs():
    results = {}
    for seed in SEEDS:
        corpus = gen_synthetic(K=40, M=120, N=80, corpus_len=60_000, signal_strength=0.9, seed=seed)
        lex = corpus.lexicon
        train_ids, valid_ids = flatten(corpus.splits["train"]), flatten(corpus.splits["valid"])
        test = corpus.splits["test"]

        reports = {}
        for name, lexicon, config in (
            ("sdlm", lex, _config(seed)),
            ("ablated", ablate_edges(lex, 0.1, seed), _config(seed)),
            ("baseline", lex, _config(seed, DecoderKind.BASELINE, _matched_baseline_dim(lex, seed))),
        ):
            model = LanguageModel(lexicon, config)
            train(model, train_ids, valid_ids)
            reports[name] = evaluate(model, test, label=name)
        results[seed] = reports
    return results


def test_sememe_decoder_beats_matched_baseline(runs):
    wins = sum(r["sdlm"].ppl < r["baseline"].ppl for r in runs.values())
    assert wins >= 2, {seed: (r["sdlm"].ppl, r["baseline"].ppl) for seed, r in runs.items()}


def test_ablated_lexicon_still_beats_baseline(runs):
    wins = sum(r["ablated"].ppl < r["baseline"].ppl for r in runs.values())
    assert wins >= 2, {seed: (r["ablated"].ppl, r["baseline"].ppl) for seed, r in runs.items()}


def test_bucket_reports_recombine(runs):
    for reports in runs.values():
        for report in reports.values():
            for partition in PARTITIONS:
                assert abs(report.recombined_ppl(partition) / report.ppl - 1.0) < 1e-9
