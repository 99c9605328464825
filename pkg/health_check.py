"""
Health check for the numeric core.

Runs the property checks on random small instances and prints a colored
summary: distributions normalize, the factorized and naive sense logits
agree, analytic gradients match finite differences, zero gates give the
sense-multiplicity uniform distribution, and the extra-parameter count
matches the closed form.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config import DecoderKind, TrainConfig, get_config
from decoder import predict_words
from lexicon import Lexicon, NormalizationMode
from model import LanguageModel
from numerics import grad_check
from synthetic import random_lexicon

logger = logging.getLogger(__name__)

# Colors for output
GREEN = "\033[92m"
RED = "\033[91m"
YELLOW = "\033[93m"
BOLD = "\033[1m"
RESET = "\033[0m"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def random_instance(rng: np.random.Generator, max_words: int = 100, dim: int = 8, basis: Optional[int] = None) -> LanguageModel:
    """A small SDLM with random lexicon, dims and weights (float64)."""
    N = int(rng.integers(1, max_words + 1))
    M = int(rng.integers(N, min(3 * N, max_words) + 1)) if N < max_words else N
    K = int(rng.integers(1, 31))
    lex = random_lexicon(K, M, N, rng)
    config = TrainConfig(
        decoder_kind=DecoderKind.SDLM,
        mode=NormalizationMode.LEFT if rng.random() < 0.5 else NormalizationMode.SYMMETRIC,
        basis=basis or int(rng.integers(1, 9)),
        input_dim=dim,
        context_dim=dim,
        layers=1,
        init_scale=0.5,
        seed=int(rng.integers(0, 2**31)),
    )
    return LanguageModel(lex, config)


def check_normalization(rng: np.random.Generator, instances: int = 200) -> CheckResult:
    worst_sense, worst_word, worst_identity = 0.0, 0.0, 0.0
    for _ in range(instances):
        model = random_instance(rng)
        g = rng.normal(size=model.config.context_dim)
        senses = model.decoder.predict_senses(g)
        words = predict_words(senses, model.lexicon)
        sense_total = math.fsum(senses.probs)
        word_total = math.fsum(words.probs)
        worst_sense = max(worst_sense, abs(sense_total - 1.0))
        worst_word = max(worst_word, abs(word_total - 1.0))
        worst_identity = max(worst_identity, abs(word_total - sense_total))
    # each P(w) is rounded once after its exact sense sum, so sum_w and sum_s
    # agree to a few ulp rather than bitwise
    passed = worst_sense < 1e-9 and worst_word < 1e-9 and worst_identity <= 4 * np.finfo(np.float64).eps
    return CheckResult(
        "Normalization",
        passed,
        f"max |sum-1| senses={worst_sense:.2e} words={worst_word:.2e}, "
        f"max |sum_w - sum_s|={worst_identity:.2e} over {instances} instances",
    )


def check_oracle(rng: np.random.Generator, instances: int = 100) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        model = random_instance(rng)
        g = rng.normal(size=model.config.context_dim)
        fast = model.decoder.sense_logits(g)
        slow = model.decoder.naive_sense_logits(g)
        worst = max(worst, float(np.max(np.abs(fast - slow) / np.maximum(np.abs(slow), 1e-12))))
    return CheckResult("Oracle equivalence", worst < 1e-10, f"max relative difference {worst:.2e}")


def check_gradients(rng: np.random.Generator) -> CheckResult:
    lex = random_lexicon(8, 16, 12, rng)
    config = TrainConfig(input_dim=6, context_dim=5, layers=2, basis=3, init_scale=0.5, seed=int(rng.integers(0, 2**31)))
    model = LanguageModel(lex, config)
    ids = rng.integers(0, lex.N, size=(5, 2))

    def loss(tape):
        value, _ = model.loss(tape, ids[:-1], ids[1:], model.initial_state(2))
        return value

    # central differences over a full LSTM pass carry ~1e-11 of cancellation noise
    report = grad_check(loss, model.params, step=1e-5, tolerance=1e-4, floor=1e-5)
    name, err = report.worst()
    return CheckResult("Gradient check", report.passed, f"worst group {name}: {err:.2e}")


def check_gating_limit(rng: np.random.Generator, instances: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        model = random_instance(rng)
        lex: Lexicon = model.lexicon
        g = rng.normal(size=model.config.context_dim)
        senses = model.decoder.predict_senses(g, gates=np.zeros(lex.K))
        words = predict_words(senses, lex)
        expected = lex.senses_per_word / lex.M
        worst = max(worst, float(np.max(np.abs(words.probs - expected))))
    return CheckResult("Gating limit", worst < 1e-15, f"max deviation from |S(w)|/M {worst:.2e}")


def check_parameter_accounting(rng: np.random.Generator) -> CheckResult:
    lex = random_lexicon(20, 40, 25, rng)
    sdlm = LanguageModel(lex, TrainConfig(input_dim=16, context_dim=16, basis=4, layers=1))
    baseline = LanguageModel(lex, TrainConfig(input_dim=16, context_dim=16, basis=4, layers=1, decoder_kind=DecoderKind.BASELINE))
    measured = sdlm.parameter_count() - baseline.parameter_count()
    expected = lex.K * (16 + 1) + 4 * 16 * 16 + lex.K * 4
    passed = measured == expected == sdlm.extra_parameters()
    return CheckResult("Parameter accounting", passed, f"extra={measured}, closed form={expected}")


CHECKS: tuple[tuple[str, Callable[[np.random.Generator], CheckResult]], ...] = (
    ("normalization", check_normalization),
    ("oracle", check_oracle),
    ("gradients", check_gradients),
    ("gating", check_gating_limit),
    ("parameters", check_parameter_accounting),
)


def run_checks(seed: Optional[int] = None) -> list[CheckResult]:
    seed = get_config().seed if seed is None else seed
    results = []
    for name, check in CHECKS:
        started = time.time()
        rng = np.random.default_rng([seed, len(results)])
        try:
            result = check(rng)
        except Exception as e:
            logger.exception(f"Check {name} raised")
            result = CheckResult(name, False, f"raised {type(e).__name__}: {e}")
        result.seconds = time.time() - started
        results.append(result)
    return results


def print_summary(results: list[CheckResult]) -> bool:
    for r in results:
        print(f"\n{BOLD}--- {r.name} ---{RESET}")
        color, tag = (GREEN, "[OK]") if r.passed else (RED, "[FAIL]")
        print(f"{color}{tag} {r.detail} ({r.seconds:.1f}s){RESET}")

    print(f"\n{BOLD}--- Execution Summary ---{RESET}")
    passed = sum(1 for r in results if r.passed)
    print(f"Total Checks: {len(results)}")
    print(f"Passed: {passed}")
    print(f"Failed: {len(results) - passed}")

    if passed == len(results):
        print(f"\n{GREEN}{BOLD}ALL CHECKS PASSED!{RESET}")
        return True
    print(f"\n{YELLOW}{BOLD}Some checks failed.{RESET}")
    return False


def main(seed: Optional[int] = None) -> int:
    print(f"\n{BOLD}Starting numeric health check...{RESET}")
    return 0 if print_summary(run_checks(seed)) else 1


if __name__ == "__main__":
    logging.basicConfig(level=logging.ERROR)
    raise SystemExit(main())
