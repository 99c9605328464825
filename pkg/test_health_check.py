import numpy as np

import health_check
from health_check import CheckResult, check_gating_limit, check_oracle, check_parameter_accounting, print_summary, random_instance


def test_random_instance_is_small_and_valid(rng):
    for _ in range(10):
        model = random_instance(rng, max_words=30)
        model.lexicon.check_invariants()
        assert 1 <= model.lexicon.N <= 30
        assert model.lexicon.N <= model.lexicon.M <= 3 * model.lexicon.N


def test_cheap_checks_pass(rng):
    assert check_oracle(rng, instances=5).passed
    assert check_gating_limit(rng, instances=5).passed
    assert check_parameter_accounting(rng).passed


def test_run_checks_captures_failures(monkeypatch):
    def boom(rng):
        raise RuntimeError("bad instance")

    monkeypatch.setattr(health_check, "CHECKS", (
        ("ok", lambda rng: CheckResult("ok", True, "fine")),
        ("boom", boom),
    ))
    results = health_check.run_checks(seed=5)
    assert [r.passed for r in results] == [True, False]
    assert "RuntimeError: bad instance" in results[1].detail


def test_run_checks_defaults_to_configured_seed(monkeypatch):
    seen = []
    monkeypatch.setenv("SDLM_SEED", "42")
    monkeypatch.setattr(health_check, "CHECKS", (
        ("draw", lambda rng: seen.append(rng.integers(1 << 30)) or CheckResult("draw", True, "")),
    ))
    health_check.run_checks()
    assert seen[0] == np.random.default_rng([42, 0]).integers(1 << 30)


def test_print_summary(capsys):
    assert print_summary([CheckResult("a", True, "fine")])
    assert "ALL CHECKS PASSED!" in capsys.readouterr().out

    assert not print_summary([CheckResult("a", True, "fine"), CheckResult("b", False, "broken")])
    out = capsys.readouterr().out
    assert "Total Checks: 2" in out
    assert "Failed: 1" in out
    assert "[FAIL] broken" in out


def test_main_exit_code(monkeypatch):
    monkeypatch.setattr(health_check, "run_checks", lambda seed=None: [CheckResult("a", False, "x")])
    assert health_check.main(seed=1) == 1
    monkeypatch.setattr(health_check, "run_checks", lambda seed=None: [CheckResult("a", True, "x")])
    assert health_check.main(seed=1) == 0
