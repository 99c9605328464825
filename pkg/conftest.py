import os

import numpy as np
import pytest

from config import TrainConfig
from lexicon import Lexicon, parse_lexicon
from model import LanguageModel
from synthetic import random_lexicon

TINY_TSV = """\
# word\tordinal\tsememes
apple\t0\tfruit,food
apple\t1\tcompany,computer
bank\t0\tinstitution,finance
bank\t1\tland,water

river\t0\tland,water
eat\t0\teat,food
run\t0\tmove
run\t1\tmanage,institution
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep SDLM_* overrides from a developer shell or .env out of the tests."""
    for key in list(os.environ):
        if key.startswith("SDLM_") and key != "SDLM_RUN_SLOW":
            monkeypatch.delenv(key, raising=False)
    monkeypatch.setattr("config.load_dotenv", lambda *a, **k: False)
    monkeypatch.setattr("config._config", None)


@pytest.fixture
def tiny_lexicon() -> Lexicon:
    return parse_lexicon(TINY_TSV.splitlines(keepends=True))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def grad_lexicon() -> Lexicon:
    """12 words, 16 senses, 8 sememes."""
    return random_lexicon(8, 16, 12, np.random.default_rng(7))


def small_config(**overrides) -> TrainConfig:
    values = dict(
        input_dim=6,
        context_dim=6,
        layers=1,
        basis=3,
        init_scale=0.5,
        batch_size=2,
        bptt_len=4,
        max_epochs=2,
        seed=3,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def make_model():
    def factory(lexicon: Lexicon, **overrides) -> LanguageModel:
        return LanguageModel(lexicon, small_config(**overrides))
    return factory

