import pytest

import config
from config import CorpusSpec, DecoderKind, TrainConfig, get_config
from errors import ConfigError
from lexicon import NormalizationMode


def test_defaults_are_valid():
    cfg = TrainConfig()
    assert cfg.validate() == []
    assert cfg.lr0 == 1.0 and cfg.clip_norm == 5.0
    assert cfg.decoder_kind == DecoderKind.SDLM
    assert cfg.check() is cfg


def test_validate_collects_every_problem():
    cfg = TrainConfig(lr0=0.0, batch_size=0, bptt_len=0, dropout_rate=1.0, precision="float16", basis=0)
    problems = cfg.validate()
    assert any("lr0" in p for p in problems)
    assert any("batch_size" in p for p in problems)
    assert sum("bptt_len" in p for p in problems) == 1
    assert any("dropout_rate" in p for p in problems)
    assert any("precision" in p for p in problems)
    assert any("basis" in p for p in problems)
    with pytest.raises(ConfigError) as exc:
        cfg.check()
    assert exc.value.problems == problems


def test_baseline_needs_tied_dims():
    cfg = TrainConfig(decoder_kind=DecoderKind.BASELINE, input_dim=32, context_dim=64)
    assert cfg.validate() == ["tied baseline needs input_dim == context_dim"]


def test_dict_round_trip():
    cfg = TrainConfig(decoder_kind=DecoderKind.BASELINE, mode=NormalizationMode.SYMMETRIC, clip_norm=None)
    data = cfg.to_dict()
    assert data["decoder_kind"] == "baseline" and data["mode"] == "symmetric"
    assert TrainConfig.from_dict(data) == cfg


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys: hidden"):
        TrainConfig.from_dict({"hidden": 3})


def test_from_env(monkeypatch):
    monkeypatch.setenv("SDLM_LR", "20")
    monkeypatch.setenv("SDLM_EPOCHS", "3")
    monkeypatch.setenv("SDLM_CLIP_NORM", "none")
    monkeypatch.setenv("SDLM_DECODER", "baseline")
    monkeypatch.setenv("SDLM_NORM", "symmetric")
    monkeypatch.setenv("SDLM_INPUT_DIM", "32")
    monkeypatch.setenv("SDLM_CONTEXT_DIM", "32")

    cfg = TrainConfig.from_env()
    assert cfg.lr0 == 20.0
    assert cfg.max_epochs == 3
    assert cfg.clip_norm is None
    assert cfg.decoder_kind == DecoderKind.BASELINE
    assert cfg.mode == NormalizationMode.SYMMETRIC
    assert cfg.batch_size == TrainConfig().batch_size


def test_from_env_warns_on_problems(monkeypatch, caplog):
    monkeypatch.setenv("SDLM_DROPOUT", "1.5")
    with caplog.at_level("WARNING", logger="config"):
        cfg = TrainConfig.from_env()
    assert cfg.dropout_rate == 1.5
    assert "dropout_rate" in caplog.text


def test_from_env_loads_dotenv(monkeypatch):
    calls = []
    monkeypatch.setattr(config, "load_dotenv", lambda **kwargs: calls.append(kwargs))
    TrainConfig.from_env()
    assert calls == [{"override": True}]


def test_get_config_is_a_singleton(monkeypatch):
    monkeypatch.setenv("SDLM_SEED", "17")
    first = get_config()
    monkeypatch.setenv("SDLM_SEED", "18")
    assert get_config() is first
    assert first.seed == 17


def test_corpus_spec(tmp_path):
    paths = [str(tmp_path / name) for name in ("train.txt", "valid.txt", "test.txt", "lex.tsv")]
    assert CorpusSpec(*paths).validate() == []
    problems = CorpusSpec(paths[0], paths[0], paths[2], paths[3], min_count=0).validate()
    assert len(problems) == 2
    with pytest.raises(ConfigError):
        CorpusSpec(paths[0], paths[0], paths[2], paths[3]).check()


@pytest.mark.parametrize("name, value", [
    ("SDLM_SEED", "seven"),
    ("SDLM_LR", "fast"),
    ("SDLM_DECODER", "transformer"),
    ("SDLM_CLIP_NORM", "off"),
])
def test_from_env_rejects_unparsable_values(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigError) as exc:
        TrainConfig.from_env()
    assert exc.value.problems == [f"{name}={value!r} could not be parsed"]
