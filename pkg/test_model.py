import numpy as np
import pytest

from config import DecoderKind, TrainConfig
from conftest import small_config
from errors import ArgumentError, ConfigError
from model import LanguageModel
from numerics import Tape, grad_check


def test_parameter_count_matches_shapes(tiny_lexicon, make_model):
    model = make_model(tiny_lexicon, layers=2)
    assert model.parameter_count() == sum(int(np.prod(p.shape)) for p in model.params.values())


def test_extra_parameters_closed_form(tiny_lexicon):
    sdlm = LanguageModel(tiny_lexicon, small_config(input_dim=5, context_dim=5, basis=4))
    baseline = LanguageModel(tiny_lexicon, small_config(input_dim=5, context_dim=5, basis=4, decoder_kind=DecoderKind.BASELINE))
    K = tiny_lexicon.K
    expected = K * (5 + 1) + 4 * 5 * 5 + K * 4
    assert sdlm.parameter_count() - baseline.parameter_count() == expected
    assert sdlm.extra_parameters() == expected
    assert baseline.extra_parameters() == 0


def test_sdlm_allows_distinct_context_dim(tiny_lexicon):
    model = LanguageModel(tiny_lexicon, small_config(input_dim=4, context_dim=7))
    assert model.params["basis"].shape == (3, 7, 4)
    assert model.params["sememe.weight"].shape == (tiny_lexicon.K, 7)


def test_baseline_needs_equal_dims(tiny_lexicon):
    with pytest.raises(ConfigError):
        LanguageModel(tiny_lexicon, small_config(input_dim=4, context_dim=7, decoder_kind=DecoderKind.BASELINE))


def test_embedding_is_shared_storage(tiny_lexicon, make_model):
    model = make_model(tiny_lexicon)
    assert model.encoder.embedding is model.decoder.embedding is model.params["embedding"]

    arrays = {name: np.full(a.shape, 0.01) for name, a in model.state_arrays().items()}
    model.load_arrays(arrays)
    assert model.decoder.embedding.data is model.encoder.embedding.data
    assert np.all(model.decoder.embedding.data == 0.01)


def test_load_arrays_rejects_mismatch(tiny_lexicon, make_model):
    model = make_model(tiny_lexicon)
    arrays = model.state_arrays()
    arrays["embedding"] = np.zeros((2, 2))
    with pytest.raises(ArgumentError):
        model.load_arrays(arrays)


def test_same_seed_same_weights(tiny_lexicon, make_model):
    a, b = make_model(tiny_lexicon), make_model(tiny_lexicon)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    c = make_model(tiny_lexicon, seed=99)
    assert not np.array_equal(a.params["embedding"].data, c.params["embedding"].data)


def test_init_is_uniform_in_scale(tiny_lexicon):
    model = LanguageModel(tiny_lexicon, TrainConfig(input_dim=8, context_dim=8, layers=1))
    for p in model.params.values():
        assert np.all(np.abs(p.data) <= 0.1)


def test_log_probs_rows_normalize(tiny_lexicon, make_model, rng):
    model = make_model(tiny_lexicon)
    ids = rng.integers(0, tiny_lexicon.N, size=(3, 2))
    log_p, state = model.log_probs(Tape(record=False), ids, model.initial_state(2))
    assert log_p.shape == (6, tiny_lexicon.N)
    assert np.allclose(np.exp(log_p.data).sum(axis=1), 1.0, atol=1e-12)
    assert state.batch_size == 2


def test_context_of_empty_sequence(tiny_lexicon, make_model):
    model = make_model(tiny_lexicon)
    assert not model.context([]).any()
    assert model.context([0, 1]).shape == (6,)


def test_float32_precision(tiny_lexicon, make_model, rng):
    model = make_model(tiny_lexicon, precision="float32")
    assert all(p.data.dtype == np.float32 for p in model.params.values())
    loss, _ = model.loss(Tape(), rng.integers(0, 5, size=(2, 2)), rng.integers(0, 5, size=(2, 2)), model.initial_state(2))
    assert np.isfinite(loss.item())


@pytest.mark.parametrize("kind", list(DecoderKind))
def test_end_to_end_gradients(grad_lexicon, kind):
    dims = dict(input_dim=6, context_dim=5) if kind == DecoderKind.SDLM else dict(input_dim=5, context_dim=5)
    model = LanguageModel(grad_lexicon, small_config(layers=2, decoder_kind=kind, **dims))
    ids = np.random.default_rng(11).integers(0, grad_lexicon.N, size=(5, 2))

    def loss(tape):
        value, _ = model.loss(tape, ids[:-1], ids[1:], model.initial_state(2))
        return value

    # central differences over a full LSTM pass carry ~1e-11 of cancellation noise
    report = grad_check(loss, model.params, step=1e-5, tolerance=1e-4, floor=1e-5)
    assert report.passed, report.lines()
    if kind == DecoderKind.SDLM:
        assert {"embedding", "lstm.0.weight", "sememe.weight", "sememe.bias", "basis", "mixture"} <= set(report.errors)
