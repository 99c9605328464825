"""
Language model = encoder + decoder over one parameter store.

The embedding table is a single Tensor handed to both the encoder (input
rows) and the decoder (output rows), so weight tying is by identity and
the tape accumulates both gradient contributions into it.
"""

import logging
from typing import Optional

import numpy as np

from config import DecoderKind, TrainConfig
from decoder import Decoder, SememeDecoder, TiedSoftmaxDecoder, sdlm_extra_parameters
from encoder import Encoder, EncoderState
from errors import ArgumentError
from lexicon import Lexicon
from numerics import Tape, Tensor, parameter

logger = logging.getLogger(__name__)


class LanguageModel:
    """LSTM language model with either the SDLM or the tied softmax decoder."""

    def __init__(self, lexicon: Lexicon, config: TrainConfig, seed: Optional[int] = None):
        config.check()
        self.lexicon = lexicon
        self.config = config
        self.dtype = np.dtype(config.precision)

        rng = np.random.default_rng(config.seed if seed is None else seed)
        scale = config.init_scale
        H0, H1 = config.input_dim, config.context_dim

        def init(name: str, *shape: int) -> Tensor:
            return parameter(rng.uniform(-scale, scale, size=shape), name, self.dtype)

        self.params: dict[str, Tensor] = {"embedding": init("embedding", lexicon.N, H0)}
        weights, biases = [], []
        for layer in range(config.layers):
            in_dim = H0 if layer == 0 else H1
            weights.append(init(f"lstm.{layer}.weight", in_dim + H1, 4 * H1))
            biases.append(init(f"lstm.{layer}.bias", 4 * H1))
            self.params[weights[-1].name] = weights[-1]
            self.params[biases[-1].name] = biases[-1]

        self.encoder = Encoder(config.encoder(), self.params["embedding"], weights, biases)

        self.decoder: Decoder
        if config.decoder_kind == DecoderKind.SDLM:
            for tensor in (
                init("sememe.weight", lexicon.K, H1),
                init("sememe.bias", lexicon.K),
                init("basis", config.basis, H1, H0),
                init("mixture", lexicon.K, config.basis),
            ):
                self.params[tensor.name] = tensor
            self.decoder = SememeDecoder(
                lexicon,
                config.mode,
                self.params["sememe.weight"],
                self.params["sememe.bias"],
                self.params["basis"],
                self.params["mixture"],
                self.params["embedding"],
            )
        else:
            self.decoder = TiedSoftmaxDecoder(lexicon, self.params["embedding"])

        logger.debug(f"Built {config.decoder_kind.value} model with {self.parameter_count()} parameters")

    # --- parameters ---

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def extra_parameters(self) -> int:
        """What the sememe decoder adds over the tied baseline (0 for the baseline)."""
        if self.config.decoder_kind != DecoderKind.SDLM:
            return 0
        return sdlm_extra_parameters(
            self.lexicon.K, self.config.context_dim, self.config.input_dim, self.config.basis
        )

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy values in place so tied references stay shared."""
        if set(arrays) != set(self.params):
            raise ArgumentError("parameter names do not match this model")
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise ArgumentError(f"shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
            p.data[...] = arrays[name]

    # --- forward passes ---

    def initial_state(self, batch_size: int) -> EncoderState:
        return EncoderState.zeros(self.encoder.config, batch_size, self.dtype)

    def loss(
        self,
        tape: Tape,
        inputs: np.ndarray,
        targets: np.ndarray,
        state: EncoderState,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, EncoderState]:
        """Mean NLL of a (T, B) target window; rng=None disables dropout."""
        log_probs, state = self.log_probs(tape, inputs, state, rng)
        return tape.nll_from_logits(log_probs, np.asarray(targets).reshape(-1)), state

    def log_probs(
        self,
        tape: Tape,
        inputs: np.ndarray,
        state: EncoderState,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, EncoderState]:
        """(T * B, N) word log-probabilities, rows ordered time-major."""
        contexts, state = self.encoder.run(tape, inputs, state, rng)
        g = contexts[0] if len(contexts) == 1 else tape.concat(contexts, axis=0)
        return self.decoder.word_log_probs(tape, g), state

    def context(self, ids: np.ndarray) -> np.ndarray:
        """Context vector g after reading a token sequence from a zero state."""
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 1)
        if ids.shape[0] == 0:
            return np.zeros(self.config.context_dim, dtype=self.dtype)
        contexts, _ = self.encoder.run(Tape(record=False), ids, self.initial_state(1))
        return contexts[-1].data[0]
