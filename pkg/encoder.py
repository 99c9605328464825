"""
Recurrent encoder: input embeddings followed by a stack of LSTM layers.
Produces the context vector g for every position of a (T, B) id window.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from config import EncoderConfig
from errors import ArgumentError
from numerics import Tape, Tensor, constant

logger = logging.getLogger(__name__)


@dataclass
class EncoderState:
    """Per-layer hidden and cell values, each (B, H1)."""
    h: list[Tensor]
    c: list[Tensor]

    @classmethod
    def zeros(cls, config: EncoderConfig, batch_size: int, dtype=np.float64) -> 'EncoderState':
        shape = (batch_size, config.context_dim)
        return cls(
            h=[constant(np.zeros(shape), dtype) for _ in range(config.layers)],
            c=[constant(np.zeros(shape), dtype) for _ in range(config.layers)],
        )

    def detach(self) -> 'EncoderState':
        """Keep the values, cut the gradient path (truncated BPTT boundary)."""
        return EncoderState(
            h=[constant(h.data.copy(), h.data.dtype) for h in self.h],
            c=[constant(c.data.copy(), c.data.dtype) for c in self.c],
        )

    @property
    def batch_size(self) -> int:
        return self.h[0].shape[0]


class Encoder:
    """Embedding lookup plus L stacked LSTM cells.

    Gate layout inside each layer's weight columns is (input, forget,
    output, candidate). Dropout is applied to the embedded input and to
    every layer's output, so g is the post-dropout top hidden state.
    """

    def __init__(
        self,
        config: EncoderConfig,
        embedding: Tensor,
        weights: Sequence[Tensor],
        biases: Sequence[Tensor],
    ):
        if len(weights) != config.layers or len(biases) != config.layers:
            raise ArgumentError(f"expected {config.layers} LSTM layers, got {len(weights)}")
        self.config = config
        self.embedding = embedding
        self.weights = list(weights)
        self.biases = list(biases)

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    def embed(self, tape: Tape, ids: Union[int, np.ndarray]) -> Tensor:
        """Rows of the (tied) embedding table for one id or an array of ids."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ArgumentError(f"word id out of range [0, {self.vocab_size})")
        return tape.take(self.embedding, ids, axis=0)

    def step(
        self,
        tape: Tape,
        x: Tensor,
        state: EncoderState,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, EncoderState]:
        """One timestep through every layer; returns (g, new state)."""
        hs, cs = [], []
        inp = x
        for layer in range(self.config.layers):
            z = tape.add(
                tape.matmul(tape.concat([inp, state.h[layer]], axis=1), self.weights[layer]),
                self.biases[layer],
            )
            i, f, o, u = tape.chunk(z, 4, axis=1)
            c = tape.add(
                tape.mul(tape.sigmoid(f), state.c[layer]),
                tape.mul(tape.sigmoid(i), tape.tanh(u)),
            )
            h = tape.mul(tape.sigmoid(o), tape.tanh(c))
            hs.append(h)
            cs.append(c)
            inp = tape.dropout(h, self.config.dropout_rate, rng)
        return inp, EncoderState(h=hs, c=cs)

    def run(
        self,
        tape: Tape,
        inputs: np.ndarray,
        state: EncoderState,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[list[Tensor], EncoderState]:
        """Encode a (T, B) window; returns T context tensors of shape (B, H1)."""
        inputs = np.asarray(inputs, dtype=np.int64)
        if inputs.ndim != 2 or inputs.shape[1] != state.batch_size:
            raise ArgumentError(f"inputs must be (T, {state.batch_size}), got {inputs.shape}")

        contexts = []
        for t in range(inputs.shape[0]):
            x = tape.dropout(self.embed(tape, inputs[t]), self.config.dropout_rate, rng)
            g, state = self.step(tape, x, state, rng)
            contexts.append(g)
        return contexts, state
