"""
Configuration module for the sememe-driven language model.
Centralizes all configuration and provides validation.
"""

import os
import logging
from dataclasses import dataclass, field, asdict, fields
from enum import Enum
from typing import Any, Optional
from dotenv import load_dotenv

from errors import ConfigError
from lexicon import NormalizationMode

logger = logging.getLogger(__name__)

PRECISIONS = ("float64", "float32")


class DecoderKind(str, Enum):
    SDLM = "sdlm"
    BASELINE = "baseline"


@dataclass
class EncoderConfig:
    """Sizes of the embedding table and the LSTM stack."""
    input_dim: int = 64
    context_dim: int = 64
    layers: int = 2
    dropout_rate: float = 0.0
    bptt_len: int = 35

    def validate(self) -> list[str]:
        problems = []
        for name in ("input_dim", "context_dim", "layers", "bptt_len"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1 (got {getattr(self, name)})")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1) (got {self.dropout_rate})")
        return problems


@dataclass
class DecoderConfig:
    """Which decoder sits on top of the encoder and how it is shaped."""
    kind: DecoderKind = DecoderKind.SDLM
    mode: NormalizationMode = NormalizationMode.LEFT
    basis: int = 5

    def validate(self) -> list[str]:
        problems = []
        if self.basis < 1:
            problems.append(f"basis must be >= 1 (got {self.basis})")
        return problems


@dataclass
class TrainConfig:
    """Configuration container for one training run."""
    lr0: float = 1.0
    batch_size: int = 20
    bptt_len: int = 35
    max_epochs: int = 40
    clip_norm: Optional[float] = 5.0
    seed: int = 1
    decoder_kind: DecoderKind = DecoderKind.SDLM
    mode: NormalizationMode = NormalizationMode.LEFT
    basis: int = 5

    # Model shape
    input_dim: int = 64
    context_dim: int = 64
    layers: int = 2
    dropout_rate: float = 0.0

    # Numerics
    precision: str = "float64"
    init_scale: float = 0.1

    # Loop control
    min_lr: float = 1e-4
    log_every: int = 0
    prefetch: bool = False

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            input_dim=self.input_dim,
            context_dim=self.context_dim,
            layers=self.layers,
            dropout_rate=self.dropout_rate,
            bptt_len=self.bptt_len,
        )

    def decoder(self) -> DecoderConfig:
        return DecoderConfig(kind=self.decoder_kind, mode=self.mode, basis=self.basis)

    def validate(self) -> list[str]:
        """Validate configuration and return list of problems."""
        problems = []

        if not self.lr0 > 0:
            problems.append(f"lr0 must be > 0 (got {self.lr0})")
        for name in ("batch_size", "bptt_len", "max_epochs"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1 (got {getattr(self, name)})")
        if self.clip_norm is not None and not self.clip_norm > 0:
            problems.append(f"clip_norm must be positive or None (got {self.clip_norm})")
        if self.precision not in PRECISIONS:
            problems.append(f"precision must be one of {PRECISIONS} (got {self.precision!r})")
        if not self.init_scale > 0:
            problems.append(f"init_scale must be > 0 (got {self.init_scale})")
        if self.decoder_kind == DecoderKind.BASELINE and self.input_dim != self.context_dim:
            problems.append("tied baseline needs input_dim == context_dim")

        problems.extend(self.encoder().validate())
        problems.extend(self.decoder().validate())
        # bptt_len is shared with the encoder config, report it once
        return list(dict.fromkeys(problems))

    def check(self) -> 'TrainConfig':
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["decoder_kind"] = self.decoder_kind.value
        data["mode"] = self.mode.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'TrainConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config keys: {', '.join(unknown)}"])
        values = dict(data)
        if "decoder_kind" in values:
            values["decoder_kind"] = DecoderKind(values["decoder_kind"])
        if "mode" in values:
            values["mode"] = NormalizationMode(values["mode"])
        return cls(**values)

    @classmethod
    def from_env(cls) -> 'TrainConfig':
        """Create configuration from SDLM_* environment variables."""
        load_dotenv(override=True)
        defaults = cls()
        unreadable: list[str] = []

        def read(name: str, convert, default):
            raw = os.getenv(name)
            if raw is None:
                return default
            try:
                return convert(raw)
            except ValueError:
                unreadable.append(f"{name}={raw!r} could not be parsed")
                return default

        config = cls(
            lr0=read("SDLM_LR", float, defaults.lr0),
            batch_size=read("SDLM_BATCH_SIZE", int, defaults.batch_size),
            bptt_len=read("SDLM_BPTT", int, defaults.bptt_len),
            max_epochs=read("SDLM_EPOCHS", int, defaults.max_epochs),
            clip_norm=read("SDLM_CLIP_NORM", lambda v: None if v.lower() == "none" else float(v), defaults.clip_norm),
            seed=read("SDLM_SEED", int, defaults.seed),
            decoder_kind=read("SDLM_DECODER", DecoderKind, defaults.decoder_kind),
            mode=read("SDLM_NORM", NormalizationMode, defaults.mode),
            basis=read("SDLM_BASIS", int, defaults.basis),
            input_dim=read("SDLM_INPUT_DIM", int, defaults.input_dim),
            context_dim=read("SDLM_CONTEXT_DIM", int, defaults.context_dim),
            layers=read("SDLM_LAYERS", int, defaults.layers),
            dropout_rate=read("SDLM_DROPOUT", float, defaults.dropout_rate),
            precision=os.getenv("SDLM_PRECISION", defaults.precision),
        )
        if unreadable:
            raise ConfigError(unreadable)

        # Log warnings
        for problem in config.validate():
            logger.warning(f"⚠️ Config: {problem}")

        return config


@dataclass
class CorpusSpec:
    """Where the token files live and how raw text is normalized."""
    train: str
    valid: str
    test: str
    lexicon: str
    min_count: int = 5
    canonicalize_numbers: bool = True
    segment_unknown: bool = True
    extra_special: list[str] = field(default_factory=list)

    def validate(self) -> list[str]:
        problems = []
        splits = [os.path.abspath(p) for p in (self.train, self.valid, self.test)]
        if len(set(splits)) != len(splits):
            problems.append("train/valid/test must be distinct files")
        if self.min_count < 1:
            problems.append(f"min_count must be >= 1 (got {self.min_count})")
        return problems

    def check(self) -> 'CorpusSpec':
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self


# Singleton config instance
_config: Optional[TrainConfig] = None

def get_config() -> TrainConfig:
    """Get or create the configuration instance."""
    global _config
    if _config is None:
        _config = TrainConfig.from_env()
    return _config
