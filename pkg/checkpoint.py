"""
Checkpoint persistence.

File layout: one line of JSON metadata (format version, config, tensor
names and shapes, epoch, validation history, RNG state, lexicon digest),
then every tensor as raw little-endian float64 in the declared order.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from config import TrainConfig
from errors import CheckpointError
from lexicon import Lexicon
from model import LanguageModel

logger = logging.getLogger(__name__)

FORMAT_NAME = "sdlm-checkpoint"
FORMAT_VERSION = 1
_WIRE_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: TrainConfig
    arrays: dict[str, np.ndarray]
    epoch: int = 0
    history: list[float] = field(default_factory=list)
    lr: Optional[float] = None
    rng_state: Optional[dict[str, Any]] = None
    lexicon_digest: str = ""


def save_checkpoint(
    path: str,
    model: LanguageModel,
    epoch: int,
    history: list[float],
    lr: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> None:
    arrays = model.state_arrays()
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "tensors": [{"name": name, "shape": list(a.shape)} for name, a in arrays.items()],
        "epoch": epoch,
        "history": [float(h) for h in history],
        "lr": lr,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "lexicon_digest": model.lexicon.digest(),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, ensure_ascii=True).encode("ascii"))
        f.write(b"\n")
        for a in arrays.values():
            f.write(np.ascontiguousarray(a, dtype=_WIRE_DTYPE).tobytes())
    logger.info(f"Saved checkpoint to {path} (epoch {epoch})")


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()

    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from None
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {header.get('format')!r} v{header.get('version')}")

    body = memoryview(raw)[newline + 1:]
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * _WIRE_DTYPE.itemsize
        if offset + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated tensor data for {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(body[offset:offset + nbytes], dtype=_WIRE_DTYPE).reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes after tensor data")

    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        arrays=arrays,
        epoch=header["epoch"],
        history=list(header["history"]),
        lr=header["lr"],
        rng_state=header["rng_state"],
        lexicon_digest=header["lexicon_digest"],
    )


def restore_model(checkpoint: Checkpoint, lexicon: Lexicon) -> LanguageModel:
    """Rebuild the model for a lexicon and load the checkpointed values."""
    if checkpoint.lexicon_digest and checkpoint.lexicon_digest != lexicon.digest():
        raise CheckpointError("checkpoint was trained on a different lexicon")
    model = LanguageModel(lexicon, checkpoint.config)
    model.load_arrays(checkpoint.arrays)
    return model


def restore_rng(checkpoint: Checkpoint) -> np.random.Generator:
    rng = np.random.default_rng(checkpoint.config.seed)
    if checkpoint.rng_state is not None:
        rng.bit_generator.state = checkpoint.rng_state
    return rng
