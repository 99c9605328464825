"""
Training loop: contiguous-split batching, truncated BPTT windows, plain
SGD with optional global-norm clipping and validation-driven lr halving.
"""

import logging
import math
import queue
import threading
import time
from contextlib import closing
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, TypeVar

import numpy as np

from checkpoint import Checkpoint, restore_rng, save_checkpoint
from config import TrainConfig
from errors import ArgumentError, ContractViolation, TrainingError
from model import LanguageModel
from numerics import Tape, Tensor

logger = logging.getLogger(__name__)

T = TypeVar("T")
_DONE = object()


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    lr: float
    tokens: int
    windows: int
    seconds: float
    valid_ppl: Optional[float] = None

    @property
    def train_ppl(self) -> float:
        return math.exp(self.train_loss)


@dataclass
class TrainResult:
    model: LanguageModel
    epochs: list[EpochStats] = field(default_factory=list)
    history: list[float] = field(default_factory=list)
    final_lr: float = 0.0
    stop_reason: str = ""

    @property
    def best_valid_ppl(self) -> Optional[float]:
        return min(self.history) if self.history else None


# --- data plumbing ---

def batchify(ids: np.ndarray, batch_size: int) -> np.ndarray:
    """Cut a token stream into batch_size contiguous columns, (T, B), dropping the tail."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be >= 1 (got {batch_size})")
    rows = ids.shape[0] // batch_size
    if rows < 2:
        raise ArgumentError(f"{ids.shape[0]} tokens are too few for {batch_size} streams")
    return ids[:rows * batch_size].reshape(batch_size, rows).T.copy()


def iter_windows(data: np.ndarray, bptt_len: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(inputs, targets) windows of at most bptt_len steps; targets are inputs shifted by one."""
    if bptt_len < 1:
        raise ArgumentError(f"bptt_len must be >= 1 (got {bptt_len})")
    for start in range(0, data.shape[0] - 1, bptt_len):
        length = min(bptt_len, data.shape[0] - 1 - start)
        yield data[start:start + length], data[start + 1:start + 1 + length]


def prefetch(items: Iterable[T], poll: float = 0.1) -> Iterator[T]:
    """Produce items on a background thread through a one-slot handoff queue.

    Closing the generator early stops the producer and joins it.
    """
    handoff: queue.Queue = queue.Queue(maxsize=1)
    stop = threading.Event()

    def offer(item) -> bool:
        while not stop.is_set():
            try:
                handoff.put(item, timeout=poll)
                return True
            except queue.Full:
                continue
        return False

    def produce():
        try:
            for item in items:
                if not offer(item):
                    return
        except BaseException as e:
            offer(e)
            return
        offer(_DONE)

    worker = threading.Thread(target=produce, name="window-prefetch", daemon=True)
    worker.start()
    try:
        while True:
            item = handoff.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while True:
            try:
                handoff.get_nowait()
            except queue.Empty:
                break
        worker.join()


# --- loss and updates ---

def nll_loss(word_probs: np.ndarray, targets: np.ndarray) -> float:
    """-(1/n) sum of log P(target) over rows of an (n, N) probability matrix."""
    probs = np.asarray(word_probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != targets.shape[0]:
        raise ArgumentError(f"nll_loss: probs {probs.shape} vs {targets.shape[0]} targets")
    picked = probs[np.arange(targets.shape[0]), targets]
    if np.any(picked <= 0):
        raise ContractViolation("zero probability at a target token")
    return float(-np.mean(np.log(picked)))


def perplexity(loss: float) -> float:
    return math.exp(loss)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: Optional[float]) -> float:
    """Scale all gradients in place so their joint L2 norm is at most max_norm.

    Returns the norm before clipping.
    """
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float) -> None:
    """theta <- theta - lr * grad, in place so shared storage stays shared."""
    for name, p in params.items():
        p.data -= np.asarray(lr * grads[name], dtype=p.data.dtype)


def lr_schedule(history: list[float], lr: float) -> float:
    """Halve lr when the latest validation perplexity is no better than the best before it."""
    if len(history) >= 2 and history[-1] >= min(history[:-1]):
        return lr / 2
    return lr


# --- epochs ---

def train_epoch(
    model: LanguageModel,
    data: np.ndarray,
    config: TrainConfig,
    lr: float,
    rng: Optional[np.random.Generator] = None,
    epoch: int = 1,
) -> EpochStats:
    """One pass of truncated-BPTT SGD over a batchified (T, B) stream."""
    started = time.time()
    state = model.initial_state(data.shape[1])
    dropout_rng = rng if config.dropout_rate > 0 else None

    windows: Iterator = iter_windows(data, config.bptt_len)
    if config.prefetch:
        windows = prefetch(windows)

    total, tokens, count, last_norm = 0.0, 0, 0, None
    with closing(windows):
        for count, (inputs, targets) in enumerate(windows, 1):
            tape = Tape()
            try:
                loss, state = model.loss(tape, inputs, targets, state, dropout_rng)
            except ContractViolation as e:
                raise TrainingError(
                    "non-finite value in forward pass",
                    {"epoch": epoch, "window": count, "lr": lr, "last_grad_norm": last_norm, "cause": str(e)},
                ) from e
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError("non-finite loss", {"epoch": epoch, "window": count, "lr": lr, "loss": value})

            grads = tape.backward(loss, model.params)
            last_norm = clip_grad_norm(grads, config.clip_norm)
            if not math.isfinite(last_norm):
                raise TrainingError("non-finite gradient", {"epoch": epoch, "window": count, "lr": lr, "loss": value})
            sgd_step(model.params, grads, lr)
            state = state.detach()

            total += value * targets.size
            tokens += targets.size
            if config.log_every and count % config.log_every == 0:
                logger.debug(f"epoch {epoch} window {count}: loss={value:.4f} grad_norm={last_norm:.3f}")

    if tokens == 0:
        raise ArgumentError("training stream has no windows")
    return EpochStats(
        epoch=epoch,
        train_loss=total / tokens,
        lr=lr,
        tokens=tokens,
        windows=count,
        seconds=time.time() - started,
    )


def stream_perplexity(model: LanguageModel, ids: np.ndarray, batch_size: int, bptt_len: int) -> float:
    """Perplexity over a token stream with state carried across windows, dropout off."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    data = batchify(ids, max(1, min(batch_size, ids.shape[0] // 2)))
    state = model.initial_state(data.shape[1])
    total, tokens = 0.0, 0
    for inputs, targets in iter_windows(data, bptt_len):
        loss, state = model.loss(Tape(record=False), inputs, targets, state)
        total += loss.item() * targets.size
        tokens += targets.size
    return math.exp(total / tokens)


def train(
    model: LanguageModel,
    train_ids: np.ndarray,
    valid_ids: Optional[np.ndarray] = None,
    checkpoint_path: Optional[str] = None,
    resume: Optional[Checkpoint] = None,
) -> TrainResult:
    """Run epochs until max_epochs or lr drops below min_lr.

    With valid_ids, validation perplexity is measured after every epoch and
    drives the halving schedule; without it lr stays at lr0.
    """
    config = model.config
    data = batchify(train_ids, config.batch_size)
    result = TrainResult(model=model)

    if resume is not None:
        rng = restore_rng(resume)
        start = resume.epoch
        result.history = list(resume.history)
        lr = resume.lr if resume.lr is not None else config.lr0
        logger.info(f"Resuming at epoch {start + 1} with lr={lr:g}")
    else:
        rng = np.random.default_rng([config.seed, 1])
        start, lr = 0, config.lr0

    logger.info(
        f"Training {config.decoder_kind.value} model: {model.parameter_count()} parameters, "
        f"{data.size} tokens in {data.shape[1]} streams"
    )

    result.stop_reason = "max_epochs"
    for epoch in range(start + 1, config.max_epochs + 1):
        stats = train_epoch(model, data, config, lr, rng, epoch)

        if valid_ids is not None:
            stats.valid_ppl = stream_perplexity(model, valid_ids, config.batch_size, config.bptt_len)
            result.history.append(stats.valid_ppl)
        result.epochs.append(stats)

        valid = f"{stats.valid_ppl:.2f}" if stats.valid_ppl is not None else "n/a"
        logger.info(
            f"Epoch {epoch}: train_loss={stats.train_loss:.4f} train_ppl={stats.train_ppl:.2f} "
            f"valid_ppl={valid} lr={lr:g} ({stats.seconds:.1f}s)"
        )

        if valid_ids is not None:
            lr = lr_schedule(result.history, lr)
        if checkpoint_path:
            save_checkpoint(checkpoint_path, model, epoch, result.history, lr, rng)
        if lr < config.min_lr:
            result.stop_reason = "min_lr"
            logger.info(f"Stopping: lr {lr:g} fell below {config.min_lr:g}")
            break

    result.final_lr = lr
    return result
