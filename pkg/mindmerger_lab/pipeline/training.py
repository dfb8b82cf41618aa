from collections.abc import Callable, Sequence
import logging
from pathlib import Path
import threading

import numpy as np
from pydantic import BaseModel

from mindmerger_lab.config.experiment import StageConfig
from mindmerger_lab.core import FreezingLeakError, NonFiniteError, TrainingDivergedError
from mindmerger_lab.pipeline.data import iterate_batches
from mindmerger_lab.tensorcore.optim import AdamConfig, AdamState, adam_step
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tape import Tape, backward
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor
from mindmerger_lab.utils import canonical_json


class TrainingLogRow(BaseModel):
    stage: str
    epoch: int
    step: int
    loss: float

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"


class TrainingLog:
    """Line-delimited JSON training log; rows are also kept in memory."""

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self.rows: list[TrainingLogRow] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, row: TrainingLogRow) -> None:
        with self._lock:
            self.rows.append(row)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as file:
                    file.write(canonical_json(row.model_dump(mode="json")) + "\n")

    def epoch_means(self) -> list[float]:
        epochs: dict[int, list[float]] = {}
        for row in self.rows:
            epochs.setdefault(row.epoch, []).append(row.loss)
        return [float(np.mean(losses)) for _, losses in sorted(epochs.items())]


class FreezeGuard:
    """Checks that frozen collections stay frozen and bitwise unchanged around a stage."""

    def __init__(self, stage: str, frozen: Sequence[ParameterCollection]):
        self.stage = stage
        self.frozen = list(frozen)
        self._snapshots: list[str] = []

    def __enter__(self) -> "FreezeGuard":
        for params in self.frozen:
            census = params.census()
            if census:
                raise FreezingLeakError(
                    f"Stage '{self.stage}' expects frozen backbones, found {census} trainable scalars"
                )
        self._snapshots = [params.snapshot() for params in self.frozen]
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            return
        for params, before in zip(self.frozen, self._snapshots, strict=True):
            if params.snapshot() != before:
                raise FreezingLeakError(f"Stage '{self.stage}' modified a frozen parameter set")


def _logger() -> logging.Logger:
    return logging.getLogger(__name__)


def train_loop(
    stage: str,
    params: ParameterCollection,
    items: Sequence,
    loss_fn: Callable[[list], Tensor],
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> TrainingLog:
    """Adam over ``params`` for ``cfg.epochs`` shuffled epochs, or until ``cfg.max_steps``.

    Any gradient outside ``params`` is a freezing leak. A non-finite value anywhere in the
    forward or backward pass aborts the stage with the step that produced it.
    """
    log = log if log is not None else TrainingLog()
    hyper = AdamConfig(lr=cfg.lr)
    state = AdamState()
    step = 0
    for epoch in range(cfg.epochs):
        losses = []
        for batch in iterate_batches(items, cfg.batch_size, rng.fork(f"epoch{epoch}")):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            try:
                with Tape():
                    loss = loss_fn(batch)
                    grads = backward(loss)
            except NonFiniteError as e:
                raise TrainingDivergedError(
                    f"Stage '{stage}' diverged at epoch {epoch}, step {step}: {e}"
                ) from e
            leaked = sorted(set(grads) - set(params))
            if leaked:
                raise FreezingLeakError(f"Stage '{stage}' produced gradients for {leaked}")
            for name, grad in grads.items():
                if not np.all(np.isfinite(grad)):
                    raise TrainingDivergedError(
                        f"Stage '{stage}' produced a non-finite gradient for '{name}' at step {step}"
                    )
            adam_step(params, grads, state, hyper)
            losses.append(loss.item())
            log.append(TrainingLogRow(stage=stage, epoch=epoch, step=step, loss=loss.item()))
            step += 1
        if losses:
            _logger().info(f"[{stage}] epoch {epoch}: mean loss {np.mean(losses):.4f}")
        if cfg.max_steps is not None and step >= cfg.max_steps:
            break
    return log
