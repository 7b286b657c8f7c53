"""Training scheme: masked MAE, Adam, step-decay learning rate, early stopping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import months as cal
from . import tensor as T
from .data.gridio import GridSeries
from .data.pipeline import AssembledSample, VariableSpec, assemble_sample
from .errors import DataError, NumericError
from .tensor import Tensor, adam_update


@dataclass
class TrainConfig:
    initial_lr: float = 1e-3
    decay_factor: float = 0.5
    decay_every: int = 10
    patience: int = 10
    batch_size: int = 1
    max_epochs: int = 200
    seed: int = 0
    improvement_eps: float = 1e-6

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise NumericError("initial_lr must be positive")
        if self.patience < 1:
            raise DataError("patience must be >= 1")


def lr_schedule(epoch: int, initial: float = 1e-3, factor: float = 0.5, every: int = 10) -> float:
    """Step decay: initial * factor^(epoch // every)."""
    if epoch < 0:
        raise DataError(f"epoch must be >= 0, got {epoch}")
    return initial * factor ** (epoch // every)


class EarlyStopper:
    """Stop once the validation loss has not improved for more than `patience` epochs."""

    def __init__(self, patience: int, eps: float = 1e-6):
        self.patience = patience
        self.eps = eps
        self.best = float("inf")
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if loss < self.best - self.eps:
            self.best = loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale > self.patience


@dataclass
class ForecastSample:
    inputs: AssembledSample
    targets: np.ndarray  # [k, H, W]


@dataclass
class TrainValSplit:
    train: list[ForecastSample]
    valid: list[ForecastSample]


def build_forecast_samples(
    series_map: dict[str, GridSeries],
    specs: list[VariableSpec],
    years: range,
    lead_count: int,
) -> list[ForecastSample]:
    """Init months whose targets stay inside `years`; inputs may reach earlier."""
    sic = series_map["siconc"]
    out: list[ForecastSample] = []
    for m in sic.months:
        if cal.year_of(m) not in years or cal.year_of(m + lead_count - 1) not in years:
            continue
        targets = [m + lead - 1 for lead in range(1, lead_count + 1)]
        if not all(sic.has_month(t) for t in targets):
            continue
        try:
            sample = assemble_sample(m, specs, series_map)
        except DataError:
            continue
        stack = np.stack([sic.field(t) for t in targets]).astype(np.float32)
        out.append(ForecastSample(inputs=sample, targets=stack))
    return out


def masked_mae(pred: np.ndarray, targets: np.ndarray, land: np.ndarray) -> float:
    ocean = ~land
    return float(np.abs(pred[:, ocean] - targets[:, ocean]).mean())


def _loss_tensor(model, sample: ForecastSample) -> Tensor:
    pred = model.forward_tensor(sample.inputs.channels)
    k = sample.targets.shape[0]
    weight = (~sample.inputs.land_mask).astype(pred.data.dtype)
    weight = np.broadcast_to(weight, sample.targets.shape) / (weight.sum() * k)
    diff = T.absolute(T.sub(pred, Tensor(sample.targets.astype(pred.data.dtype))))
    return T.tensor_sum(T.mul(diff, Tensor(weight.copy())))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    valid_loss: float


def train_loop(model, data: TrainValSplit, cfg: TrainConfig) -> tuple[object, list[EpochRecord]]:
    """Seeded shuffled epochs of Adam steps; returns the best-validation model.

    The returned model carries the parameters of the epoch with the lowest
    validation loss, never the last epoch (unless they coincide).
    """
    if not data.train or not data.valid:
        raise DataError("train_loop: empty training or validation split")
    rng = np.random.default_rng(cfg.seed)
    stopper = EarlyStopper(cfg.patience, cfg.improvement_eps)
    history: list[EpochRecord] = []
    best_snapshot = None

    for epoch in range(1, cfg.max_epochs + 1):
        lr = lr_schedule(epoch - 1, cfg.initial_lr, cfg.decay_factor, cfg.decay_every)
        order = rng.permutation(len(data.train))
        losses = []
        for idx in order:
            sample = data.train[int(idx)]
            loss = _loss_tensor(model, sample)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, "
                    f"sample {cal.to_iso(sample.inputs.init_month)}"
                )
            model.store.backward(loss)
            adam_update(model.store, lr)
            losses.append(value)
        valid_losses = []
        for sample in data.valid:
            pred = model.forward(sample.inputs.channels)
            valid_losses.append(masked_mae(pred, sample.targets, sample.inputs.land_mask))
        record = EpochRecord(epoch, lr, float(np.mean(losses)), float(np.mean(valid_losses)))
        history.append(record)
        if stopper.best_epoch is None or record.valid_loss < stopper.best - stopper.eps:
            best_snapshot = model.store.snapshot()
        if stopper.update(epoch, record.valid_loss):
            break
    if best_snapshot is not None:
        model.store.restore(best_snapshot)
    return model, history


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "valid_loss"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.lr), repr(rec.train_loss), repr(rec.valid_loss)])
