"""Training loop, metrics, and checkpointing for the energy surrogate."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch.utils.data import DataLoader, Subset

from .data import TARGET_KEYS, VoxelSampleSet, split_indices
from .model import EnergySurrogate, ModelSpec, build


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32
    split: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError(f"invalid training spec {self}")


def r_squared(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-target coefficient of determination."""
    ss_res = ((true - pred) ** 2).sum(axis=0)
    ss_tot = ((true - true.mean(axis=0)) ** 2).sum(axis=0)
    return 1.0 - ss_res / ss_tot


def nrmse_iqr(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-target RMSE normalized by the interquartile range of the truth."""
    rmse = np.sqrt(((true - pred) ** 2).mean(axis=0))
    iqr = np.percentile(true, 75, axis=0) - np.percentile(true, 25, axis=0)
    return rmse / iqr


def metrics_dict(true: np.ndarray, pred: np.ndarray) -> dict:
    r2 = r_squared(true, pred)
    nr = nrmse_iqr(true, pred)
    return {
        "R2": {k: float(v) for k, v in zip(TARGET_KEYS, r2)},
        "NRMSE_IQR": {k: float(v) for k, v in zip(TARGET_KEYS, nr)},
    }


def predict(model: EnergySurrogate, dataset, batch_size: int = 32) -> np.ndarray:
    model.eval()
    out = []
    with torch.no_grad():
        for x, _ in DataLoader(dataset, batch_size=batch_size):
            out.append(model(x).numpy())
    return np.concatenate(out)


def targets_of(dataset) -> np.ndarray:
    return np.stack([dataset[i][1].numpy() for i in range(len(dataset))])


def train(
    model: EnergySurrogate,
    dataset: VoxelSampleSet,
    spec: TrainSpec = TrainSpec(),
    log=None,
) -> dict:
    """Fit on the train split, report metrics on the held-out test split.

    Targets are standardized per-target from the training split; the
    model's output buffers invert the standardization, so predictions and
    metrics are in physical units.
    """
    torch.manual_seed(spec.seed)
    idx = split_indices(len(dataset), spec.split, seed=spec.seed)
    train_set = Subset(dataset, idx.train.tolist())
    val_set = Subset(dataset, idx.val.tolist())
    test_set = Subset(dataset, idx.test.tolist())

    t_train = targets_of(train_set)
    mean = t_train.mean(axis=0)
    std = t_train.std(axis=0)
    std[std == 0] = 1.0
    model.set_target_scaling(mean, std)

    opt = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = torch.nn.MSELoss()
    mean_t = torch.as_tensor(mean, dtype=torch.float32)
    std_t = torch.as_tensor(std, dtype=torch.float32)
    curves = {"train_loss": [], "val_loss": []}
    for epoch in range(spec.epochs):
        model.train()
        losses = []
        loader = DataLoader(
            train_set,
            batch_size=spec.batch_size,
            shuffle=True,
            generator=torch.Generator().manual_seed(spec.seed + epoch),
        )
        for x, y in loader:
            opt.zero_grad()
            pred_std = (model(x) - mean_t) / std_t
            loss = loss_fn(pred_std, (y - mean_t) / std_t)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: {loss.item()}"
                )
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        curves["train_loss"].append(float(np.mean(losses)))
        if len(val_set):
            val_pred = predict(model, val_set, spec.batch_size)
            val_true = targets_of(val_set)
            curves["val_loss"].append(float((((val_pred - val_true) / std) ** 2).mean()))
        if log:
            log(epoch, curves)

    eval_set = test_set if len(test_set) else train_set
    result = metrics_dict(targets_of(eval_set), predict(model, eval_set, spec.batch_size))
    result["curves"] = curves
    result["evaluated_on"] = "test" if len(test_set) else "train"
    result["train_spec"] = asdict(spec)
    return result


def save_checkpoint(model: EnergySurrogate, path) -> None:
    torch.save(
        {"state_dict": model.state_dict(), "model_spec": asdict(model.spec)}, path
    )


def load_checkpoint(path) -> EnergySurrogate:
    blob = torch.load(path, weights_only=False)
    spec = ModelSpec(**{k: tuple(v) if isinstance(v, list) else v
                        for k, v in blob["model_spec"].items()})
    model = build(spec)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model


def save_metrics(metrics: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
