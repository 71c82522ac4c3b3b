"""End-to-end steps shared by the CLI and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .adp import compute_adp_batch
from .baselines import MlpRegressor, centroid_predict
from .channel import ScenarioConfig, generate_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .datafile import DataError, Dataset, write_dataset
from .metrics import EvalReport, evaluate_predictions
from .training import LabelScaler, TrainConfig, TrainResult, predict, split_indices, train
from .vit import VitConfig, VitRegressor

SPLITS = ("train", "val", "test")


def generate_file(config: ScenarioConfig, n_samples: int, seed: int, out: str | Path) -> str:
    samples = generate_dataset(config, n_samples, seed)
    meta = {"scenario": config.to_dict(), "seed": seed, "n_samples": n_samples}
    return write_dataset(out, samples, meta)


def dataset_adps(ds: Dataset) -> np.ndarray:
    if not np.all(np.isfinite(ds.h)):
        bad = int(np.argmax(~np.isfinite(ds.h).reshape(len(ds), -1).all(axis=1)))
        raise DataError(f"record {bad}: non-finite CSI entries")
    return compute_adp_batch(ds.h, normalize=True)


@dataclass
class Partition:
    adps: dict[str, np.ndarray]
    positions: dict[str, np.ndarray]


def partition(ds: Dataset, split, seed: int) -> Partition:
    adps = dataset_adps(ds)
    idx = dict(zip(SPLITS, split_indices(len(ds), split, seed)))
    return Partition({k: adps[v] for k, v in idx.items()},
                     {k: ds.positions[v] for k, v in idx.items()})


def train_vit(ds: Dataset, cfg: TrainConfig, model_overrides: dict | None = None
              ) -> tuple[VitRegressor, TrainResult, Partition]:
    part = partition(ds, cfg.split, cfg.seed)
    vcfg = VitConfig.from_dict({**(model_overrides or {}), "input_hw": ds.h.shape[1:]})
    model = VitRegressor.create(vcfg, seed=cfg.seed)
    result = train(model, part.adps["train"], part.positions["train"],
                   part.adps["val"], part.positions["val"], cfg)
    return model, result, part


def save_vit(path: str | Path, model: VitRegressor, result: TrainResult, cfg: TrainConfig) -> None:
    best = result.history[result.best_epoch - 1] if result.best_epoch else None
    extra = {
        "label_scaler": result.scaler.to_dict(),
        "split": list(cfg.split),
        "split_seed": cfg.seed,
        "best_epoch": result.best_epoch,
        "best_val_rmse_m": best.val_rmse_m if best else None,
    }
    save_checkpoint(path, "vit", model.config.to_dict(), result.params, extra)


def load_vit(path: str | Path) -> tuple[VitRegressor, dict]:
    kind, config, params, extra = load_checkpoint(path)
    if kind != "vit":
        raise DataError(f"{path}: checkpoint kind {kind!r} is not a ViT")
    return VitRegressor(VitConfig.from_dict(config), params), extra


def evaluate_predictor(ds: Dataset, predictor: Callable[[np.ndarray], np.ndarray],
                       split, seed: int, which: str = "test") -> EvalReport:
    """Score ``predictor`` (ADP stack -> positions in meters) on one split."""
    part = partition(ds, split, seed)
    return evaluate_predictions(predictor(part.adps[which]), part.positions[which])


def evaluate_checkpoint(ds: Dataset, path: str | Path, which: str = "test") -> EvalReport:
    model, extra = load_vit(path)
    if tuple(ds.h.shape[1:]) != model.config.input_hw:
        raise DataError(
            f"dataset ADP shape {tuple(ds.h.shape[1:])} does not match checkpoint "
            f"input_hw {model.config.input_hw}")
    scaler = LabelScaler.from_dict(extra["label_scaler"])

    def run(adps: np.ndarray) -> np.ndarray:
        return scaler.inverse(predict(model, model.prepare(adps)))

    return evaluate_predictor(ds, run, extra["split"], extra["split_seed"], which)


def centroid_report(ds: Dataset, cfg: TrainConfig) -> EvalReport:
    idx = dict(zip(SPLITS, split_indices(len(ds), cfg.split, cfg.seed)))
    train_pos, test_pos = ds.positions[idx["train"]], ds.positions[idx["test"]]
    return evaluate_predictions(centroid_predict(train_pos, len(test_pos)), test_pos)


def mlp_report(ds: Dataset, cfg: TrainConfig) -> tuple[EvalReport, TrainResult]:
    part = partition(ds, cfg.split, cfg.seed)
    model = MlpRegressor.create(int(np.prod(ds.h.shape[1:])), seed=cfg.seed)
    result = train(model, part.adps["train"], part.positions["train"],
                   part.adps["val"], part.positions["val"], cfg)
    pred = result.scaler.inverse(predict(model, model.prepare(part.adps["test"])))
    return evaluate_predictions(pred, part.positions["test"]), result
