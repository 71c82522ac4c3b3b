"""Positioning error metrics: RMSE and the empirical error-distance CDF."""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import ContractError


@dataclass
class EvalReport:
    rmse_m: float
    errors_m: np.ndarray
    cdf: list[tuple[float, float]]
    n_samples: int

    def exceedance(self, threshold: float) -> float:
        """P(error > threshold), read off the CDF."""
        errs = [e for e, _ in self.cdf]
        k = bisect.bisect_right(errs, threshold)
        return 1.0 - (self.cdf[k - 1][1] if k else 0.0)


def _as_xy(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ContractError(f"{what} must be an (N, 2) array of (x, y), got shape {a.shape}")
    return a


def error_distances(preds, targets) -> np.ndarray:
    p, t = _as_xy(preds, "preds"), _as_xy(targets, "targets")
    if len(p) != len(t):
        raise ContractError(f"{len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise ContractError("need at least one sample")
    return np.hypot(p[:, 0] - t[:, 0], p[:, 1] - t[:, 1])


def rmse(preds, targets) -> float:
    """Root mean squared 2-D positioning error, meters."""
    d = error_distances(preds, targets)
    return float(np.sqrt(np.mean(d * d)))


def error_cdf(errors_m: Sequence[float]) -> list[tuple[float, float]]:
    """Sorted errors paired with i/N at the i-th one."""
    e = np.sort(np.asarray(errors_m, dtype=np.float64))
    if e.size == 0:
        raise ContractError("need at least one error value")
    n = e.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(e)]


def evaluate_predictions(preds, targets) -> EvalReport:
    d = error_distances(preds, targets)
    return EvalReport(float(np.sqrt(np.mean(d * d))), d, error_cdf(d), int(d.size))


def compare_reports(a: EvalReport, b: EvalReport, thresholds: Sequence[float] = ()) -> dict:
    """RMSE ratio a/b and exceedance probabilities of both at each threshold."""
    if b.rmse_m == 0:
        ratio = 1.0 if a.rmse_m == 0 else float("inf")
    else:
        ratio = a.rmse_m / b.rmse_m
    return {
        "rmse_a_m": a.rmse_m,
        "rmse_b_m": b.rmse_m,
        "rmse_ratio": ratio,
        "exceedance": [
            {"threshold_m": float(t), "a": a.exceedance(t), "b": b.exceedance(t)}
            for t in thresholds
        ],
    }


def summary(report: EvalReport, thresholds: Sequence[float] = ()) -> dict:
    return {
        "rmse_m": report.rmse_m,
        "n_samples": report.n_samples,
        "exceedance": [
            {"threshold_m": float(t), "p_error_gt": report.exceedance(t)} for t in thresholds
        ],
    }


def write_report(report: EvalReport, out_dir: str | Path, thresholds: Sequence[float] = (),
                 extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``cdf.csv`` (error_m, cdf_p) and ``summary.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cdf_path, summary_path = out / "cdf.csv", out / "summary.json"
    with open(cdf_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("error_m,cdf_p\n")
        for e, p in report.cdf:
            fh.write(f"{e!r},{p!r}\n")
    body = summary(report, thresholds)
    if extra:
        body.update(extra)
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return cdf_path, summary_path
