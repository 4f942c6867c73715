"""Error metrics, grouped k-fold splits and cross-validation reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import DatasetRow
from .errors import (
    LengthMismatch,
    NonPositiveLogTarget,
    PresetMismatch,
    TooFewRows,
    ZeroDenominator,
    ZeroVariance,
)
from .models import fit_model

K_FOLDS = 5
OUTLIER_THRESHOLD = 0.2
LOG_CONVENTIONS = ("ln-bits", "ln-bpp")
DESCRIPTORS = ("bpp_ms", "mse_ms", "ip_ratio", "vca_spatial", "vca_temporal")


def mape(y, y_hat) -> float:
    """Mean of |y - y_hat| / y over log-scaled targets ``y``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{len(y)} targets vs {len(y_hat)} predictions")
    if y.size == 0:
        raise LengthMismatch("mape needs at least one value")
    if np.any(y == 0):
        raise ZeroDenominator("a log target is exactly 0")
    if np.any(y < 0):
        raise NonPositiveLogTarget("log targets must be > 0; use the ln-bits convention")
    return float(np.mean(np.abs(y - y_hat) / y))


def pcc(y, y_hat) -> float:
    """Pearson product-moment correlation."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{len(y)} vs {len(y_hat)} values")
    if y.size < 2:
        raise LengthMismatch("pcc needs at least two pairs")
    if np.ptp(y) == 0 or np.ptp(y_hat) == 0:
        raise ZeroVariance("one of the inputs is constant")
    dy = y - y.mean()
    dh = y_hat - y_hat.mean()
    sy = math.sqrt(float(dy @ dy))
    sh = math.sqrt(float(dh @ dh))
    if sy == 0 or sh == 0:
        raise ZeroVariance("one of the inputs is constant")
    return float(np.clip((dy @ dh) / (sy * sh), -1.0, 1.0))


def pcc_or_none(y, y_hat) -> float | None:
    try:
        return pcc(y, y_hat)
    except (ZeroVariance, LengthMismatch):
        return None


def kfold_split(groups: Sequence, k: int = K_FOLDS, seed: int = 0):
    """Shuffle the distinct groups and deal them into k near-equal folds.

    ``groups`` holds one label per row (a sequence id, or a row carrying
    ``sequence_id``). Returns a list of (train, test) row-index arrays; all
    rows of a group land in the same test fold.
    """
    labels = [getattr(g, "sequence_id", g) for g in groups]
    unique = sorted(set(labels))
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(unique) < k:
        raise TooFewRows(f"{len(unique)} groups cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(unique))
    chunks = np.array_split(order, k)
    fold_of = {}
    for f, chunk in enumerate(chunks):
        for g in chunk:
            fold_of[unique[g]] = f
    assignment = np.array([fold_of[label] for label in labels])
    rows = np.arange(len(labels))
    return [(rows[assignment != f], rows[assignment == f]) for f in range(k)]


def log_targets(rows: Sequence[DatasetRow], bpp, convention: str = "ln-bits") -> np.ndarray:
    """Map bits-per-pixel values onto the log scale the metrics work in.

    Zero predictions are floored at the smallest positive float so the log
    stays finite.
    """
    bpp = np.maximum(np.asarray(bpp, dtype=float), np.finfo(float).tiny)
    if convention == "ln-bits":
        pixels = np.array([r.pixel_count for r in rows], dtype=float)
        return np.log(bpp) + np.log(pixels)
    if convention == "ln-bpp":
        return np.log(bpp)
    raise ValueError(f"unknown log convention {convention!r}")


@dataclass
class EvalReport:
    model_name: str
    preset: int | None
    mape: float
    pcc: float | None
    per_fold: list[dict]
    n_rows: int
    outlier_count: int
    log_convention: str = "ln-bits"
    seed: int = 0
    per_crf: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_crf"] = {str(k): v for k, v in sorted(self.per_crf.items())}
        return out

    CSV_FIELDS = ("model", "preset", "log_convention", "seed", "n_rows", "mape", "pcc", "outlier_count")

    def csv_row(self) -> list:
        return [self.model_name, self.preset, self.log_convention, self.seed,
                self.n_rows, self.mape, self.pcc, self.outlier_count]


SCATTER_FIELDS = (
    "sequence_id", "crf", "fold", "y", "y_hat", "target_bpp", "predicted_bpp",
    "relative_error", "outlier",
)


def _metrics(y, y_hat) -> dict:
    return {"mape": mape(y, y_hat), "pcc": pcc_or_none(y, y_hat)}


def _mean_defined(values):
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def cross_validate(
    rows: Sequence[DatasetRow],
    model_name: str,
    seed: int = 0,
    log_convention: str = "ln-bits",
    k: int = K_FOLDS,
    n_jobs: int = 1,
    **forest_params,
):
    """k-fold cross-validation of one model variant on single-preset rows.

    Returns ``(EvalReport, scatter_rows)``. Forest metrics are pooled over the
    concatenated test predictions; the power-law model is scored per CRF and
    the per-CRF metrics are averaged.
    """
    rows = list(rows)
    presets = {r.preset for r in rows}
    if len(presets) > 1:
        raise PresetMismatch(f"cross-validation needs a single preset, got {sorted(presets)}")
    preset = presets.pop() if presets else None

    predicted = np.empty(len(rows))
    fold_id = np.empty(len(rows), dtype=int)
    folds = kfold_split(rows, k, seed)
    for f, (train, test) in enumerate(folds):
        model = fit_model([rows[i] for i in train], model_name, seed=seed, preset=preset,
                          n_jobs=n_jobs, **forest_params)
        predicted[test] = model.predict_many([rows[i] for i in test])
        fold_id[test] = f

    target = np.array([r.target_bpp for r in rows])
    y = log_targets(rows, target, log_convention)
    y_hat = log_targets(rows, predicted, log_convention)
    rel = np.abs(predicted - target) / target
    crfs = np.array([r.crf for r in rows])

    per_crf = {}
    if model_name == "Polynomial":
        for crf in sorted(set(crfs.tolist())):
            mask = crfs == crf
            per_crf[crf] = _metrics(y[mask], y_hat[mask])
        pooled_mape = float(np.mean([m["mape"] for m in per_crf.values()]))
        pooled_pcc = _mean_defined(m["pcc"] for m in per_crf.values())
    else:
        pooled_mape = mape(y, y_hat)
        pooled_pcc = pcc_or_none(y, y_hat)

    per_fold = []
    for f in range(k):
        in_fold = fold_id == f
        if model_name == "Polynomial":
            parts = [_metrics(y[in_fold & (crfs == c)], y_hat[in_fold & (crfs == c)])
                     for c in sorted(set(crfs[in_fold].tolist()))]
            per_fold.append({
                "mape": float(np.mean([p["mape"] for p in parts])),
                "pcc": _mean_defined(p["pcc"] for p in parts),
            })
        else:
            per_fold.append(_metrics(y[in_fold], y_hat[in_fold]))

    report = EvalReport(
        model_name=model_name,
        preset=preset,
        mape=pooled_mape,
        pcc=pooled_pcc,
        per_fold=per_fold,
        n_rows=len(rows),
        outlier_count=int(np.sum(rel > OUTLIER_THRESHOLD)),
        log_convention=log_convention,
        seed=seed,
        per_crf=per_crf,
    )
    scatter = [
        [r.sequence_id, r.crf, int(fold_id[i]), float(y[i]), float(y_hat[i]),
         r.target_bpp, float(predicted[i]), float(rel[i]), int(rel[i] > OUTLIER_THRESHOLD)]
        for i, r in enumerate(rows)
    ]
    return report, scatter


def correlation_report(rows: Sequence[DatasetRow], descriptors=DESCRIPTORS) -> list[list]:
    """Pearson correlation of each descriptor column with the encoded bpp.

    Columns that are absent or constant get an empty correlation instead of
    failing the report.
    """
    out = []
    for name in descriptors:
        pairs = [(getattr(r, name), r.target_bpp) for r in rows if getattr(r, name) is not None]
        value = None
        if len(pairs) >= 2:
            xs, ys = zip(*pairs)
            value = pcc_or_none(xs, ys)
        out.append([name, len(pairs), value])
    return out
