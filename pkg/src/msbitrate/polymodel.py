"""Two-term power-law bitrate model, fitted separately for every CRF:

    bpp = t0 * bpp_ms ** t1 + t2 * mse_ms ** t3
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .dataset import DatasetRow, as_features
from .errors import InsufficientData, NonConvergenceWarning, UnknownCrf

MIN_ROWS = 4
MAX_ITER = 500
RTOL = 1e-10
START_EXPONENTS = (0.5, 1.0)
_NONNEG = (0, 2)


@dataclass
class FitResult:
    theta: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list, repr=False)


def power_law(theta, bpp_ms, mse_ms):
    """Evaluate the model with the convention 0 ** t = 0 for t > 0."""
    t0, t1, t2, t3 = theta
    bpp_ms = np.asarray(bpp_ms, dtype=float)
    mse_ms = np.asarray(mse_ms, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(bpp_ms > 0, np.power(np.where(bpp_ms > 0, bpp_ms, 1.0), t1), 0.0)
        b = np.where(mse_ms > 0, np.power(np.where(mse_ms > 0, mse_ms, 1.0), t3), 0.0)
    return t0 * a + t2 * b


def _jacobian(theta, x1, x2, lx1, lx2):
    t0, t1, t2, t3 = theta
    p1 = np.power(x1, t1)
    p2 = np.power(x2, t3)
    return np.column_stack((p1, t0 * p1 * lx1, p2, t2 * p2 * lx2))


def _cost(theta, x1, x2, y):
    with np.errstate(over="ignore", invalid="ignore"):
        r = y - theta[0] * np.power(x1, theta[1]) - theta[2] * np.power(x2, theta[3])
        c = float(r @ r)
    return c if np.isfinite(c) else np.inf


def levenberg_marquardt(x1, x2, y, theta0, max_iter=MAX_ITER, rtol=RTOL) -> FitResult:
    """Damped Gauss-Newton on the power-law residual with t0, t2 projected to >= 0.

    A step is accepted only if it lowers the squared residual, so the cost
    history is non-increasing.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    y = np.asarray(y, float)
    lx1, lx2 = np.log(x1), np.log(x2)
    theta = np.asarray(theta0, float).copy()
    theta[list(_NONNEG)] = np.maximum(theta[list(_NONNEG)], 0.0)
    cost = _cost(theta, x1, x2, y)
    history = [cost]
    floor = 1e-28 * max(float(y @ y), 1e-300)
    lam = 1e-3
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if cost <= floor:
            converged = True
            break
        with np.errstate(over="ignore", invalid="ignore"):
            jac = _jacobian(theta, x1, x2, lx1, lx2)
            r = y - power_law(theta, x1, x2)
            jtj = jac.T @ jac
            grad = jac.T @ r
        if not (np.all(np.isfinite(jtj)) and np.all(np.isfinite(grad))):
            break
        diag = np.maximum(np.diag(jtj), 1e-12 * max(np.max(np.diag(jtj)), 1e-300))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = theta + step
            candidate[list(_NONNEG)] = np.maximum(candidate[list(_NONNEG)], 0.0)
            new_cost = _cost(candidate, x1, x2, y)
            if new_cost < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at any damping: a stationary point
            converged = True
            break
        change = (cost - new_cost) / cost
        theta, cost = candidate, new_cost
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if change < rtol:
            converged = True
            break
    return FitResult(theta, float(np.sqrt(cost)), iteration, converged, history)


def initial_amplitudes(x1, x2, y, e1, e3) -> tuple[float, float]:
    """Non-negative least-squares amplitudes for fixed exponents."""
    design = np.column_stack((np.power(x1, e1), np.power(x2, e3)))
    (a0, a2), _ = nnls(design, y)
    return float(a0), float(a2)


def _usable(rows, crf):
    picked = []
    for row in rows:
        feats = as_features(row)
        if feats.crf != crf:
            continue
        if not feats.bpp_ms or not feats.mse_ms:
            continue
        picked.append((feats.bpp_ms, feats.mse_ms, row.target_bpp))
    return picked


def fit_poly(rows: Sequence[DatasetRow], crf: int) -> FitResult:
    """Least-squares fit of the power law on the rows at one CRF.

    Rows with a zero ``bpp_ms`` or ``mse_ms`` are skipped. The best of a
    small grid of starting exponents is kept. Hitting the iteration cap
    warns with :class:`NonConvergenceWarning` and returns the best parameters
    found.
    """
    data = _usable(rows, crf)
    if len(data) < MIN_ROWS:
        raise InsufficientData(f"CRF {crf}: {len(data)} usable rows, need {MIN_ROWS}")
    x1, x2, y = (np.array(col, dtype=float) for col in zip(*data))
    starts = [(1.0, 1.0, 1.0, 1.0)]
    for e1, e3 in itertools.product(START_EXPONENTS[::-1], repeat=2):
        a0, a2 = initial_amplitudes(x1, x2, y, e1, e3)
        starts.append((a0, e1, a2, e3))
    best = None
    for start in starts:
        result = levenberg_marquardt(x1, x2, y, start)
        if best is None or result.residual_norm < best.residual_norm:
            best = result
    if not best.converged:
        warnings.warn(
            f"power-law fit for CRF {crf} stopped after {best.iterations} iterations",
            NonConvergenceWarning,
            stacklevel=2,
        )
    return best


@dataclass
class PolyModel:
    thetas: dict[int, np.ndarray]
    preset: int | None = None
    diagnostics: dict[int, dict] = field(default_factory=dict)

    kind = "polynomial"

    def predict(self, features) -> float:
        return predict_poly(self, features)

    def predict_many(self, items) -> np.ndarray:
        return np.array([predict_poly(self, item) for item in items], dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "preset": self.preset,
            "thetas": {str(crf): [float(v) for v in theta] for crf, theta in sorted(self.thetas.items())},
            "diagnostics": {str(crf): d for crf, d in sorted(self.diagnostics.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolyModel":
        return cls(
            thetas={int(k): np.array(v, dtype=float) for k, v in data["thetas"].items()},
            preset=data.get("preset"),
            diagnostics={int(k): v for k, v in data.get("diagnostics", {}).items()},
        )


def fit_poly_model(rows: Sequence[DatasetRow], preset: int | None = None) -> PolyModel:
    """One power law per CRF present in ``rows``."""
    crfs = sorted({as_features(r).crf for r in rows})
    if not crfs:
        raise InsufficientData("no rows to fit")
    thetas = {}
    diagnostics = {}
    for crf in crfs:
        result = fit_poly(rows, crf)
        thetas[crf] = result.theta
        diagnostics[crf] = {
            "residual_norm": result.residual_norm,
            "iterations": result.iterations,
            "converged": result.converged,
        }
    return PolyModel(thetas, preset, diagnostics)


def predict_poly(model: PolyModel, features) -> float:
    feats = as_features(features)
    try:
        theta = model.thetas[feats.crf]
    except KeyError:
        raise UnknownCrf(f"model has no parameters for CRF {feats.crf}") from None
    value = float(power_law(theta, feats.bpp_ms or 0.0, feats.mse_ms or 0.0))
    return max(0.0, value)
