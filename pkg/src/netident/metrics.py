"""Accuracy metrics for recovered coefficients and predicted trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .model import ModelSpec
from .trajectory import Trajectory

MAPE_EXCLUDE_BELOW = 1e-12


@dataclass(frozen=True)
class CoefficientComparison:
    """Union of the terms active in either model, matched by name and output dim."""

    terms: list[tuple[str, str, int]]  # (part, name, dim)
    inferred: np.ndarray
    truth: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.terms)


def compare_coefficients(inferred: ModelSpec, truth: ModelSpec) -> CoefficientComparison:
    """Align two models on the union of their active terms; a term present in
    only one model carries value 0 on the other side."""
    inf_map = {(p, n, d): v for p, n, d, v in inferred.active_terms()}
    true_map = {(p, n, d): v for p, n, d, v in truth.active_terms()}
    keys = sorted(set(inf_map) | set(true_map))
    if not keys:
        raise MetricError("both models are empty; coefficient error undefined")
    return CoefficientComparison(
        terms=keys,
        inferred=np.array([inf_map.get(k, 0.0) for k in keys]),
        truth=np.array([true_map.get(k, 0.0) for k in keys]),
    )


def smape(inferred: ModelSpec, truth: ModelSpec) -> float:
    """Symmetric mean absolute percentage error over the term union, in [0, 1].

    Each term contributes |I - R| / (|I| + |R|); a term present in exactly
    one model contributes 1, so the metric captures structural as well as
    parametric error.
    """
    cmp = compare_coefficients(inferred, truth)
    num = np.abs(cmp.inferred - cmp.truth)
    den = np.abs(cmp.inferred) + np.abs(cmp.truth)
    return float(np.mean(num / den))


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Trajectory) else np.asarray(x, dtype=float)


def mape(truth, pred) -> float:
    """Mean absolute percentage error (percent); entries with |truth| below
    1e-12 are excluded (see :func:`mape_with_exclusions` for the count)."""
    value, _ = mape_with_exclusions(truth, pred)
    return value


def mape_with_exclusions(truth, pred) -> tuple[float, int]:
    xt, xp = _values(truth), _values(pred)
    if xt.shape != xp.shape:
        raise MetricError("shape mismatch")
    keep = np.abs(xt) >= MAPE_EXCLUDE_BELOW
    excluded = int(keep.size - keep.sum())
    if not keep.any():
        raise MetricError("all entries excluded; MAPE undefined")
    value = float(np.mean(np.abs((xt[keep] - xp[keep]) / xt[keep]))) * 100.0
    return value, excluded


def mse(truth, pred) -> float:
    xt, xp = _values(truth), _values(pred)
    if xt.shape != xp.shape:
        raise MetricError("shape mismatch")
    return float(np.mean((xt - xp) ** 2))


def rmse(truth, pred) -> float:
    return float(np.sqrt(mse(truth, pred)))


def r2(truth, pred) -> float:
    """Coefficient of determination pooled over nodes, times, and dimensions."""
    xt, xp = _values(truth), _values(pred)
    if xt.shape != xp.shape:
        raise MetricError("shape mismatch")
    ss_res = float(np.sum((xt - xp) ** 2))
    ss_tot = float(np.sum((xt - xt.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("constant truth; R^2 undefined")
    return 1.0 - ss_res / ss_tot


def per_node_mape(truth, pred) -> np.ndarray:
    """MAPE per node (percent), NaN where every entry of a node is excluded."""
    xt, xp = _values(truth), _values(pred)
    if xt.shape != xp.shape:
        raise MetricError("shape mismatch")
    keep = np.abs(xt) >= MAPE_EXCLUDE_BELOW
    rel = np.zeros_like(xt)
    np.divide(np.abs(xt - xp), np.abs(xt), out=rel, where=keep)
    counts = keep.sum(axis=(0, 2))
    sums = (rel * keep).sum(axis=(0, 2))
    out = np.full(xt.shape[1], np.nan)
    ok = counts > 0
    out[ok] = 100.0 * sums[ok] / counts[ok]
    return out


def trajectory_report(truth, pred) -> dict:
    """All trajectory metrics in one pass, for machine-readable reports."""
    value, excluded = mape_with_exclusions(truth, pred)
    node_mape = per_node_mape(truth, pred)
    finite = node_mape[np.isfinite(node_mape)]
    quantiles = (
        {q: float(np.quantile(finite, float(q))) for q in ("0.1", "0.5", "0.9")}
        if len(finite)
        else {}
    )
    return {
        "mape_percent": value,
        "mape_excluded": excluded,
        "mse": mse(truth, pred),
        "rmse": rmse(truth, pred),
        "r2": r2(truth, pred),
        "per_node_mape_quantiles": quantiles,
    }
