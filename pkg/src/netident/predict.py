"""Equation-based prediction: integrate an inferred model forward in time."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, IntegrationError, MetricError, ParameterError
from .graph import Graph
from .model import ModelSpec, model_rhs
from .trajectory import Trajectory

logger = logging.getLogger(__name__)


def integrate(
    model: ModelSpec,
    g: Graph,
    x0: np.ndarray,
    t0: float,
    dt: float,
    n_steps: int,
    integrator: str = "rk4",
) -> Trajectory:
    """Integrate the learned vector field for ``n_steps`` time points.

    RK4 by default: the model defines a continuous field, so higher-order
    integration tests the learned law rather than the training
    discretization. Pass ``integrator='euler'`` for apples-to-apples
    comparisons with discrete-time training. Time-dependent terms see the
    running time t0 + k*dt.
    """
    if dt <= 0 or n_steps < 1:
        raise ParameterError("dt must be positive and n_steps >= 1")
    if integrator not in ("rk4", "euler"):
        raise ParameterError("integrator must be 'rk4' or 'euler'")
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ParameterError("x0 must be finite")
    values = np.empty((n_steps,) + x.shape)
    values[0] = x
    for k in range(1, n_steps):
        t = t0 + (k - 1) * dt
        try:
            if integrator == "euler":
                x = x + dt * model_rhs(model, g, x, t)
            else:
                k1 = model_rhs(model, g, x, t)
                k2 = model_rhs(model, g, x + 0.5 * dt * k1, t + 0.5 * dt)
                k3 = model_rhs(model, g, x + 0.5 * dt * k2, t + 0.5 * dt)
                k4 = model_rhs(model, g, x + dt * k3, t + dt)
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        except EvaluationError as err:
            raise IntegrationError(str(err), step=k) from err
        if not np.all(np.isfinite(x)):
            raise IntegrationError("prediction diverged", step=k)
        values[k] = x
    return Trajectory.regular(values, dt=dt, t0=t0)


@dataclass(frozen=True)
class SegmentPrediction:
    trajectory: Trajectory
    failed_segments: list[int]


def segment_predict(
    model: ModelSpec,
    g: Graph,
    traj: Trajectory,
    segment_len: int,
    integrator: str = "rk4",
) -> SegmentPrediction:
    """Re-initialize at the observed first state of each non-overlapping
    segment and integrate segment_len - 1 steps; segments concatenate into a
    full-length prediction. A diverging segment is filled with NaN and
    reported rather than silently dropped (a trailing partial segment is
    allowed)."""
    if segment_len < 1:
        raise ParameterError("segment_len must be >= 1")
    T = traj.n_steps
    values = np.empty_like(traj.values)
    failed: list[int] = []
    seg = 0
    for start in range(0, T, segment_len):
        length = min(segment_len, T - start)
        try:
            piece = integrate(
                model,
                g,
                traj.values[start],
                float(traj.times[start]),
                traj.dt if T > 1 else 1.0,
                length,
                integrator=integrator,
            )
            values[start : start + length] = piece.values
        except IntegrationError as err:
            logger.warning("segment %d failed: %s", seg, err)
            values[start : start + length] = np.nan
            values[start] = traj.values[start]
            failed.append(seg)
        seg += 1
    return SegmentPrediction(
        trajectory=Trajectory(values=values, times=traj.times, check_finite=not failed),
        failed_segments=failed,
    )


def horizon_error(
    truth: Trajectory, pred: Trajectory, window: int, metric: str = "mape"
) -> np.ndarray:
    """Per-window error series along the time axis (MAPE percent or MSE)."""
    from .metrics import mape, mse  # local import to avoid a cycle

    if truth.values.shape != pred.values.shape:
        raise MetricError("trajectories must share shape")
    if window < 1:
        raise ParameterError("window must be >= 1")
    fns = {"mape": mape, "mse": mse}
    if metric not in fns:
        raise ParameterError("metric must be 'mape' or 'mse'")
    out = []
    T = truth.n_steps
    for start in range(0, T, window):
        stop = min(start + window, T)
        out.append(fns[metric](truth.values[start:stop], pred.values[start:stop]))
    return np.array(out)
