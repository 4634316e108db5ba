"""Time-stamped node-state records: container, degradation ops, and file IO."""
from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"SIGNTRAJ1"


@dataclass(frozen=True)
class Trajectory:
    """Dense node-state record sampled on a uniform time grid.

    ``values`` has shape [T, n, d]; ``times`` has length T with uniform
    spacing ``dt``. ``derivs``, when present, matches ``values``.
    """

    values: np.ndarray
    times: np.ndarray
    derivs: np.ndarray | None = None
    check_finite: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if values.ndim != 3:
            raise ParameterError("values must have shape [T, n, d]")
        if times.shape != (values.shape[0],):
            raise ParameterError("times must have one entry per time point")
        if len(times) >= 2:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise ParameterError("times must be strictly increasing")
            dt = steps[0]
            if np.any(np.abs(steps - dt) > 1e-12 * max(abs(dt), 1.0)):
                raise ParameterError("times must be uniformly spaced")
        if self.check_finite and not np.all(np.isfinite(values)):
            raise ParameterError("values must be finite")
        if self.derivs is not None:
            derivs = np.asarray(self.derivs, dtype=float)
            if derivs.shape != values.shape:
                raise ParameterError("derivs must match values shape")
            object.__setattr__(self, "derivs", derivs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @staticmethod
    def regular(values: np.ndarray, dt: float, t0: float = 0.0, **kw) -> "Trajectory":
        values = np.asarray(values, dtype=float)
        times = t0 + dt * np.arange(values.shape[0])
        return Trajectory(values=values, times=times, **kw)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def state_dim(self) -> int:
        return self.values.shape[2]

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            raise ParameterError("dt undefined for a single time point")
        return float(self.times[1] - self.times[0])

    def select_nodes(self, index_map: np.ndarray) -> "Trajectory":
        """Restrict to the nodes kept by a removal index map (-1 = removed)."""
        keep = np.nonzero(np.asarray(index_map) >= 0)[0]
        derivs = self.derivs[:, keep, :] if self.derivs is not None else None
        return Trajectory(
            values=self.values[:, keep, :],
            times=self.times,
            derivs=derivs,
            check_finite=self.check_finite,
        )


# ---------------------------------------------------------------------------
# Degradation operations
# ---------------------------------------------------------------------------


def add_noise(traj: Trajectory, snr_db: float | None, seed: int) -> Trajectory:
    """Add i.i.d. Gaussian noise at the given signal-to-noise ratio (dB).

    Noise variance per state dimension equals that dimension's mean signal
    power (across all nodes and times) divided by 10^(snr_db/10). ``None`` or
    infinite ``snr_db`` returns the trajectory unchanged.
    """
    if snr_db is None or np.isinf(snr_db):
        return traj
    if not np.isfinite(snr_db):
        raise ParameterError("snr_db must be finite or the clean sentinel")
    power = np.mean(traj.values**2, axis=(0, 1))  # [d]
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(traj.values.shape) * sigma
    return Trajectory(values=traj.values + noise, times=traj.times)


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    """Keep indices {0, stride, 2*stride, ...}; the sampling interval scales by stride."""
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    if stride == 1:
        return traj
    derivs = traj.derivs[::stride] if traj.derivs is not None else None
    return Trajectory(values=traj.values[::stride], times=traj.times[::stride], derivs=derivs)


def truncate(traj: Trajectory, n_keep: int) -> Trajectory:
    """Keep the first ``n_keep`` time points."""
    if n_keep < 1 or n_keep > traj.n_steps:
        raise ParameterError("truncation length must be in [1, T]")
    derivs = traj.derivs[:n_keep] if traj.derivs is not None else None
    return Trajectory(values=traj.values[:n_keep], times=traj.times[:n_keep], derivs=derivs)


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------


def save_binary(traj: Trajectory, path) -> None:
    """Packed binary format: magic, then n, d, T (int64 LE) and dt (float64 LE),
    then the [T, n, d] values row-major as float64 LE."""
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(
            struct.pack(
                "<qqqd", traj.n_nodes, traj.state_dim, traj.n_steps, traj.dt if traj.n_steps > 1 else 0.0
            )
        )
        fh.write(np.ascontiguousarray(traj.values, dtype="<f8").tobytes())


def load_binary(path, t0: float = 0.0) -> Trajectory:
    with open(path, "rb") as fh:
        magic = fh.read(len(BINARY_MAGIC))
        if magic != BINARY_MAGIC:
            raise ParameterError(f"{path}: not a packed trajectory file")
        n, d, t, dt = struct.unpack("<qqqd", fh.read(8 * 4))
        data = np.frombuffer(fh.read(8 * n * d * t), dtype="<f8").reshape(t, n, d)
    return Trajectory.regular(data.astype(float), dt=dt if t > 1 else 1.0, t0=t0)


def save_csv(traj: Trajectory, path) -> None:
    """CSV with header t,node,dim,value; one row per (time, node, dimension)."""
    T, n, d = traj.values.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "dim", "value"])
        for ti in range(T):
            t = traj.times[ti]
            for node in range(n):
                for dim in range(d):
                    w.writerow([repr(float(t)), node, dim, repr(float(traj.values[ti, node, dim]))])


def load_csv(path) -> Trajectory:
    times_seen: dict[float, int] = {}
    rows: list[tuple[int, int, int, float]] = []
    max_node = -1
    max_dim = -1
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "node", "dim", "value"]:
            raise ParameterError(f"{path}: expected header 't,node,dim,value'")
        for rec in reader:
            if not rec:
                continue
            t, node, dim, value = float(rec[0]), int(rec[1]), int(rec[2]), float(rec[3])
            ti = times_seen.setdefault(t, len(times_seen))
            rows.append((ti, node, dim, value))
            max_node = max(max_node, node)
            max_dim = max(max_dim, dim)
    times = np.array(sorted(times_seen, key=times_seen.get), dtype=float)
    order = np.argsort(times, kind="stable")
    rank = np.empty(len(times), dtype=np.int64)
    rank[order] = np.arange(len(times))
    values = np.full((len(times), max_node + 1, max_dim + 1), np.nan)
    for ti, node, dim, value in rows:
        values[rank[ti], node, dim] = value
    if np.any(np.isnan(values)):
        raise ParameterError(f"{path}: missing (t, node, dim) entries")
    return Trajectory(values=values, times=times[order])
