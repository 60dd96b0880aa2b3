"""Piecewise-linear paths: ingestion, time augmentation, base points, normalization and re-weighting."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from .flow_ops import OperatorPair, flow_matrix, segment_knots
from .utils import _as_float_array, _check_positive_int, _matvec, _write_csv


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """A polyline through knots in R^d at strictly increasing times.

    Args:
        times: Strictly increasing times t_0 < ... < t_N.
        knots: Array of shape (N+1, d).
        clock_index: 0-based channel whose values are the clock. None means the clock is time itself.
    """

    times: np.ndarray = field(repr=False)
    knots: np.ndarray = field(repr=False)
    clock_index: Union[int, None] = None

    def __post_init__(self) -> None:
        times = _as_float_array(self.times, "times", ndim=1)
        knots = _as_float_array(self.knots, "knots")
        if knots.ndim == 1:
            knots = knots[:, None]
        if knots.ndim != 2 or knots.shape[0] != times.size:
            raise ValueError(
                f"Expected knots of shape ({times.size}, d), but received {knots.shape}"
            )
        if times.size == 0:
            raise ValueError("A path needs at least one knot")
        bad = np.flatnonzero(np.diff(times) <= 0)
        if bad.size:
            raise ValueError(
                f"Times must be strictly increasing, but t[{bad[0] + 1}]={times[bad[0] + 1]} follows t[{bad[0]}]={times[bad[0]]}"
            )
        if self.clock_index is not None:
            if not 0 <= self.clock_index < knots.shape[1]:
                raise ValueError(
                    f"clock_index {self.clock_index} is outside 0..{knots.shape[1] - 1}"
                )
            bad = np.flatnonzero(np.diff(knots[:, self.clock_index]) <= 0)
            if bad.size:
                raise ValueError(
                    f"Clock channel {self.clock_index} must be strictly increasing, but is not at knot {bad[0] + 1}"
                )
        times.setflags(write=False)
        knots.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "knots", knots)

    @property
    def n_segments(self) -> int:
        return self.times.size - 1

    @property
    def dim(self) -> int:
        return self.knots.shape[1]

    def clock(self) -> np.ndarray:
        """Clock values theta at each knot."""
        return self.times if self.clock_index is None else self.knots[:, self.clock_index]

    def increments(self) -> np.ndarray:
        return np.diff(self.knots, axis=0)

    def clock_increments(self) -> np.ndarray:
        return np.diff(self.clock())

    def one_variation(self) -> float:
        """Total length sum_i |X_(i+1) - X_i| of the polyline."""
        return float(np.linalg.norm(self.increments(), axis=1).sum())

    def prefix(self, index: int) -> "PiecewiseLinearPath":
        """The path restricted to knots 0..index."""
        return PiecewiseLinearPath(
            self.times[: index + 1], self.knots[: index + 1], self.clock_index
        )

    def horizon_index(self, horizon: float) -> int:
        """Index of the knot at time `horizon`.

        Raises:
            ValueError: If `horizon` is not a knot time.
        """
        matches = np.flatnonzero(np.isclose(self.times, horizon, rtol=1e-12, atol=0.0))
        if not matches.size:
            raise ValueError(
                f"Horizon {horizon} is not a knot time; interpolate the path first"
            )
        return int(matches[0])

    def to_frame(self, channel_names: Union[Sequence[str], None] = None) -> pd.DataFrame:
        """DataFrame with a `t` column and one column per channel."""
        names = list(channel_names) if channel_names else [
            f"x{i + 1}" for i in range(self.dim)
        ]
        frame = pd.DataFrame(self.knots, columns=names)
        frame.insert(0, "t", self.times)
        return frame


# -----------------------
# CSV
# -----------------------


def ingest_csv(
    file: Union[str, Path, TextIO], clock_column: str = "t"
) -> PiecewiseLinearPath:
    """Reads a CSV with header `t,x1,...,xd` into a path whose channel 0 is the t column.

    Args:
        file: Path or open text file.
        clock_column: Name of the first (time) column.

    Returns:
        A time-augmented path with clock_index 0.

    Raises:
        ValueError: On a bad header, ragged rows, non-numeric cells or non-increasing t, naming the offending row.
    """
    try:
        raw = pd.read_csv(file, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as error:
        raise ValueError(f"Ragged rows in CSV: {error}") from error
    except pd.errors.EmptyDataError as error:
        raise ValueError("CSV file is empty") from error
    if raw.columns.empty or raw.columns[0] != clock_column:
        raise ValueError(
            f"Expected the first CSV column to be {clock_column!r}, but found {list(raw.columns)[:1]}"
        )
    if raw.shape[1] < 2:
        raise ValueError("CSV needs at least one channel column after the time column")
    if raw.empty:
        raise ValueError("CSV has a header but no rows")
    for row, (_, values) in enumerate(raw.iterrows(), start=1):
        for column, cell in values.items():
            if not isinstance(cell, str) or cell == "":
                raise ValueError(
                    f"Row {row} (line {row + 1}) is ragged or has an empty cell in column {column!r}"
                )
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy().nonzero()[0]
    if bad.size:
        row = int(bad[0]) + 1
        column = numeric.columns[numeric.iloc[bad[0]].isna().to_numpy()][0]
        raise ValueError(
            f"Row {row} (line {row + 1}) has a non-numeric cell in column {column!r}: {raw.iloc[bad[0]][column]!r}"
        )
    times = numeric[clock_column].to_numpy(dtype=np.float64)
    steps = np.flatnonzero(np.diff(times) <= 0)
    if steps.size:
        row = int(steps[0]) + 2
        raise ValueError(
            f"Row {row} (line {row + 1}) has t={times[row - 1]}, which does not increase on the previous row"
        )
    return time_augment(numeric.drop(columns=clock_column).to_numpy(np.float64), times)


def export_csv(path: PiecewiseLinearPath, file: Union[str, Path]) -> Path:
    """Writes a path as CSV with header `t,x1,...`, 17 significant digits.

    If channel 0 is a copy of the time column (as after ingestion) it is not repeated.
    """
    knots = path.knots
    if path.clock_index == 0 and np.array_equal(knots[:, 0], path.times):
        knots = knots[:, 1:]
    frame = pd.DataFrame(knots, columns=[f"x{i + 1}" for i in range(knots.shape[1])])
    frame.insert(0, "t", path.times)
    return _write_csv(frame, file)


# -----------------------
# Preprocessing
# -----------------------


def time_augment(values: Any, times: Any) -> PiecewiseLinearPath:
    """Path whose channel 0 is time and whose remaining channels are `values`.

    Raises:
        ValueError: If there are no observations or lengths differ.
    """
    times = _as_float_array(times, "times", ndim=1)
    values = _as_float_array(values, "values")
    if times.size == 0:
        raise ValueError("Cannot augment an empty sequence of observations")
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != times.size:
        raise ValueError(
            f"Got {values.shape[0]} observations but {times.size} times"
        )
    return PiecewiseLinearPath(
        times, np.column_stack([times, values]), clock_index=0
    )


def basepoint_prepend(path: PiecewiseLinearPath) -> PiecewiseLinearPath:
    """Prepends a knot at t_0 - eps with the zero vector, eps = t_1 - t_0 (1 for a single knot).

    The clock channel, if any, continues backward to t_0 - eps so it stays strictly increasing.
    """
    eps = path.times[1] - path.times[0] if path.n_segments else 1.0
    start = np.zeros(path.dim)
    if path.clock_index is not None:
        clock = path.knots[:, path.clock_index]
        gap = clock[1] - clock[0] if path.n_segments else eps
        start[path.clock_index] = clock[0] - gap
    return PiecewiseLinearPath(
        np.concatenate([[path.times[0] - eps], path.times]),
        np.vstack([start, path.knots]),
        path.clock_index,
    )


@dataclass(frozen=True, eq=False)
class NormalizationStats:
    """Per-channel min and max from a training set. Constant channels map to 0.5."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self) -> None:
        lo = _as_float_array(self.min, "min", ndim=1)
        hi = _as_float_array(self.max, "max", ndim=1)
        if lo.shape != hi.shape:
            raise ValueError(f"min and max shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(hi < lo):
            raise ValueError("Every channel needs max >= min")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def fit(cls, values: Any) -> "NormalizationStats":
        """Statistics over all leading axes of an array (..., d)."""
        values = _as_float_array(values, "values")
        flat = values.reshape(-1, values.shape[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    def transform(self, values: Any) -> np.ndarray:
        values = _as_float_array(values, "values")
        span = self.max - self.min
        constant = span == 0
        scaled = (values - self.min) / np.where(constant, 1.0, span)
        return np.where(constant, 0.5, scaled)

    def inverse(self, values: Any) -> np.ndarray:
        values = _as_float_array(values, "values")
        return self.min + values * (self.max - self.min)

    def to_json(self) -> Dict[str, List[float]]:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "NormalizationStats":
        unknown = set(obj) - {"min", "max"}
        if unknown:
            raise ValueError(f"Unknown keys in normalization JSON: {sorted(unknown)}")
        return cls(obj["min"], obj["max"])


# -----------------------
# Re-weighted path
# -----------------------


def _lifted_increments(path: PiecewiseLinearPath, op: OperatorPair) -> np.ndarray:
    if op.input_dim != path.dim:
        raise ValueError(
            f"Operator B expects {op.input_dim} input channels, but the path has {path.dim}"
        )
    return _matvec(op.B, path.increments())


def reweighted_path(
    path: PiecewiseLinearPath,
    op: OperatorPair,
    horizon: float,
    M: Union[int, None] = None,
) -> PiecewiseLinearPath:
    """The re-weighted path Z^[t]_r = int_(t_0)^r exp(-(theta_t - theta_u)A) B dX_u, sampled at M sub-knots per segment.

    Args:
        path: Input path.
        op: Operator pair (A, B).
        horizon: Knot time t at which the weighting is anchored.
        M: Sub-steps per segment. Defaults to the `ews.substeps` option.

    Returns:
        A path in R^w with hM+1 knots (h segments before the horizon) and no clock channel.

    Raises:
        ValueError: If `horizon` is not a knot time or dimensions do not match.
    """
    M = _check_positive_int(M if M is not None else pd.get_option("ews.substeps"), "M")
    end = path.horizon_index(horizon)
    if end == 0:
        return PiecewiseLinearPath(path.times[:1], np.zeros((1, op.dim)))
    theta = path.clock()
    local = segment_knots(
        op.A, np.diff(theta[: end + 1]), _lifted_increments(path, op)[:end], M
    )  # (end, M, w), each weighted to its own segment end
    to_horizon = flow_matrix(op.A, theta[end] - theta[1 : end + 1])  # (end, w, w)
    weighted = (to_horizon[:, None, :, :] * local[:, :, None, :]).sum(axis=-1)
    offsets = np.concatenate([np.zeros((1, op.dim)), np.cumsum(weighted[:-1, -1], axis=0)])
    knots = np.vstack([np.zeros((1, op.dim)), (offsets[:, None, :] + weighted).reshape(-1, op.dim)])
    dt = np.diff(path.times[: end + 1])
    fractions = np.arange(1, M + 1) / M
    times = (path.times[:end, None] + dt[:, None] * fractions).copy()
    times[:, -1] = path.times[1 : end + 1]
    return PiecewiseLinearPath(
        np.concatenate([path.times[:1], times.reshape(-1)]), knots
    )
