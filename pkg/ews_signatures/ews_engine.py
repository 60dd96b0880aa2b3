"""Truncated exponentially weighted signatures (EWS) of piecewise-linear paths.

Each linear segment gets its local EWS from the Van Loan knots of its re-weighted
path; segments are then aggregated with the modified Chen identity

    S_(s,t) = D_A^(theta_t - theta_u) S_(s,u)  (x)  S_(u,t),

which is associative, so the aggregation is a scan over segments. The reduction
tree is fixed by the number of segments alone: streaming outputs come from an
inclusive Kogge-Stone scan, and the final value from a balanced tree over the
segments left-padded with identity states, which brackets the product exactly as
the last element of the scan does.
"""

import logging
from dataclasses import dataclass
from math import factorial
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg

from .flow_ops import (
    OperatorPair,
    _flow_flat,
    _flows,
    _knots,
    derivation_block,
    flow_matrix,
    flow_norm_bound,
    infer_structure,
    matrix_exp,
)
from .path_model import PiecewiseLinearPath, _lifted_increments
from .tensor_algebra import (
    FlatLevels,
    TruncatedTensor,
    _concat_flat,
    _exp_flat,
    _identity_flat,
    _tree_concat_flat,
    concat_product,
    total_dimension,
    word_index,
    words,
)
from .utils import _as_float_array, _as_square_matrix, _check_positive_int, _matmul, _matvec

logger = logging.getLogger(__name__)

LNCDE_MAX_DIMENSION = 4000


# -----------------------
# The scan monoid
# -----------------------


@dataclass(frozen=True, eq=False)
class SegmentState:
    """Clock increment and local EWS of an interval: an element of the modified Chen monoid."""

    dtheta: float
    tensor: TruncatedTensor

    def __post_init__(self) -> None:
        if not np.isclose(float(self.tensor.levels[0]), 1.0, rtol=1e-12, atol=0.0):
            raise ValueError(
                f"Level 0 of a segment state must be 1, but is {float(self.tensor.levels[0])}"
            )
        object.__setattr__(self, "dtheta", float(self.dtheta))

    @classmethod
    def identity(cls, dim: int, depth: int) -> "SegmentState":
        return cls(0.0, TruncatedTensor.unit(dim, depth))


@dataclass
class _StateBatch:
    """A stack of segment states along axis 0, carrying each state's flow exp(-dtheta*A)."""

    dtheta: np.ndarray
    flow: np.ndarray
    levels: FlatLevels

    def __len__(self) -> int:
        return self.dtheta.shape[0]

    def take(self, index: Any) -> "_StateBatch":
        return _StateBatch(
            self.dtheta[index], self.flow[index], [level[index] for level in self.levels]
        )

    @staticmethod
    def stack(parts: List["_StateBatch"]) -> "_StateBatch":
        return _StateBatch(
            np.concatenate([p.dtheta for p in parts]),
            np.concatenate([p.flow for p in parts]),
            [np.concatenate(levels) for levels in zip(*(p.levels for p in parts))],
        )

    @staticmethod
    def identity(count: int, dim: int, depth: int) -> "_StateBatch":
        return _StateBatch(
            np.zeros(count),
            np.broadcast_to(np.eye(dim), (count, dim, dim)).copy(),
            _identity_flat((count,), dim, depth),
        )


def _combine(left: _StateBatch, right: _StateBatch, depth: int) -> _StateBatch:
    """Element-wise modified Chen product of two equally long batches."""
    return _StateBatch(
        left.dtheta + right.dtheta,
        _matmul(right.flow, left.flow),
        _concat_flat(_flow_flat(left.levels, right.flow), right.levels, depth),
    )


def _inclusive_scan(states: _StateBatch, depth: int) -> _StateBatch:
    offset = 1
    while offset < len(states):
        combined = _combine(
            states.take(slice(None, -offset)), states.take(slice(offset, None)), depth
        )
        states = _StateBatch.stack([states.take(slice(None, offset)), combined])
        offset *= 2
    return states


def _balanced_reduce(states: _StateBatch, dim: int, depth: int) -> _StateBatch:
    count = len(states)
    width = 1 << max(count - 1, 0).bit_length()
    if width > count:
        states = _StateBatch.stack([_StateBatch.identity(width - count, dim, depth), states])
    while len(states) > 1:
        states = _combine(
            states.take(slice(0, None, 2)), states.take(slice(1, None, 2)), depth
        )
    return states


def _segment_batch(
    op: OperatorPair, dthetas: np.ndarray, lifted: np.ndarray, depth: int, M: int
) -> _StateBatch:
    """Local EWS of many segments at once. `lifted` holds the increments B dX, shape (N, w)."""
    diagonal = infer_structure(op.A) in ("zero", "diagonal")
    levels = _local_levels(op.A, op.structure == "zero", diagonal, dthetas, lifted, depth, M)
    return _StateBatch(dthetas.astype(np.float64), flow_matrix(op.A, dthetas), levels)


def _local_levels(
    A: np.ndarray,
    zero: bool,
    diagonal: bool,
    dthetas: np.ndarray,
    lifted: np.ndarray,
    depth: int,
    M: int,
) -> FlatLevels:
    """Flat levels of the local EWS of every segment; A may be a stack broadcasting after dthetas."""
    batch = lifted.shape[:-1]
    if depth == 0:
        return _identity_flat(batch, A.shape[-1], 0)
    if zero:
        # Straight chords: Chen collapses, no sub-steps needed
        return _exp_flat(lifted, depth)
    if depth == 1:
        # Level 1 is the exact Van Loan integral
        return [np.ones(batch + (1,)), _knots(A, diagonal, dthetas, lifted, 1)[..., 0, :]]
    knots = _knots(A, diagonal, dthetas, lifted, M)
    chords = np.diff(knots, axis=-2, prepend=np.zeros_like(knots[..., :1, :]))
    return _tree_concat_flat(_exp_flat(chords, depth), depth)


def _resolve_substeps(M: Union[int, None]) -> int:
    return _check_positive_int(M if M is not None else pd.get_option("ews.substeps"), "M")


def _path_segments(
    path: PiecewiseLinearPath, op: OperatorPair, depth: int, M: Union[int, None]
) -> _StateBatch:
    _check_positive_int(depth, "depth", minimum=0)
    if path.n_segments < 1:
        raise ValueError("Cannot compute the EWS of an empty path (it has no segments)")
    return _segment_batch(
        op, path.clock_increments(), _lifted_increments(path, op), depth, _resolve_substeps(M)
    )


def _to_tensor(levels: FlatLevels, index: int, dim: int, depth: int) -> TruncatedTensor:
    return TruncatedTensor(dim, depth, tuple(level[index] for level in levels))


# -----------------------
# Public operations
# -----------------------


def segment_ews(
    op: OperatorPair, dtheta: float, dX: Any, depth: int, M: Union[int, None] = None
) -> SegmentState:
    """Local truncated EWS of one linear segment.

    The M re-weighted knots come from the Van Loan identity on B dX; the chords between them
    are exponentiated and concatenated left to right.

    Args:
        op: Operator pair (A, B).
        dtheta: Clock increment over the segment.
        dX: Input increment over the segment (length d).
        depth: Truncation depth.
        M: Sub-steps. Defaults to the `ews.substeps` option.

    Returns:
        The segment state (dtheta, S).
    """
    dX = _as_float_array(dX, "dX", ndim=1)
    if dX.size != op.input_dim:
        raise ValueError(
            f"dX has {dX.size} entries, but B expects {op.input_dim}"
        )
    _check_positive_int(depth, "depth", minimum=0)
    batch = _segment_batch(
        op,
        np.array([float(dtheta)]),
        _matvec(op.B, dX[None, :]),
        depth,
        _resolve_substeps(M),
    )
    return SegmentState(dtheta, _to_tensor(batch.levels, 0, op.dim, depth))


def chen_combine(left: SegmentState, right: SegmentState, A: Any) -> SegmentState:
    """Modified Chen product: (dtheta_L + dtheta_R, D_A^(dtheta_R) S_L (x) S_R).

    Raises:
        ValueError: If the states have different dimension or depth, or A does not match.
    """
    A = _as_square_matrix(A, "A")
    if (left.tensor.dim, left.tensor.depth) != (right.tensor.dim, right.tensor.depth):
        raise ValueError(
            f"Cannot combine states of shape (dim={left.tensor.dim}, depth={left.tensor.depth}) and (dim={right.tensor.dim}, depth={right.tensor.depth})"
        )
    if A.shape[0] != left.tensor.dim:
        raise ValueError(
            f"A has dimension {A.shape[0]}, but the states have dimension {left.tensor.dim}"
        )
    flowed = _flow_flat(left.tensor.flat_levels(), flow_matrix(A, right.dtheta))
    weighted = TruncatedTensor(left.tensor.dim, left.tensor.depth, tuple(flowed))
    return SegmentState(left.dtheta + right.dtheta, concat_product(weighted, right.tensor))


def _scan_levels(
    path: PiecewiseLinearPath,
    op: OperatorPair,
    depth: int,
    M: Union[int, None],
    streaming: bool,
) -> FlatLevels:
    segments = _path_segments(path, op, depth, M)
    logger.debug(
        "EWS scan over %d segments (dim=%d, depth=%d, structure=%s)",
        len(segments),
        op.dim,
        depth,
        op.structure,
    )
    if streaming:
        prefix = _inclusive_scan(segments, depth)
        unit = _identity_flat((1,), op.dim, depth)
        return [np.concatenate([u, level]) for u, level in zip(unit, prefix.levels)]
    return [level[0] for level in _balanced_reduce(segments, op.dim, depth).levels]


def scan_ews(
    path: PiecewiseLinearPath,
    op: OperatorPair,
    depth: int,
    M: Union[int, None] = None,
    mode: str = "final",
) -> Union[TruncatedTensor, List[TruncatedTensor]]:
    """Truncated EWS of a path.

    Args:
        path: Input path with at least one segment.
        op: Operator pair (A, B).
        depth: Truncation depth.
        M: Sub-steps per segment. Defaults to the `ews.substeps` option.
        mode: "final" for S_(t_0, t_N), or "streaming" for S_(t_0, t_i) at every knot i (starting with the unit at t_0).

    Returns:
        A tensor, or a list of N+1 tensors in streaming mode.

    Raises:
        ValueError: For an empty path, mismatched dimensions or an unknown mode.
    """
    if mode not in ("final", "streaming"):
        raise ValueError(f"Unknown scan mode {mode!r}. Expected 'final' or 'streaming'")
    levels = _scan_levels(path, op, depth, M, streaming=mode == "streaming")
    if mode == "final":
        return TruncatedTensor(op.dim, depth, tuple(levels))
    return [_to_tensor(levels, i, op.dim, depth) for i in range(path.n_segments + 1)]


def ews_features(
    path: PiecewiseLinearPath, op: OperatorPair, depth: int, M: Union[int, None] = None
) -> np.ndarray:
    """Flattened streaming EWS, shape (N+1, D): the feature matrix of a path."""
    return np.concatenate(_scan_levels(path, op, depth, M, streaming=True), axis=1)


def batch_ews_features(
    paths: Sequence[PiecewiseLinearPath],
    ops: Sequence[OperatorPair],
    depth: int,
    M: Union[int, None] = None,
) -> np.ndarray:
    """Streaming EWS features of every (operator, path) pair from a single scan.

    Paths are stacked along one batch axis and operators along another, so the knots,
    flows and Chen products of all pairs are computed together. Clock increments shared
    by many segments are exponentiated once.

    Args:
        paths: Paths with a common number of segments and channels.
        ops: Operator pairs of a common shape.
        depth: Truncation depth.
        M: Sub-steps per segment. Defaults to the `ews.substeps` option.

    Returns:
        Array of shape (len(ops), len(paths), N+1, D). Entry [p, b] agrees with
        ews_features(paths[b], ops[p]) to rounding.

    Raises:
        ValueError: For empty inputs, paths of different lengths or mismatched dimensions.
    """
    paths, ops = list(paths), list(ops)
    if not paths or not ops:
        raise ValueError("Need at least one path and one operator")
    _check_positive_int(depth, "depth", minimum=0)
    M = _resolve_substeps(M)
    shapes = sorted({(path.n_segments, path.dim) for path in paths})
    if len(shapes) > 1:
        raise ValueError(
            f"Paths must share their (segments, channels), but have {shapes}"
        )
    n_segments, channels = shapes[0]
    if n_segments < 1:
        raise ValueError("Cannot compute the EWS of an empty path (it has no segments)")
    if len({(op.dim, op.input_dim) for op in ops}) > 1:
        raise ValueError("Operators must share their dimensions (w, d)")
    if ops[0].input_dim != channels:
        raise ValueError(
            f"Operator B expects {ops[0].input_dim} input channels, but the paths have {channels}"
        )
    A = np.stack([op.A for op in ops])
    dthetas = np.stack([path.clock_increments() for path in paths], axis=1)  # (N, paths)
    increments = np.stack([path.increments() for path in paths], axis=1)  # (N, paths, d)
    lifted = _matvec(np.stack([op.B for op in ops]), increments[:, :, None, :])  # (N, paths, ops, w)
    diagonal = all(infer_structure(op.A) in ("zero", "diagonal") for op in ops)
    zero = all(op.structure == "zero" for op in ops)
    logger.debug(
        "Batched EWS scan: %d operators x %d paths x %d segments (depth=%d)",
        len(ops),
        len(paths),
        n_segments,
        depth,
    )
    segments = _StateBatch(
        np.broadcast_to(dthetas[:, :, None], lifted.shape[:-1]).copy(),
        _flows(A, dthetas, diagonal),
        _local_levels(A, zero, diagonal, dthetas, lifted, depth, M),
    )
    prefix = _inclusive_scan(segments, depth)
    unit = _identity_flat((1,) + lifted.shape[1:-1], ops[0].dim, depth)
    features = np.concatenate(
        [np.concatenate([u, level]) for u, level in zip(unit, prefix.levels)], axis=-1
    )
    return features.transpose(2, 1, 0, 3)


def signature(path: PiecewiseLinearPath, depth: int) -> TruncatedTensor:
    """Classical truncated signature (A = 0, B = I)."""
    return scan_ews(path, OperatorPair.zero(path.dim), depth)


def efm_signature(
    path: PiecewiseLinearPath, lambdas: Any, depth: int, M: Union[int, None] = None
) -> TruncatedTensor:
    """Exponentially fading memory signature: A = diag(lambdas), B = I."""
    return scan_ews(path, OperatorPair.diagonal(lambdas), depth, M)


def substep_deviation(
    path: PiecewiseLinearPath, op: OperatorPair, depth: int, M: Union[int, None] = None
) -> float:
    """Max relative deviation between the EWS at M and at 2M sub-steps."""
    M = _resolve_substeps(M)
    coarse = scan_ews(path, op, depth, M).flatten()
    fine = scan_ews(path, op, depth, 2 * M).flatten()
    deviation = float(np.max(np.abs(coarse - fine)) / max(np.max(np.abs(fine)), 1e-300))
    logger.info("Sub-step convergence: M=%d vs %d, max relative deviation %.3e", M, 2 * M, deviation)
    return deviation


# -----------------------
# Flattened linear CDE
# -----------------------


@dataclass(frozen=True, eq=False)
class LncdeMatrices:
    """Matrices of the flattened EWS dynamics dS = -L S dtheta + sum_i rho(e_i) S dX^i.

    With the clock as channel 1, M_1 = -L + rho(e_1) and M_i = rho(e_i) for i >= 2.
    """

    L: np.ndarray
    rho: List[np.ndarray]
    M: List[np.ndarray]


def _rho(dim: int, depth: int, letter: int) -> np.ndarray:
    """Right multiplication by a letter: basis word u maps to u·letter."""
    size = total_dimension(dim, depth)
    rho = np.zeros((size, size))
    for u in words(dim, depth - 1):
        rho[word_index(u + (letter,), dim), word_index(u, dim)] = 1.0
    return rho


def _derivation(A: np.ndarray, depth: int) -> np.ndarray:
    return scipy.linalg.block_diag(*(derivation_block(A, k) for k in range(depth + 1)))


def build_lncde_matrices(A: Any, d: int, depth: int) -> LncdeMatrices:
    """Flattened linear CDE matrices for B = I, with channel 1 as the clock."""
    A = _as_square_matrix(A, "A")
    if A.shape[0] != d:
        raise ValueError(f"A must be {d} x {d}, but has shape {A.shape}")
    L = _derivation(A, depth)
    rho = [_rho(d, depth, i) for i in range(1, d + 1)]
    return LncdeMatrices(L, rho, [-L + rho[0]] + rho[1:])


def lncde_solve(path: PiecewiseLinearPath, op: OperatorPair, depth: int) -> TruncatedTensor:
    """EWS by exact exponentiation of the flattened linear CDE on each segment.

    On a linear segment the generator -L dtheta + sum_j rho(e_j) (B dX)_j is constant, so one
    matrix exponential per segment solves it exactly.

    Raises:
        ValueError: If D = sum_k w**k exceeds the dense-solve guard, or the path is empty.
    """
    size = total_dimension(op.dim, depth)
    if size > LNCDE_MAX_DIMENSION:
        raise ValueError(
            f"Flattened dimension {size} exceeds the dense-solve guard of {LNCDE_MAX_DIMENSION}"
        )
    if path.n_segments < 1:
        raise ValueError("Cannot solve over an empty path (it has no segments)")
    L = _derivation(op.A, depth)
    rho = np.stack([_rho(op.dim, depth, i) for i in range(1, op.dim + 1)])
    state = np.zeros(size)
    state[0] = 1.0
    for dtheta, lifted in zip(path.clock_increments(), _lifted_increments(path, op)):
        generator = -L * dtheta + np.tensordot(lifted, rho, axes=1)
        state = matrix_exp(generator) @ state
    return TruncatedTensor(op.dim, depth, tuple(np.split(state, np.cumsum([op.dim**k for k in range(depth)]))))


# -----------------------
# Structure, spectra and bounds
# -----------------------


def check_clock_compatible(A: Any, clock_index: int = 0) -> Dict[str, Any]:
    """Whether row `clock_index` of A is alpha times the clock's unit row.

    Returns:
        {"compatible": bool, "alpha": float or None}
    """
    A = _as_square_matrix(A, "A")
    if not 0 <= clock_index < A.shape[0]:
        raise ValueError(f"clock_index {clock_index} is outside 0..{A.shape[0] - 1}")
    row = A[clock_index].copy()
    alpha = float(row[clock_index])
    row[clock_index] = 0.0
    compatible = not np.any(row)
    return {"compatible": compatible, "alpha": alpha if compatible else None}


def uniqueness_holds(A: Any, clock_index: int = 0) -> bool:
    """Structural uniqueness condition: a clock-compatible A makes the re-weighted clock strictly
    increasing, so the EWS determines the path up to translation."""
    return check_clock_compatible(A, clock_index)["compatible"]


def _complex_exprel(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(safe) / safe)


def spectral_level_one(path: PiecewiseLinearPath, op: OperatorPair) -> np.ndarray:
    """Level 1 of the EWS at t_N through the eigendecomposition A = P diag(gamma) P^-1.

    In the eigenbasis each mode is a Laplace transform of the increments,
    int exp(-gamma (theta_N - theta_u)) dX_u, evaluated exactly per linear segment as
    exp(-gamma (theta_N - theta_(i+1))) exprel(-gamma dtheta_i) dX_i.

    Raises:
        ValueError: If A is not (numerically) diagonalisable.
    """
    gammas, P = scipy.linalg.eig(op.A)
    if np.linalg.cond(P) > 1e10:
        raise ValueError("A is not diagonalisable to working precision")
    theta = path.clock()
    dthetas = np.diff(theta)
    lifted = np.linalg.solve(P, _lifted_increments(path, op).T).T  # (N, w) in eigen-coordinates
    decay = np.exp(-gammas * (theta[-1] - theta[1:])[:, None])
    modes = (decay * _complex_exprel(-gammas * dthetas[:, None]) * lifted).sum(axis=0)
    return np.real(P @ modes)


def factorial_decay_bound(
    path: PiecewiseLinearPath, op: OperatorPair, depth: int
) -> np.ndarray:
    """Per-level bounds (C |X|_1)^n / n! with C = sup_h |exp(-hA)|_2 |B|_2 over the clock range."""
    theta = path.clock()
    C = flow_norm_bound(op.A, float(theta[-1] - theta[0])) * np.linalg.norm(op.B, 2)
    length = C * path.one_variation()
    return np.array([length**n / factorial(n) for n in range(depth + 1)])
