"""Operator exponentials and their lifts to the tensor algebra.

The flow operator D_A^h acts on level k of a truncated tensor by applying
E = exp(-hA) along each of the k tensor modes. Its generator is the derivation
with blocks L^(k) = sum_j I^(x)(j-1) (x) A (x) I^(x)(k-j). Segment integrals of the
form int exp(-sA) v ds come from the top-right block of an augmented
(Van Loan) matrix exponential.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Union

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special

from .tensor_algebra import FlatLevels, TruncatedTensor
from .utils import _as_float_array, _as_square_matrix, _check_positive_int, _matmul, _matvec

STRUCTURES = ("zero", "diagonal", "clock_compatible", "general")


# -----------------------
# Operator pairs
# -----------------------


def infer_structure(A: Any, clock_index: int = 0) -> str:
    """Most specific structural class of A: "zero", "diagonal", "clock_compatible" or "general".

    Clock-compatible means row `clock_index` of A is (0, ..., alpha, ..., 0), i.e. it only
    touches the clock channel.
    """
    A = _as_square_matrix(A, "A")
    if not np.any(A):
        return "zero"
    if not np.any(A - np.diag(np.diag(A))):
        return "diagonal"
    if 0 <= clock_index < A.shape[0]:
        row = A[clock_index].copy()
        row[clock_index] = 0.0
        if not np.any(row):
            return "clock_compatible"
    return "general"


def _satisfies(A: np.ndarray, structure: str, clock_index: int = 0) -> bool:
    inferred = infer_structure(A, clock_index)
    # Classes are nested: zero < diagonal < clock_compatible < general
    return STRUCTURES.index(inferred) <= STRUCTURES.index(structure)


@dataclass(frozen=True, eq=False)
class OperatorPair:
    """The weighting operator A (w x w) and the embedding B (w x d) of an EWS.

    Args:
        A: Square weighting matrix.
        B: Embedding of the d input channels into R^w. Defaults to the identity, which requires w == d.
        structure: Declared structural class. Inferred from A when omitted.
    """

    A: np.ndarray = field(repr=False)
    B: Union[np.ndarray, None] = field(default=None, repr=False)
    structure: Union[str, None] = None

    def __post_init__(self) -> None:
        A = _as_square_matrix(self.A, "A")
        B = np.eye(A.shape[0]) if self.B is None else _as_float_array(self.B, "B", ndim=2)
        if B.shape[0] != A.shape[0]:
            raise ValueError(
                f"B must have {A.shape[0]} rows to match A, but has shape {B.shape}"
            )
        structure = infer_structure(A) if self.structure is None else self.structure
        if structure not in STRUCTURES:
            raise ValueError(
                f"Unknown operator structure {structure!r}. Expected one of {STRUCTURES}"
            )
        if not _satisfies(A, structure):
            raise ValueError(
                f"A does not have the declared structure {structure!r} (it is {infer_structure(A)!r})"
            )
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "structure", structure)

    @property
    def dim(self) -> int:
        """Dimension w of the weighted space."""
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        """Dimension d of the input path."""
        return self.B.shape[1]

    @property
    def is_diagonal(self) -> bool:
        return self.structure in ("zero", "diagonal")

    @classmethod
    def zero(cls, dim: int) -> "OperatorPair":
        """A = 0 and B = I: the classical signature."""
        return cls(np.zeros((dim, dim)), None, "zero")

    @classmethod
    def identity(cls, dim: int) -> "OperatorPair":
        """A = I and B = I: every channel fades at unit rate."""
        return cls(np.eye(dim), None, "diagonal")

    @classmethod
    def diagonal(cls, lambdas: Any, B: Any = None) -> "OperatorPair":
        """A = diag(lambdas): the exponentially fading memory (EFM) case."""
        lambdas = _as_float_array(lambdas, "lambdas", ndim=1)
        return cls(np.diag(lambdas), B, "diagonal" if np.any(lambdas) else "zero")

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "OperatorPair":
        """Builds an operator pair from {A: matrix, B: matrix | "identity", structure}.

        Raises:
            ValueError: If A is missing or an unknown key is present.
        """
        unknown = set(obj) - {"A", "B", "structure"}
        if unknown:
            raise ValueError(f"Unknown keys in operator JSON: {sorted(unknown)}")
        if "A" not in obj:
            raise ValueError("Operator JSON needs an `A` matrix")
        B = obj.get("B", "identity")
        return cls(
            obj["A"], None if B in (None, "identity") else B, obj.get("structure")
        )

    def to_json(self) -> Dict[str, Any]:
        identity = self.B.shape[0] == self.B.shape[1] and np.array_equal(
            self.B, np.eye(self.dim)
        )
        return {
            "A": self.A.tolist(),
            "B": "identity" if identity else self.B.tolist(),
            "structure": self.structure,
        }


# -----------------------
# Exponentials
# -----------------------


def matrix_exp(A: Any) -> np.ndarray:
    """Matrix exponential by scaling and squaring with Padé approximation.

    Accepts a single matrix or a stack (..., n, n).

    Raises:
        ValueError: If A has non-finite entries or is not square.
    """
    A = _as_float_array(A, "A")
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"Expected square matrices, but received shape {A.shape}")
    return scipy.linalg.expm(A)


def flow_matrix(A: Any, h: Any) -> np.ndarray:
    """E = exp(-hA) for a scalar h or an array of h values (stacked along leading axes)."""
    A = _as_square_matrix(A, "A")
    h = np.asarray(h, dtype=np.float64)
    return _flows(A, h, infer_structure(A) in ("zero", "diagonal"))


def _on_unique(values: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluates fn once per distinct entry of `values` and scatters the results back.

    fn maps a 1-d array of distinct values to results stacked along axis 0.
    """
    unique, inverse = np.unique(values.reshape(-1), return_inverse=True)
    return fn(unique)[inverse.reshape(values.shape)]


def _flows(A: np.ndarray, h: np.ndarray, diagonal: bool) -> np.ndarray:
    """exp(-hA) for every h and every matrix in the stack A (..., w, w): shape h.shape + A.shape."""
    if diagonal:
        rates = np.diagonal(A, axis1=-2, axis2=-1)
        return _diagonal_embed(np.exp(-h.reshape(h.shape + (1,) * rates.ndim) * rates))
    return _on_unique(h, lambda u: matrix_exp(-u.reshape(u.shape + (1,) * A.ndim) * A))


def _diagonal_embed(values: np.ndarray) -> np.ndarray:
    out = np.zeros(values.shape + (values.shape[-1],))
    idx = np.arange(values.shape[-1])
    out[..., idx, idx] = values
    return out


def _flow_flat(levels: FlatLevels, E: np.ndarray) -> FlatLevels:
    """Applies E along every tensor mode of each level, broadcasting E's leading axes over the batch."""
    w = E.shape[-1]
    out = [levels[0]]
    for k in range(1, len(levels)):
        batch = levels[k].shape[:-1]
        x = levels[k].reshape(batch + (w,) * k)
        E_modes = E.reshape(E.shape[:-2] + (1,) * (k - 1) + (w, w))
        for mode in range(k):
            axis = len(batch) + mode
            x = np.moveaxis(x, axis, -1)
            x = (E_modes * x[..., None, :]).sum(axis=-1)
            x = np.moveaxis(x, -1, axis)
        out.append(x.reshape(batch + (w**k,)))
    return out


def flow_apply(A: Any, h: float, s: TruncatedTensor) -> TruncatedTensor:
    """The flow operator D_A^h: level k is transformed by exp(-hA) on each of its k modes.

    Raises:
        ValueError: If A does not match the tensor dimension.
    """
    A = _as_square_matrix(A, "A")
    if A.shape[0] != s.dim:
        raise ValueError(
            f"A has dimension {A.shape[0]}, but the tensor has dimension {s.dim}"
        )
    return TruncatedTensor(
        s.dim, s.depth, tuple(_flow_flat(s.flat_levels(), flow_matrix(A, h)))
    )


def derivation_block(A: Any, k: int) -> np.ndarray:
    """Block L^(k) of the derivation generated by A, a w**k x w**k matrix in the flattened basis."""
    A = _as_square_matrix(A, "A")
    _check_positive_int(k, "k", minimum=0)
    if k == 0:
        return np.zeros((1, 1))
    w = A.shape[0]
    block = np.zeros((w**k, w**k))
    for j in range(k):
        block += np.kron(np.kron(np.eye(w**j), A), np.eye(w ** (k - j - 1)))
    return block


def flow_norm_bound(A: Any, horizon: float, grid: int = 257) -> float:
    """sup over h in [0, horizon] of the spectral norm of exp(-hA).

    Evaluated on a uniform grid, then refined with a bounded scalar search around the best grid point.
    """
    A = _as_square_matrix(A, "A")
    if horizon < 0:
        raise ValueError(f"`horizon` must be non-negative, but received {horizon}")
    if horizon == 0:
        return 1.0
    hs = np.linspace(0.0, horizon, grid)
    norms = np.linalg.norm(flow_matrix(A, hs), ord=2, axis=(-2, -1))
    best = int(np.argmax(norms))
    lower, upper = hs[max(best - 1, 0)], hs[min(best + 1, grid - 1)]
    refined = scipy.optimize.minimize_scalar(
        lambda h: -np.linalg.norm(flow_matrix(A, h), ord=2),
        bounds=(lower, upper),
        method="bounded",
    )
    return float(max(norms[best], -refined.fun, 1.0))


# -----------------------
# Van Loan segment integrals
# -----------------------


@dataclass(frozen=True)
class AugmentedExponential:
    """Blocks of exp([[dtheta*A/M, dX/M], [0, 0]]). The implied bottom row is (0, ..., 0, 1)."""

    top_left: np.ndarray
    top_right: np.ndarray
    step_count: int

    def matrix(self) -> np.ndarray:
        w = self.top_left.shape[0]
        out = np.zeros((w + 1, w + 1))
        out[:w, :w] = self.top_left
        out[:w, w] = self.top_right
        out[w, w] = 1.0
        return out


def augmented_exponential(
    A: Any, dtheta: float, dX: Any, M: int
) -> AugmentedExponential:
    """exp of the Van Loan block for one sub-step; pass -A for the reverse-time form."""
    A = _as_square_matrix(A, "A")
    dX = _as_float_array(dX, "dX", ndim=1)
    M = _check_positive_int(M, "M")
    w = A.shape[0]
    psi = np.zeros((w + 1, w + 1))
    psi[:w, :w] = dtheta * A / M
    psi[:w, w] = dX / M
    E = matrix_exp(psi)
    return AugmentedExponential(E[:w, :w], E[:w, w], M)


def _prefix_powers(E: np.ndarray, M: int) -> np.ndarray:
    """E^1..E^M stacked on axis -3, by an inclusive scan with a fixed reduction order."""
    powers = np.repeat(E[..., None, :, :], M, axis=-3)
    offset = 1
    while offset < M:
        shifted = powers[..., :-offset, :, :]
        powers = np.concatenate(
            [powers[..., :offset, :, :], _matmul(shifted, powers[..., offset:, :, :])],
            axis=-3,
        )
        offset *= 2
    return powers


def _decay_to_end(top_left: np.ndarray, M: int) -> np.ndarray:
    """exp(-(1 - j/M) dtheta A) for j = 1..M, read off the top-left blocks of the powers F^1..F^M."""
    w = top_left.shape[-1]
    end = np.broadcast_to(np.eye(w), top_left.shape[:-3] + (1, w, w))
    return np.concatenate([top_left[..., : M - 1, :, :][..., ::-1, :, :], end], axis=-3)


def _van_loan_kernels(A: np.ndarray, dthetas: np.ndarray, M: int) -> np.ndarray:
    """Matrices K_j with knot_j = K_j @ dX, shape dthetas.shape + A.shape[:-2] + (M, w, w).

    The powers F^j of the reverse-time block F = exp([[-dtheta*A/M, I/M], [0, 0]]) hold
    exp(-(j/M) dtheta A) top left and int_0^(j/M) exp(-s dtheta A) ds top right, so
    K_j = exp(-(1 - j/M) dtheta A) int_0^(j/M) exp(-s dtheta A) ds. A may be a stack of
    matrices; each distinct dtheta is exponentiated once.
    """
    w = A.shape[-1]

    def kernels(unique: np.ndarray) -> np.ndarray:
        scaled = -unique.reshape(unique.shape + (1,) * A.ndim) * A / M
        psi = np.zeros(scaled.shape[:-2] + (2 * w, 2 * w))
        psi[..., :w, :w] = scaled
        psi[..., :w, w:] = np.eye(w) / M
        powers = _prefix_powers(matrix_exp(psi), M)
        return _matmul(_decay_to_end(powers[..., :w, :w], M), powers[..., :w, w:])

    return _on_unique(dthetas, kernels)


def _efm_knots(
    lambdas: np.ndarray, dthetas: np.ndarray, dX: np.ndarray, M: int
) -> np.ndarray:
    """Closed-form knots for diagonal A: dX * exp(-r(1 - f)) * f * exprel(-r f), with r = l*dtheta and f = j/M.

    `lambdas` is (..., w), one row per operator; the result has shape dthetas.shape + lambdas.shape[:-1] + (M, w).
    """
    fractions = np.arange(1, M + 1) / M
    rates = dthetas.reshape(dthetas.shape + (1,) * lambdas.ndim) * lambdas
    remaining = rates[..., None, :] * (1.0 - fractions[:, None])
    elapsed = rates[..., None, :] * fractions[:, None]
    weights = np.exp(-remaining) * fractions[:, None] * scipy.special.exprel(-elapsed)
    return weights * dX[..., None, :]


def _knots(
    A: np.ndarray, diagonal: bool, dthetas: np.ndarray, dX: np.ndarray, M: int
) -> np.ndarray:
    """Knots of every segment under every operator of the stack A.

    Args:
        A: One matrix (w, w) or a stack (..., w, w).
        diagonal: Whether every matrix in A is diagonal.
        dthetas: Clock increments of any shape.
        dX: Lifted increments, shape dthetas.shape + A.shape[:-2] + (w,).
        M: Number of sub-steps.

    Returns:
        Array of shape dthetas.shape + A.shape[:-2] + (M, w).
    """
    if diagonal:
        return _efm_knots(np.diagonal(A, axis1=-2, axis2=-1), dthetas, dX, M)
    return _matvec(_van_loan_kernels(A, dthetas, M), dX[..., None, :])


def segment_knots(A: Any, dthetas: Any, dX: Any, M: int) -> np.ndarray:
    """Re-weighted knots for a batch of segments: shape (N, M, w), weighted to each segment's end."""
    A = _as_square_matrix(A, "A")
    dthetas = _as_float_array(dthetas, "dthetas", ndim=1)
    dX = _as_float_array(dX, "dX", ndim=2)
    M = _check_positive_int(M, "M")
    return _knots(A, infer_structure(A) in ("zero", "diagonal"), dthetas, dX, M)


def van_loan_segment(A: Any, dtheta: float, dX: Any, M: int) -> np.ndarray:
    """Knots Z_(r_j), j = 1..M, of the re-weighted path on one linear segment.

    Builds the reverse-time block Psi = [[-dtheta*A/M, dX/M], [0, 0]] and takes E = exp(Psi).
    The last column of E^j is int_0^(j/M) exp(-s dtheta A) ds dX, and the top-left block of
    E^(M-j) carries it to the segment end. No factor grows with dtheta*A, so long segments
    and fast rates stay finite.

    Args:
        A: Weighting matrix (w x w).
        dtheta: Clock increment over the segment.
        dX: Increment of the (lifted) path over the segment.
        M: Number of sub-steps.

    Returns:
        Array of shape (M, w).

    Raises:
        ValueError: If M < 1 or inputs are not finite.
    """
    A = _as_square_matrix(A, "A")
    dX = _as_float_array(dX, "dX", ndim=1)
    M = _check_positive_int(M, "M")
    if A.shape[0] != dX.size:
        raise ValueError(
            f"dX has {dX.size} entries, but A has dimension {A.shape[0]}"
        )
    if infer_structure(A) in ("zero", "diagonal"):
        return _efm_knots(np.diag(A), np.array([float(dtheta)]), dX[None, :], M)[0]
    augmented = augmented_exponential(-A, dtheta, dX, M)
    powers = _prefix_powers(augmented.matrix(), M)
    return _matvec(_decay_to_end(powers[:, :-1, :-1], M), powers[:, :-1, -1])
