"""Jordan-block operators for the forced Duffing oscillator.

With A = blockdiag(lambda_t, A_x, A_u), where each Jordan-type block carries lambda on the
diagonal and -1 on the subdiagonal, the depth-1 EWS of X = (t, u, x) holds the
polynomial-exponential memory coordinates

    S^(x,m)_t = int_(t_0)^t exp(-lambda (t - s)) (t - s)^m / m! dx_s,   m = 0..K,

and sum_m lambda^m S^(x,m)_t recovers x_t - x_(t_0) up to a factorially small remainder.
"""

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.linalg

from .ews_engine import ews_features
from .flow_ops import OperatorPair
from .path_model import PiecewiseLinearPath
from .tensor_algebra import DualElement, shuffle_power, total_dimension, word, word_index
from .utils import _as_float_array, _check_positive_int

logger = logging.getLogger(__name__)


def jordan_block(lam: float, size: int) -> np.ndarray:
    """lam on the diagonal and -1 on the subdiagonal."""
    return lam * np.eye(size) - np.eye(size, k=-1)


@dataclass(frozen=True, eq=False)
class DuffingOperator:
    """Operator pair for the path X = (t, u, x).

    Slots of the weighted space: 0 is the clock, 1..K+1 the x-block, K+2..2K+2 the u-block.
    """

    lambda_t: float
    lambda_x: float
    lambda_u: float
    K: int
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.K + 3

    @property
    def x_slots(self) -> slice:
        return slice(1, self.K + 2)

    @property
    def u_slots(self) -> slice:
        return slice(self.K + 2, 2 * self.K + 3)

    @property
    def operator_pair(self) -> OperatorPair:
        return OperatorPair(self.A, self.B)


def build_duffing_operator(
    lambda_t: float, lambda_x: float, lambda_u: float, K: int
) -> DuffingOperator:
    """Assembles A = blockdiag(lambda_t, A_x, A_u) and the embedding B of (t, u, x).

    Raises:
        ValueError: If a rate is not positive or K is negative.
    """
    for name, value in (("lambda_t", lambda_t), ("lambda_x", lambda_x), ("lambda_u", lambda_u)):
        if not value > 0:
            raise ValueError(f"`{name}` must be positive, but received {value}")
    K = _check_positive_int(K, "K", minimum=0)
    A = scipy.linalg.block_diag(
        [[float(lambda_t)]], jordan_block(lambda_x, K + 1), jordan_block(lambda_u, K + 1)
    )
    B = np.zeros((2 * K + 3, 3))
    B[0, 0] = 1.0  # t
    B[K + 2, 1] = 1.0  # u
    B[1, 2] = 1.0  # x
    return DuffingOperator(float(lambda_t), float(lambda_x), float(lambda_u), K, A, B)


def duffing_path(x_path: PiecewiseLinearPath, u: Any = None) -> PiecewiseLinearPath:
    """The path (t, u, x) from a path whose last channel is x. The forcing u defaults to zero."""
    times = x_path.times
    u = np.zeros(times.size) if u is None else _as_float_array(u, "u", ndim=1)
    if u.size != times.size:
        raise ValueError(f"u has {u.size} values, but the path has {times.size} knots")
    return PiecewiseLinearPath(
        times, np.column_stack([times, u, x_path.knots[:, -1]]), clock_index=0
    )


def _chain_coords(
    x_path: PiecewiseLinearPath, lam: float, K: int
) -> np.ndarray:
    operator = build_duffing_operator(lam, lam, lam, K)
    features = ews_features(duffing_path(x_path), operator.operator_pair, 1)
    return features[:, 1:][:, operator.x_slots]


def jordan_chain_coords(
    x_path: PiecewiseLinearPath, lam: float, K: int, t: Union[float, None] = None
) -> np.ndarray:
    """Memory coordinates S^(x,0..K) from the depth-1 streaming EWS with the Jordan operator.

    Args:
        x_path: Path whose last channel is x.
        lam: Rate of the x-block.
        K: Highest polynomial degree.
        t: Knot time to read. All knots when omitted.

    Returns:
        Array (K+1,) at t, or (N+1, K+1) over all knots.

    Raises:
        ValueError: If t is not a knot time.
    """
    coords = _chain_coords(x_path, lam, K)
    if t is None:
        return coords
    return coords[x_path.horizon_index(t)]


def _running_variation(x: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(x)))])


def _remainder_bound(variation: np.ndarray, lam: float, elapsed: np.ndarray, K: int) -> np.ndarray:
    return variation * (lam * elapsed) ** (K + 1) / factorial(K + 1)


def polynomial_reconstruction(
    x_path: PiecewiseLinearPath, lam: float, K: int, t: float
) -> Dict[str, float]:
    """Reconstructs x_t - x_(t_0) as sum_m lam^m S^(x,m)_t, with the remainder bound
    |x|_(1,[t_0,t]) (lam (t - t_0))^(K+1) / (K+1)!.

    Returns:
        {"approx", "truth", "error", "bound"}
    """
    index = x_path.horizon_index(t)
    table = chain_table(x_path, lam, K)
    row = table.iloc[index]
    return {
        "approx": float(row["approx"]),
        "truth": float(row["truth"]),
        "error": float(abs(row["truth"] - row["approx"])),
        "bound": float(row["bound"]),
    }


def chain_table(x_path: PiecewiseLinearPath, lam: float, K: int) -> pd.DataFrame:
    """Per-knot memory coordinates and reconstruction.

    Columns: t, S_x_0..S_x_K, approx, truth (x_t - x_(t_0)), bound.
    """
    coords = _chain_coords(x_path, lam, K)
    x = x_path.knots[:, -1]
    table = pd.DataFrame(coords, columns=[f"S_x_{m}" for m in range(K + 1)])
    table.insert(0, "t", x_path.times)
    table["approx"] = coords @ (float(lam) ** np.arange(K + 1))
    table["truth"] = x - x[0]
    table["bound"] = _remainder_bound(
        _running_variation(x), lam, x_path.times - x_path.times[0], K
    )
    return table


# -----------------------
# Functionals
# -----------------------


def memory_functional(
    start: float, lam: float, K: int, first_letter: int, dim: int
) -> DualElement:
    """start·() + sum_m lam^m (first_letter + m): reads a channel back from its Jordan block."""
    functional = word((), dim, float(start))
    for m in range(K + 1):
        functional = functional + word((first_letter + m,), dim, float(lam) ** m)
    return functional


def cube_functional(x0: float, lam: float, K: int) -> Dict[str, DualElement]:
    """The level-one functional l_x (constant term x0) and its shuffle cube, supported on levels <= 3."""
    dim = 2 * K + 3
    l_x = memory_functional(x0, lam, K, 2, dim)
    return {"l_x": l_x, "l_x_cubed": shuffle_power(l_x, 3)}


def _functional_vector(l: DualElement, dim: int, depth: int) -> np.ndarray:
    vector = np.zeros(total_dimension(dim, depth))
    for w, c in l.terms.items():
        vector[word_index(w, dim)] += float(c)
    return vector


def cube_check(
    x_path: PiecewiseLinearPath, lam: float, K: int, M: Union[int, None] = None
) -> pd.DataFrame:
    """Pairs the shuffle cube of l_x with the depth-3 EWS at every knot.

    The error bound is 3 m^2 R, with R the remainder bound of the level-one reconstruction and
    m the larger of max |x| and max |<l_x, S>|.

    Returns:
        Frame with columns t, pairing, cube, error, bound.
    """
    x = x_path.knots[:, -1]
    operator = build_duffing_operator(lam, lam, lam, K)
    functionals = cube_functional(x[0], lam, K)
    features = ews_features(duffing_path(x_path), operator.operator_pair, 3, M)
    pairing = features @ _functional_vector(functionals["l_x_cubed"], operator.dim, 3)
    linear = features @ _functional_vector(functionals["l_x"], operator.dim, 3)
    remainder = _remainder_bound(_running_variation(x), lam, x_path.times - x_path.times[0], K)
    scale = max(np.max(np.abs(x)), np.max(np.abs(linear)))
    return pd.DataFrame(
        {
            "t": x_path.times,
            "pairing": pairing,
            "cube": x**3,
            "error": np.abs(pairing - x**3),
            "bound": 3.0 * scale**2 * remainder,
        }
    )


# -----------------------
# Velocity reconstruction demo
# -----------------------


@dataclass(frozen=True)
class DuffingParams:
    """x'' + alpha x' + beta x + gamma x^3 = delta u, with forcing u_t = cos(omega t)."""

    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 0.5
    delta: float = 0.8
    omega: float = 1.2
    x0: float = 0.5
    v0: float = 0.0
    horizon: float = 4.0
    steps: int = 200


def simulate_duffing(params: DuffingParams) -> pd.DataFrame:
    """Solution on a uniform grid with scipy's adaptive RK45. Columns t, u, x, v."""
    _check_positive_int(params.steps, "steps")
    times = np.linspace(0.0, params.horizon, params.steps + 1)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v = y
        return np.array(
            [
                v,
                params.delta * np.cos(params.omega * t)
                - params.alpha * v
                - params.beta * x
                - params.gamma * x**3,
            ]
        )

    solution = scipy.integrate.solve_ivp(
        rhs, (0.0, params.horizon), [params.x0, params.v0], t_eval=times, rtol=1e-10, atol=1e-12
    )
    if not solution.success:
        raise ArithmeticError(f"Duffing simulation failed: {solution.message}")
    return pd.DataFrame(
        {"t": times, "u": np.cos(params.omega * times), "x": solution.y[0], "v": solution.y[1]}
    )


def velocity_reconstruction(
    params: DuffingParams = DuffingParams(),
    K: int = 4,
    lam: float = 0.25,
    M: Union[int, None] = None,
) -> Dict[str, Any]:
    """Reconstructs velocity and position of a forced Duffing oscillator from a depth-3 EWS.

    With lambda_t = alpha, the velocity is read as v_t = <l_0, S_t> + z_t, where
    z' = -alpha z + <l, S_t>, z_(t_0) = 0, l_0 = v0·() - alpha v0·(t), and
    l = -beta l_x - gamma l_x^(shuffle 3) + delta l_u. Position integrates the velocity.

    Returns:
        {"table": frame with t, v, v_hat, x, x_hat; "max_velocity_error"; "max_position_error"}
    """
    data = simulate_duffing(params)
    operator = build_duffing_operator(params.alpha, lam, lam, K)
    path = PiecewiseLinearPath(
        data["t"].to_numpy(), data[["t", "u", "x"]].to_numpy(), clock_index=0
    )
    dim = operator.dim
    l_x = memory_functional(params.x0, lam, K, 2, dim)
    l_u = memory_functional(data["u"].iloc[0], lam, K, K + 3, dim)
    l_0 = word((), dim, params.v0) + word((1,), dim, -params.alpha * params.v0)
    l = (-params.beta) * l_x - params.gamma * shuffle_power(l_x, 3) + params.delta * l_u

    features = ews_features(path, operator.operator_pair, 3, M)
    forcing = features @ _functional_vector(l, dim, 3)
    times = data["t"].to_numpy()
    z = scipy.integrate.solve_ivp(
        lambda t, z: -params.alpha * z + np.interp(t, times, forcing),
        (times[0], times[-1]),
        [0.0],
        t_eval=times,
        rtol=1e-10,
        atol=1e-12,
    ).y[0]
    v_hat = features @ _functional_vector(l_0, dim, 3) + z
    x_hat = params.x0 + scipy.integrate.cumulative_trapezoid(v_hat, times, initial=0.0)
    table = pd.DataFrame(
        {"t": times, "v": data["v"], "v_hat": v_hat, "x": data["x"], "x_hat": x_hat}
    )
    result = {
        "table": table,
        "max_velocity_error": float(np.max(np.abs(table["v"] - table["v_hat"]))),
        "max_position_error": float(np.max(np.abs(table["x"] - table["x_hat"]))),
    }
    logger.info(
        "Duffing reconstruction with K=%d: max velocity error %.3e, max position error %.3e",
        K,
        result["max_velocity_error"],
        result["max_position_error"],
    )
    return result

