"""Independent reference computations used by the test-suite and by `ews selftest`.

None of these share code paths with the production engine beyond the tensor
container itself: they integrate, sum or enumerate directly.
"""

from itertools import combinations
from math import factorial
from typing import Any, Callable, Dict, Sequence, Tuple

import numpy as np
import scipy.integrate
import scipy.linalg

from .flow_ops import OperatorPair
from .path_model import PiecewiseLinearPath
from .tensor_algebra import TruncatedTensor


def taylor_expm(A: Any, terms: int = 200) -> np.ndarray:
    """exp(A) from a Taylor series in extended precision, with scaling and squaring."""
    A = np.asarray(A, dtype=np.longdouble)
    norm = float(np.max(np.sum(np.abs(A), axis=1))) if A.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    scaled = A / np.longdouble(2**squarings)
    result = np.eye(A.shape[0], dtype=np.longdouble)
    term = np.eye(A.shape[0], dtype=np.longdouble)
    for k in range(1, terms + 1):
        term = term @ scaled / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result.astype(np.float64)


def _weighting(A: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """h -> exp(-hA) for an array of h, by eigendecomposition when A is well diagonalisable."""
    gammas, P = np.linalg.eig(A)
    if np.linalg.cond(P) < 1e8:
        P_inv = np.linalg.inv(P)
        return lambda h: np.real(
            (P[None, :, :] * np.exp(-np.multiply.outer(h, gammas))[:, None, :]) @ P_inv
        )
    return lambda h: scipy.linalg.expm(-np.asarray(h)[:, None, None] * A)


def quad_segment_integral(
    A: Any, dtheta: float, dX: Any, fraction: float = 1.0
) -> np.ndarray:
    """int_0^fraction exp(-(dtheta - s*dtheta)A) dX ds by adaptive quadrature."""
    A, dX = np.asarray(A, float), np.asarray(dX, float)
    value, _ = scipy.integrate.quad_vec(
        lambda s: scipy.linalg.expm(-(dtheta - s * dtheta) * A) @ dX,
        0.0,
        fraction,
        epsabs=1e-15,
        epsrel=1e-13,
    )
    return value


def gauss_legendre_segment_integral(
    A: Any, dtheta: float, dX: Any, nodes: int = 48
) -> np.ndarray:
    """int_0^1 exp(-(dtheta - s*dtheta)A) dX ds by Gauss-Legendre quadrature."""
    A, dX = np.asarray(A, float), np.asarray(dX, float)
    x, weights = np.polynomial.legendre.leggauss(nodes)
    s = (x + 1.0) / 2.0
    flows = _weighting(A)(dtheta - s * dtheta)
    return 0.5 * np.einsum("k,kij,j->i", weights, flows, dX)


def classical_signature(path: PiecewiseLinearPath, depth: int) -> TruncatedTensor:
    """Signature by Chen's relation, one segment at a time, with explicit outer products.

    Over a chord v, level k becomes sum_j S_j (x) v^(x)(k-j) / (k-j)!.
    """
    w = path.dim
    levels = [np.ones(())] + [np.zeros((w,) * k) for k in range(1, depth + 1)]
    for v in path.increments():
        powers = [np.ones(())]
        for k in range(1, depth + 1):
            powers.append(np.multiply.outer(powers[-1], v) / k)
        levels = [
            sum(np.multiply.outer(levels[j], powers[k - j]) for j in range(k + 1))
            for k in range(depth + 1)
        ]
    return TruncatedTensor(w, depth, tuple(levels))


def _refine(path: PiecewiseLinearPath, steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint clock values and increments of a uniform refinement with about `steps` pieces."""
    per_segment = max(1, steps // path.n_segments)
    theta = path.clock()
    fractions = (np.arange(per_segment) + 0.5) / per_segment
    midpoints = (theta[:-1, None] + np.diff(theta)[:, None] * fractions).reshape(-1)
    increments = np.repeat(path.increments() / per_segment, per_segment, axis=0)
    return midpoints, increments


def riemann_ews(
    path: PiecewiseLinearPath, op: OperatorPair, depth: int, steps: int = 100_000
) -> TruncatedTensor:
    """EWS up to depth 2 from nested Riemann sums of the weighted increments.

    Each fine increment dX is weighted by exp(-(theta_N - theta_mid)A) B, then
    S^i = sum_k y_k^i and S^(ij) = sum_(k<l) y_k^i y_l^j + 1/2 sum_k y_k^i y_k^j.
    """
    if depth > 2:
        raise ValueError("The Riemann oracle covers depth <= 2 only")
    midpoints, increments = _refine(path, steps)
    theta_end = path.clock()[-1]
    flows = _weighting(op.A)(theta_end - midpoints)
    y = np.einsum("kij,kj->ki", flows, increments @ op.B.T)
    levels = [np.ones(1), y.sum(axis=0), np.zeros((op.dim, op.dim))][: depth + 1]
    if depth == 2:
        before = np.cumsum(y, axis=0) - y
        levels[2] = before.T @ y + 0.5 * y.T @ y
    return TruncatedTensor(op.dim, depth, tuple(levels))


def iterated_integral_riemann(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Running nested sum int_0^t int_0^s dx_r dy_s at every grid point, with x taken at interval midpoints."""
    dx, dy = np.diff(x), np.diff(y)
    inner = np.concatenate([[0.0], np.cumsum(dx)])[:-1] + 0.5 * dx
    return np.concatenate([[0.0], np.cumsum(inner * dy)])


def rk4(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: Any,
    times: Sequence[float],
    substeps: int = 100,
) -> np.ndarray:
    """Classical RK4 through the given times, with `substeps` equal steps between consecutive times."""
    y = np.asarray(y0, dtype=float)
    out = [y.copy()]
    for t0, t1 in zip(times[:-1], times[1:]):
        h = (t1 - t0) / substeps
        t = t0
        for _ in range(substeps):
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        out.append(y.copy())
    return np.array(out)


def rk4_ssm(A: Any, times: Any, inputs: Any, substeps: int = 200) -> np.ndarray:
    """State of dh = -A h dt + x dt, h(t_0) = 0, with x held constant on each interval.

    Args:
        A: State matrix (w x w).
        times: Knot times t_0..t_N.
        inputs: Input x_i on [t_i, t_(i+1)), shape (N, w).
        substeps: RK4 steps per interval.

    Returns:
        Array (N+1, w) of states at the knots.
    """
    A, times, inputs = np.asarray(A, float), np.asarray(times, float), np.asarray(inputs, float)
    states = [np.zeros(A.shape[0])]
    for i in range(times.size - 1):
        x = inputs[i]
        states.append(
            rk4(lambda t, h: -A @ h + x, states[-1], [times[i], times[i + 1]], substeps)[-1]
        )
    return np.array(states)


def brute_force_shuffles(u: Sequence[int], v: Sequence[int]) -> Dict[Tuple[int, ...], int]:
    """Shuffles of u and v by enumerating which positions of the merged word come from u."""
    counts: Dict[Tuple[int, ...], int] = {}
    n = len(u) + len(v)
    for positions in combinations(range(n), len(u)):
        merged, ui, vi = [], iter(u), iter(v)
        for p in range(n):
            merged.append(next(ui) if p in positions else next(vi))
        counts[tuple(merged)] = counts.get(tuple(merged), 0) + 1
    return counts


def concat_double_loop(a: TruncatedTensor, b: TruncatedTensor, depth: int) -> TruncatedTensor:
    """Concatenation product coefficient by coefficient, looping over every word split."""
    w = a.dim
    levels = []
    for k in range(depth + 1):
        level = np.zeros((w,) * k)
        for index in np.ndindex(*((w,) * k)):
            level[index] = sum(
                a.levels[j][index[:j]] * b.levels[k - j][index[j:]] for j in range(k + 1)
            )
        levels.append(level)
    return TruncatedTensor(w, depth, tuple(levels))


def pinv_least_squares(features: Any, targets: Any) -> np.ndarray:
    return np.linalg.pinv(np.asarray(features, float)) @ np.asarray(targets, float)


def relative_error(value: Any, reference: Any) -> float:
    """max |value - reference| / max |reference|."""
    value, reference = np.asarray(value, float), np.asarray(reference, float)
    scale = np.max(np.abs(reference))
    return float(np.max(np.abs(value - reference)) / (scale if scale > 0 else 1.0))


def jordan_kernel_quadrature(
    times: Any, x: Any, lam: float, m: int, t_index: int
) -> float:
    """int_(t_0)^t exp(-lam (t - s)) (t - s)^m / m! dx_s for a polyline x, by adaptive quadrature per piece."""
    times, x = np.asarray(times, float), np.asarray(x, float)
    t = times[t_index]
    total = 0.0
    for i in range(t_index):
        slope = (x[i + 1] - x[i]) / (times[i + 1] - times[i])
        value, _ = scipy.integrate.quad(
            lambda s: np.exp(-lam * (t - s)) * (t - s) ** m / factorial(m),
            times[i],
            times[i + 1],
            epsabs=1e-14,
            epsrel=1e-13,
        )
        total += slope * value
    return total
