"""Oracle suites behind `ews selftest`.

Each suite compares the production engine with an independent computation from
`oracles` on a few seeded random instances, and raises `SelfTestFailure` when a
residual exceeds its tolerance. `run_selftest` runs the suites and displays one
pass/fail line per suite.
"""

from typing import Callable, Dict, List, Sequence, Union

import numpy as np

from .display import _display_line, _display_outcome
from .duffing import jordan_chain_coords
from .ews_engine import (
    SegmentState,
    chen_combine,
    ews_features,
    factorial_decay_bound,
    lncde_solve,
    scan_ews,
)
from .flow_ops import OperatorPair, van_loan_segment
from .oracles import (
    gauss_legendre_segment_integral,
    jordan_kernel_quadrature,
    relative_error,
    riemann_ews,
    rk4_ssm,
)
from .path_model import PiecewiseLinearPath, time_augment
from .tensor_algebra import level_norms, pair, shuffle_product, word, words


class SelfTestFailure(AssertionError):
    """An engine result disagreed with its oracle."""


def _check_within(name: str, residual: float, tolerance: float) -> str:
    if not np.isfinite(residual) or residual > tolerance:
        raise SelfTestFailure(f"{name}: residual {residual:.3e} exceeds {tolerance:.1e}")
    return f"max residual {residual:.3e} (tolerance {tolerance:.1e})"


# -----------------------
# Random instances
# -----------------------


def random_path(
    rng: np.random.Generator, channels: int = 2, segments: int = 10, scale: float = 0.3
) -> PiecewiseLinearPath:
    """Time-augmented polyline on [0, ~1] with random knot spacing and Gaussian steps."""
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 1.5, segments) / segments)])
    steps = rng.standard_normal((segments, channels)) * scale
    values = np.vstack([np.zeros((1, channels)), np.cumsum(steps, axis=0)])
    return time_augment(values, times)


def random_operator(rng: np.random.Generator, dim: int, norm: float = 3.0) -> OperatorPair:
    """General operator with spectral norm at most `norm`."""
    A = rng.standard_normal((dim, dim))
    A *= rng.uniform(0.2, 1.0) * norm / np.linalg.norm(A, 2)
    return OperatorPair(A, structure="general")


def _suffix(path: PiecewiseLinearPath, index: int) -> PiecewiseLinearPath:
    return PiecewiseLinearPath(path.times[index:], path.knots[index:], path.clock_index)


# -----------------------
# Suites
# -----------------------


def check_chen(rng: np.random.Generator, trials: int = 10) -> str:
    """S_(s,t) against the modified Chen product of S_(s,u) and S_(u,t)."""
    worst = 0.0
    for _ in range(trials):
        path = random_path(rng, segments=int(rng.integers(2, 9)))
        op = random_operator(rng, path.dim)
        u = int(rng.integers(1, path.n_segments))
        theta = path.clock()
        left = SegmentState(theta[u] - theta[0], scan_ews(path.prefix(u), op, 3, 8))
        right = SegmentState(theta[-1] - theta[u], scan_ews(_suffix(path, u), op, 3, 8))
        combined = chen_combine(left, right, op.A).tensor.flatten()
        worst = max(worst, relative_error(combined, scan_ews(path, op, 3, 8).flatten()))
    return _check_within("Chen identity", worst, 1e-10)


def check_shuffle(rng: np.random.Generator, trials: int = 40) -> str:
    """<u ⧢ v, S> = <u, S><v, S> on depth-4 EWS over a two-letter alphabet."""
    path = random_path(rng, channels=1, segments=6)
    S = scan_ews(path, random_operator(rng, 2), 4, 16)
    candidates = [w for w in words(2, 3) if w]
    worst = 0.0
    for _ in range(trials):
        u = candidates[int(rng.integers(len(candidates)))]
        v_choices = [w for w in candidates if len(u) + len(w) <= 4]
        v = v_choices[int(rng.integers(len(v_choices)))]
        lhs = pair(shuffle_product(word(u, 2), word(v, 2)), S)
        rhs = S.coefficient(u) * S.coefficient(v)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return _check_within("shuffle identity", worst, 1e-9)


def check_decay(rng: np.random.Generator, trials: int = 10) -> str:
    """Level norms of the EWS against (C |X|_1)^n / n!."""
    worst = 0.0
    for _ in range(trials):
        path = random_path(rng)
        op = random_operator(rng, path.dim)
        norms = level_norms(scan_ews(path, op, 4, 8))
        bound = factorial_decay_bound(path, op, 4)
        worst = max(worst, float(np.max(norms[1:] / bound[1:])))
    return _check_within("factorial decay (norm / bound)", worst, 1.0 + 1e-9)


def check_quadrature(rng: np.random.Generator, trials: int = 20) -> str:
    """Van Loan segment integral against Gauss-Legendre quadrature."""
    worst = 0.0
    for _ in range(trials):
        w = int(rng.integers(2, 5))
        A = random_operator(rng, w).A
        dtheta = float(rng.uniform(0.01, 1.0))
        dX = rng.standard_normal(w)
        knots = van_loan_segment(A, dtheta, dX, 4)
        worst = max(
            worst, relative_error(knots[-1], gauss_legendre_segment_integral(A, dtheta, dX))
        )
    return _check_within("Van Loan vs quadrature", worst, 1e-10)


def check_lncde(rng: np.random.Generator, trials: int = 5) -> str:
    """Scan against the flattened linear CDE: exact at level 1, chord error at level 2."""
    level_one, level_two = 0.0, 0.0
    for _ in range(trials):
        path = random_path(rng)
        op = random_operator(rng, path.dim)
        scanned = scan_ews(path, op, 2, 128)
        solved = lncde_solve(path, op, 2)
        level_one = max(level_one, relative_error(scanned.levels[1], solved.levels[1]))
        level_two = max(level_two, relative_error(scanned.levels[2], solved.levels[2]))
    _check_within("linear CDE, level 1", level_one, 1e-10)
    _check_within("linear CDE, level 2", level_two, 1e-4)
    return f"level 1 {level_one:.3e}, level 2 {level_two:.3e}"


def check_riemann(rng: np.random.Generator, trials: int = 3) -> str:
    """Depth-2 EWS against nested Riemann sums."""
    worst = 0.0
    for _ in range(trials):
        path = random_path(rng)
        op = random_operator(rng, path.dim)
        scanned = scan_ews(path, op, 2, 64).flatten()
        worst = max(worst, relative_error(scanned, riemann_ews(path, op, 2, 20_000).flatten()))
    return _check_within("nested Riemann sums", worst, 1e-3)


def check_ssm(rng: np.random.Generator, trials: int = 5) -> str:
    """Depth-1 streaming EWS of the integral path against RK4 on dh = -A h dt + x dt."""
    worst = 0.0
    for _ in range(trials):
        w = int(rng.integers(1, 4))
        segments = 8
        times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.2, segments))])
        inputs = rng.standard_normal((segments, w))
        knots = np.vstack([np.zeros((1, w)), np.cumsum(inputs * np.diff(times)[:, None], axis=0)])
        op = random_operator(rng, w)
        features = ews_features(PiecewiseLinearPath(times, knots), op, 1)
        reference = rk4_ssm(op.A, times, inputs)
        worst = max(worst, float(np.max(np.abs(features[:, 1:] - reference))))
    return _check_within("state-space recurrence", worst, 1e-6)


def check_duffing(rng: np.random.Generator, trials: int = 3) -> str:
    """Jordan-chain memory coordinates against adaptive quadrature of their kernels."""
    worst = 0.0
    for _ in range(trials):
        path = random_path(rng, channels=1)
        lam, K = float(rng.uniform(0.2, 2.0)), int(rng.integers(0, 4))
        coords = jordan_chain_coords(path, lam, K)
        x = path.knots[:, -1]
        end = path.n_segments
        for m in range(K + 1):
            reference = jordan_kernel_quadrature(path.times, x, lam, m, end)
            worst = max(worst, abs(coords[end, m] - reference))
    return _check_within("Jordan chain coordinates", worst, 1e-9)


SUITES: Dict[str, Callable[[np.random.Generator], str]] = {
    "chen": check_chen,
    "shuffle": check_shuffle,
    "decay": check_decay,
    "quadrature": check_quadrature,
    "lncde": check_lncde,
    "riemann": check_riemann,
    "ssm": check_ssm,
    "duffing": check_duffing,
}


def run_selftest(suites: Union[Sequence[str], None] = None, seed: int = 0) -> bool:
    """Runs oracle suites and displays a pass/fail line for each.

    Args:
        suites: Names from SUITES. All suites when omitted.
        seed: Seed for the random instances. Each suite draws from its own stream.

    Returns:
        Whether every suite passed.

    Raises:
        ValueError: If a suite name is unknown.
    """
    names: List[str] = list(SUITES) if suites is None else list(suites)
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise ValueError(f"Unknown self-test suites {unknown}. Available: {list(SUITES)}")
    _display_line(f"Running {len(names)} self-test suite(s)", lead_in="🧪 EWS selftest")
    passed = True
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        try:
            _display_outcome(True, name, SUITES[name](rng))
        except SelfTestFailure as failure:
            passed = False
            _display_outcome(False, name, str(failure))
    return passed
