"""Desk-scale learning experiments with exponentially weighted signatures.

Two same-time regression tasks on time-augmented Brownian paths (t, W1, W2):

- expressivity: the target is the (2,3) coefficient of a depth-2 EWS with a known
  operator A*, which is a full matrix (EWS), a diagonal one (EFM) or zero (signature).
- sde: the target is X1 of a coupled oscillatory SDE driven by (W1, W2).

Each learner computes streaming EWS features of the input with a trainable
operator A and reads them out linearly. The readout is refit in closed form
inside the loss; A is updated by central finite-difference gradients under a
linear-warmup / cosine-decay learning rate, keeping the best validation checkpoint.
The 2n+1 operators of a training step and the minibatch paths go through one
batched scan.
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from functools import cached_property
from math import cos, pi
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from .display import _warning
from .ews_engine import batch_ews_features, ews_features
from .flow_ops import OperatorPair
from .path_model import (
    NormalizationStats,
    PiecewiseLinearPath,
    basepoint_prepend,
    time_augment,
)
from .tensor_algebra import word_index
from .timer import start_timer, time_elapsed
from .utils import _as_float_array, _check_positive_int, _parallel_map

logger = logging.getLogger(__name__)

LEARNERS = {"ews": "full", "efm": "diagonal", "signature": "zero"}
TARGETS = ("ews", "efm", "signature")
DIVERGENCE_LOSS = 1e6
PATH_CHUNK = 8
TRAINING_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError)


# -----------------------
# Configuration
# -----------------------


def _from_mapping(cls: Any, obj: Mapping[str, Any]) -> Any:
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
    values = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in obj.items()
    }
    return cls(**values)


@dataclass(frozen=True)
class SdeParams:
    """Coupled oscillatory SDE

    dX1 = (alpha sin(omega X2) - beta X1) dt + sigma dW1
    dX2 = (alpha cos(omega X1) - beta X2) dt + sigma dW2
    """

    alpha: float = 3.0
    omega: float = 1.0
    beta: float = 0.5
    sigma: float = 0.4
    x0: Tuple[float, float] = (0.5, 0.5)
    horizon: float = 4.0
    steps: int = 1000

    def __post_init__(self) -> None:
        _check_positive_int(self.steps, "steps", minimum=2)
        if self.sigma < 0:
            raise ValueError(f"`sigma` must be non-negative, but received {self.sigma}")
        if self.horizon <= 0:
            raise ValueError(f"`horizon` must be positive, but received {self.horizon}")
        if len(self.x0) != 2:
            raise ValueError(f"`x0` must have two entries, but received {self.x0}")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "SdeParams":
        return _from_mapping(cls, obj)


@dataclass(frozen=True)
class TrainConfig:
    """Training and data settings shared by both tasks.

    Learning rates follow a linear warmup to `base_lr` over `warmup_steps`, then cosine decay to
    `lr_floor * base_lr` at `total_steps`.
    """

    parametrization: str = "full"
    depth: int = 2
    substeps: int = 8
    target_substeps: int = 32
    base_lr: float = 0.05
    warmup_steps: int = 100
    total_steps: int = 2000
    lr_floor: float = 0.01
    fd_step: float = 1e-4
    clip_norm: float = 1.0
    ridge: float = 1e-8
    seeds: Tuple[int, ...] = (0, 1, 2)
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    n_trajectories: int = 100
    steps: int = 1000
    horizon: float = 5.0
    batch_size: int = 8
    eval_every: int = 100
    data_seed: int = 0
    init_scale: float = 0.5
    threads: int = 0

    def __post_init__(self) -> None:
        if self.parametrization not in ("full", "diagonal", "zero"):
            raise ValueError(
                f"Unknown parametrization {self.parametrization!r}. Expected 'full', 'diagonal' or 'zero'"
            )
        if self.fd_step <= 0:
            raise ValueError(f"`fd_step` must be positive, but received {self.fd_step}")
        if len(self.split) != 3 or min(self.split) < 0 or not np.isclose(sum(self.split), 1.0):
            raise ValueError(
                f"`split` must be three non-negative fractions summing to 1, but received {self.split}"
            )
        if not self.seeds:
            raise ValueError("`seeds` must list at least one seed")
        for name in ("substeps", "target_substeps", "total_steps", "n_trajectories", "steps", "batch_size", "eval_every"):
            _check_positive_int(getattr(self, name), name)
        _check_positive_int(self.depth, "depth", minimum=0)
        _check_positive_int(self.warmup_steps, "warmup_steps", minimum=0)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "TrainConfig":
        return _from_mapping(cls, obj)

    def to_dict(self) -> Dict[str, Any]:
        """Every setting except `threads`, which never changes results."""
        settings = asdict(self)
        del settings["threads"]
        return settings


def load_config(obj: Mapping[str, Any]) -> Tuple[TrainConfig, SdeParams]:
    """Splits a parsed config file into TrainConfig keys and an optional "sde" section."""
    obj = dict(obj)
    sde = SdeParams.from_dict(obj.pop("sde", {}))
    return TrainConfig.from_dict(obj), sde


# -----------------------
# Simulation
# -----------------------


def simulate_brownian(seed: int, steps: int, T: float, dim: int = 2) -> PiecewiseLinearPath:
    """Time-augmented Brownian path (t, W1, ..., Wdim) on a uniform grid of `steps` intervals.

    Uses numpy's PCG64 generator seeded with `seed`.
    """
    _check_positive_int(steps, "steps")
    rng = np.random.default_rng(seed)
    increments = rng.standard_normal((steps, dim)) * np.sqrt(T / steps)
    W = np.vstack([np.zeros((1, dim)), np.cumsum(increments, axis=0)])
    return time_augment(W, np.linspace(0.0, T, steps + 1))


def simulate_coupled_sde(
    params: SdeParams, seed: int
) -> Tuple[PiecewiseLinearPath, np.ndarray]:
    """Euler-Maruyama solution of the coupled oscillatory SDE.

    Returns:
        The driving path (t, W1, W2) and the states, shape (steps+1, 2).
    """
    driver = simulate_brownian(seed, params.steps, params.horizon, dim=2)
    dW = driver.increments()[:, 1:]
    dt = params.horizon / params.steps
    X = np.empty((params.steps + 1, 2))
    X[0] = params.x0
    for i in range(params.steps):
        x1, x2 = X[i]
        drift = np.array(
            [
                params.alpha * np.sin(params.omega * x2) - params.beta * x1,
                params.alpha * np.cos(params.omega * x1) - params.beta * x2,
            ]
        )
        X[i + 1] = X[i] + drift * dt + params.sigma * dW[i]
    return driver, X


# -----------------------
# Targets
# -----------------------


def ews_target_matrix(seed: int = 0) -> np.ndarray:
    """Full 3x3 operator with eigenvalues -0.5 ± 5.2i and 0.8.

    The real block form blockdiag([[-0.5, 5.2], [-5.2, -0.5]], 0.8) conjugated by the orthogonal
    factor of the QR decomposition of a seeded standard normal matrix (signs fixed by diag(R) > 0).
    """
    block = scipy.linalg.block_diag(np.array([[-0.5, 5.2], [-5.2, -0.5]]), 0.8)
    Q, R = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    return Q @ block @ Q.T


def target_operator(target: str, seed: int = 0) -> np.ndarray:
    if target == "ews":
        return ews_target_matrix(seed)
    if target == "efm":
        return np.diag([0.5, 0.3, 0.8])
    if target == "signature":
        return np.zeros((3, 3))
    raise ValueError(f"Unknown target {target!r}. Expected one of {TARGETS}")


def target_cross_term(
    path: PiecewiseLinearPath,
    A_star: Any,
    times: Union[Sequence[float], None] = None,
    M: int = 32,
) -> np.ndarray:
    """The (2,3) coefficient of the depth-2 EWS with operator A* at each knot (or at `times`).

    Raises:
        ValueError: If the path is not 3-channel or a requested time is not a knot.
    """
    if path.dim != 3:
        raise ValueError(f"Expected a time-augmented 3-channel path, but it has {path.dim} channels")
    features = ews_features(path, OperatorPair(A_star, structure="general"), 2, M)
    series = features[:, word_index((2, 3), 3)]
    if times is None:
        return series
    return series[[path.horizon_index(t) for t in times]]


# -----------------------
# Readout and scaling
# -----------------------


def fit_readout(features: Any, targets: Any, ridge: float = 1e-8) -> np.ndarray:
    """Ridge least squares by the normal equations and a Cholesky factorization.

    Raises:
        ValueError: If the number of rows differs from the number of targets.
    """
    features = _as_float_array(features, "features", ndim=2)
    targets = _as_float_array(targets, "targets", ndim=1)
    if features.shape[0] != targets.size:
        raise ValueError(
            f"features has {features.shape[0]} rows but there are {targets.size} targets"
        )
    gram = features.T @ features + ridge * np.eye(features.shape[1])
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), features.T @ targets)


@dataclass(frozen=True)
class TargetScaler:
    """Affine target scaling fit on the training split: "standard" (zero mean, unit variance) or "minmax" ([0, 1])."""

    mode: str
    offset: float
    scale: float

    @classmethod
    def fit(cls, values: Any, mode: str = "standard") -> "TargetScaler":
        values = _as_float_array(values, "values").reshape(-1)
        if mode == "standard":
            offset, scale = float(values.mean()), float(values.std())
        elif mode == "minmax":
            offset, scale = float(values.min()), float(values.max() - values.min())
        else:
            raise ValueError(f"Unknown scaler mode {mode!r}. Expected 'standard' or 'minmax'")
        return cls(mode, offset, scale if scale > 0 else 1.0)

    def transform(self, values: Any) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.offset) / self.scale

    def inverse(self, values: Any) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.offset

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "TargetScaler":
        return _from_mapping(cls, obj)


def split_indices(
    n: int, fractions: Sequence[float] = (0.7, 0.15, 0.15), seed: int = 0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, sorted train/validation/test index sets covering range(n)."""
    if len(fractions) != 3 or not np.isclose(sum(fractions), 1.0):
        raise ValueError(f"Split fractions must be three values summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return (
        np.sort(order[:n_train]),
        np.sort(order[n_train : n_train + n_val]),
        np.sort(order[n_train + n_val :]),
    )


# -----------------------
# Optimization
# -----------------------


def lr_schedule(step: int, config: TrainConfig) -> float:
    """Learning rate at a 0-based step: linear warmup, then cosine decay to the floor."""
    if step < config.warmup_steps:
        return config.base_lr * (step + 1) / config.warmup_steps
    decay_steps = max(config.total_steps - config.warmup_steps, 1)
    progress = min((step - config.warmup_steps) / decay_steps, 1.0)
    floor = config.lr_floor * config.base_lr
    return floor + (config.base_lr - floor) * 0.5 * (1.0 + cos(pi * progress))


def _central_points(params: np.ndarray, fd_step: float) -> List[np.ndarray]:
    """params + fd_step e_i for each coordinate i, then params - fd_step e_i."""
    shifts = np.eye(params.size) * fd_step
    return [params + shift for shift in shifts] + [params - shift for shift in shifts]


def _central_difference(values: np.ndarray, fd_step: float) -> np.ndarray:
    n = values.size // 2
    gradient = (values[:n] - values[n:]) / (2 * fd_step)
    logger.debug("Finite-difference gradient: %s", gradient)
    return gradient


def finite_difference_gradient(
    losses: Callable[[List[np.ndarray]], Sequence[float]],
    params: Any,
    fd_step: float = 1e-4,
) -> np.ndarray:
    """Central finite-difference gradient at `params` from a single batched evaluation.

    Args:
        losses: Maps a list of parameter vectors to their losses, in the same order.
        params: Point at which to differentiate.
        fd_step: Step for each coordinate.

    Returns:
        The gradient vector.
    """
    params = _as_float_array(params, "params", ndim=1)
    values = np.asarray(losses(_central_points(params, fd_step)), dtype=np.float64)
    return _central_difference(values, fd_step)


def _initial_params(parametrization: str, rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    if parametrization == "full":
        return rng.standard_normal(dim * dim) * scale
    if parametrization == "diagonal":
        return rng.uniform(np.log(0.1), np.log(2.0), size=dim)
    return np.zeros(0)


def learner_operator(parametrization: str, params: Any, dim: int = 3) -> OperatorPair:
    """Operator pair for a learner: full matrix, exp-reparametrized positive diagonal, or zero."""
    params = np.asarray(params, dtype=float)
    if parametrization == "full":
        return OperatorPair(params.reshape(dim, dim), structure="general")
    if parametrization == "diagonal":
        return OperatorPair.diagonal(np.exp(params))
    return OperatorPair.zero(dim)


# -----------------------
# Tasks and reports
# -----------------------


@dataclass
class Task:
    """A regression dataset: input paths, targets at every knot, and a fixed split.

    `drop` leading feature rows (for example a prepended base point) are discarded so that
    feature rows line up with `targets`.
    """

    name: str
    paths: List[PiecewiseLinearPath]
    targets: np.ndarray
    times: np.ndarray
    scaler: TargetScaler
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    drop: int = 0

    @cached_property
    def scaled_targets(self) -> np.ndarray:
        return self.scaler.transform(self.targets)


@dataclass
class SeedResult:
    seed: int
    train_rmse: float
    val_rmse: float
    test_rmse: float
    A: np.ndarray
    eigenvalues: Dict[str, Any]
    status: str = "ok"
    best_step: int = 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "status": self.status,
            "best_step": self.best_step,
            "train_rmse": self.train_rmse,
            "val_rmse": self.val_rmse,
            "test_rmse": self.test_rmse,
            "A": self.A.tolist(),
            "eigenvalues": self.eigenvalues,
        }


@dataclass
class ExperimentReport:
    """Per-seed RMSEs (in scaled target units), learned operators and their spectra."""

    task: str
    learner: str
    results: List[SeedResult]
    config: Dict[str, Any]
    runtime: float = 0.0
    target: Union[str, None] = None

    def aggregate(self) -> Dict[str, Dict[str, float]]:
        """Mean and standard deviation of each RMSE over seeds, skipping NaN."""
        out = {}
        for split in ("train_rmse", "val_rmse", "test_rmse"):
            values = np.array([getattr(r, split) for r in self.results], dtype=float)
            finite = values[np.isfinite(values)]
            out[split] = {
                "mean": float(finite.mean()) if finite.size else float("nan"),
                "std": float(finite.std()) if finite.size else float("nan"),
            }
        return out

    def to_json(self, include_runtime: bool = True) -> Dict[str, Any]:
        obj = {
            "task": self.task,
            "target": self.target,
            "learner": self.learner,
            "config": self.config,
            "seeds": [r.to_json() for r in self.results],
            "aggregate": self.aggregate(),
        }
        if include_runtime:
            obj["runtime"] = self.runtime
        return obj

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "seed": r.seed,
                    "status": r.status,
                    "train_rmse": r.train_rmse,
                    "val_rmse": r.val_rmse,
                    "test_rmse": r.test_rmse,
                    "complex_pairs": len(r.eigenvalues["complex_pairs"]),
                }
                for r in self.results
            ]
        ).set_index("seed")


def eigen_report(A: Any, tol: float = 1e-9) -> Dict[str, Any]:
    """Eigenvalues of A grouped into complex-conjugate pairs and real values.

    Returns:
        {"complex_pairs": [[re, im], ...] with im > 0, "real": [...], "summary": {...}}
    """
    eigenvalues = scipy.linalg.eigvals(np.asarray(A, dtype=float))
    scale = max(1.0, float(np.max(np.abs(eigenvalues)))) if eigenvalues.size else 1.0
    is_complex = np.abs(eigenvalues.imag) > tol * scale
    pairs = sorted(
        [[float(z.real), float(z.imag)] for z in eigenvalues[is_complex] if z.imag > 0],
        key=lambda p: (p[0], p[1]),
    )
    reals = sorted(float(z.real) for z in eigenvalues[~is_complex])
    return {
        "complex_pairs": pairs,
        "real": reals,
        "summary": {
            "n_complex_pairs": len(pairs),
            "max_real_part": float(np.max(eigenvalues.real)) if eigenvalues.size else 0.0,
            "min_real_part": float(np.min(eigenvalues.real)) if eigenvalues.size else 0.0,
            "max_frequency": max((p[1] for p in pairs), default=0.0),
        },
    }


# -----------------------
# Training
# -----------------------


def _chunks(indices: Sequence[int], size: int = PATH_CHUNK) -> List[np.ndarray]:
    indices = np.asarray(indices)
    return [indices[i : i + size] for i in range(0, len(indices), size)]


def _feature_blocks(
    task: Task, config: TrainConfig, ops: Sequence[OperatorPair], indices: Sequence[int]
) -> np.ndarray:
    """Features of the paths `indices` under each operator, shape (len(ops), len(indices), rows, D)."""
    features = batch_ews_features(
        [task.paths[i] for i in indices], ops, config.depth, config.substeps
    )
    return features[:, :, task.drop :]


def _stack(task: Task, rows: Sequence[np.ndarray], indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scaled = task.scaled_targets
    return np.vstack(rows), np.concatenate([scaled[i] for i in indices])


def _batch_losses(
    task: Task, config: TrainConfig, points: Sequence[np.ndarray], batch: np.ndarray
) -> np.ndarray:
    """Minibatch loss of each parameter vector in `points`, with all operators featurized together.

    Each loss refits its own readout. Points whose operator cannot be built, or whose
    features overflow, get an infinite loss.
    """
    losses = np.full(len(points), np.inf)
    ops, slots = [], []
    for slot, params in enumerate(points):
        try:
            ops.append(learner_operator(config.parametrization, params))
        except TRAINING_ERRORS:
            continue
        slots.append(slot)
    if not ops:
        return losses
    try:
        blocks = _feature_blocks(task, config, ops, batch)
    except TRAINING_ERRORS:
        return losses
    targets = np.concatenate([task.scaled_targets[i] for i in batch])
    for slot, block in zip(slots, blocks):
        features = block.reshape(-1, block.shape[-1])
        try:
            residual = features @ fit_readout(features, targets, config.ridge) - targets
        except TRAINING_ERRORS:
            # Overflowing operators show up as non-finite features
            continue
        loss = float(np.mean(residual**2))
        losses[slot] = loss if np.isfinite(loss) else np.inf
    return losses


def _batch_loss(task: Task, config: TrainConfig, params: np.ndarray, batch: np.ndarray) -> float:
    return float(_batch_losses(task, config, [params], batch)[0])


def _evaluate(
    task: Task, config: TrainConfig, params: np.ndarray
) -> Tuple[Dict[str, float], np.ndarray, List[np.ndarray]]:
    """Refits the readout on the whole train split; returns RMSE per split, the readout and all feature blocks.

    Paths are featurized in fixed chunks of PATH_CHUNK, so the blocks do not depend on the thread count.
    """
    op = learner_operator(config.parametrization, params)
    chunks = _parallel_map(
        lambda chunk: _feature_blocks(task, config, [op], chunk)[0],
        _chunks(range(len(task.paths))),
        config.threads,
    )
    blocks = [block for chunk in chunks for block in chunk]
    train_X, train_y = _stack(task, [blocks[i] for i in task.train], task.train)
    weights = fit_readout(train_X, train_y, config.ridge)
    rmse = {}
    for split, indices in (("train", task.train), ("val", task.val), ("test", task.test)):
        if len(indices) == 0:
            rmse[split] = float("nan")
            continue
        X, y = _stack(task, [blocks[i] for i in indices], indices)
        rmse[split] = float(np.sqrt(np.mean((X @ weights - y) ** 2)))
    return rmse, weights, blocks


def _train_seed(task: Task, config: TrainConfig, seed: int) -> Tuple[SeedResult, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 1])
    params = _initial_params(config.parametrization, rng, 3, config.init_scale)
    status = "ok"
    best = None  # (val_rmse, step, params, rmse, weights)

    def consider(step: int) -> None:
        nonlocal best
        try:
            rmse, weights, _ = _evaluate(task, config, params)
        except TRAINING_ERRORS:
            logger.info("%s/%s seed %d step %d: evaluation failed", task.name, config.parametrization, seed, step)
            return
        logger.info(
            "%s/%s seed %d step %d: train %.4e val %.4e",
            task.name,
            config.parametrization,
            seed,
            step,
            rmse["train"],
            rmse["val"],
        )
        if np.isfinite(rmse["val"]) and (best is None or rmse["val"] < best[0]):
            best = (rmse["val"], step, params.copy(), rmse, weights)

    consider(0)
    for step in range(config.total_steps if params.size else 0):
        batch = rng.choice(task.train, size=min(config.batch_size, len(task.train)), replace=False)
        # The loss and its 2n shifted points in one batched evaluation
        values = _batch_losses(
            task, config, [params] + _central_points(params, config.fd_step), batch
        )
        loss = values[0]
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            logger.debug("Batch loss %s at step %d", loss, step)
            _warning(
                f"{task.name}/{config.parametrization} seed {seed} diverged at step {step}; keeping the best checkpoint"
            )
            status = "diverged"
            break
        gradient = _central_difference(values[1:], config.fd_step)
        if not np.all(np.isfinite(gradient)):
            status = "diverged"
            break
        norm = np.linalg.norm(gradient)
        if norm > config.clip_norm:
            gradient = gradient * (config.clip_norm / norm)
        params = params - lr_schedule(step, config) * gradient
        if (step + 1) % config.eval_every == 0 or step + 1 == config.total_steps:
            consider(step + 1)

    if best is None:
        nan = float("nan")
        A = learner_operator(config.parametrization, params).A
        return (
            SeedResult(seed, nan, nan, nan, np.array(A), eigen_report(A), status, 0),
            params,
            np.zeros(0),
        )
    _, best_step, best_params, rmse, weights = best
    A = learner_operator(config.parametrization, best_params).A
    result = SeedResult(
        seed,
        rmse["train"],
        rmse["val"],
        rmse["test"],
        np.array(A),
        eigen_report(A),
        status,
        best_step,
    )
    return result, best_params, weights


def train_operator(task: Task, config: TrainConfig) -> Tuple[ExperimentReport, Dict[int, Tuple[np.ndarray, np.ndarray]]]:
    """Trains the configured learner once per seed, with seeds run in parallel.

    Returns:
        The report and, per seed, the best parameters and readout weights.
    """
    start = start_timer()
    outcomes = _parallel_map(lambda seed: _train_seed(task, config, seed), config.seeds, config.threads)
    results, checkpoints = [], {}
    for seed, (result, params, weights) in zip(config.seeds, outcomes):
        results.append(result)
        checkpoints[seed] = (params, weights)
    learner = {v: k for k, v in LEARNERS.items()}[config.parametrization]
    report = ExperimentReport(task.name, learner, results, config.to_dict(), time_elapsed(start))
    return report, checkpoints


def _predict(task: Task, config: TrainConfig, params: np.ndarray, weights: np.ndarray, index: int) -> np.ndarray:
    op = learner_operator(config.parametrization, params)
    return task.scaler.inverse(_feature_blocks(task, config, [op], [index])[0, 0] @ weights)


def _prediction_frame(
    task: Task, runs: Mapping[str, Tuple[TrainConfig, Dict[int, Tuple[np.ndarray, np.ndarray]]]]
) -> pd.DataFrame:
    """Per-time predictions on the first test trajectory, one block per seed."""
    if len(task.test) == 0:
        return pd.DataFrame(columns=["seed", "t", "truth", "pred_ews", "pred_efm", "pred_sig"])
    index = int(task.test[0])
    seeds = next(iter(runs.values()))[1].keys()
    blocks = []
    for seed in seeds:
        frame = pd.DataFrame(
            {"seed": seed, "t": task.times, "truth": task.targets[index]}
        )
        for learner, column in (("ews", "pred_ews"), ("efm", "pred_efm"), ("signature", "pred_sig")):
            if learner in runs and runs[learner][1][seed][1].size:
                config, checkpoints = runs[learner]
                params, weights = checkpoints[seed]
                frame[column] = _predict(task, config, params, weights, index)
            else:
                frame[column] = np.nan
        blocks.append(frame)
    return pd.concat(blocks, ignore_index=True)


def _trajectory_seeds(config: TrainConfig) -> List[int]:
    return [config.data_seed * 1_000_000 + i for i in range(config.n_trajectories)]


def expressivity_task(target: str, config: TrainConfig) -> Task:
    """Raw time-augmented Brownian inputs on [0, horizon]; targets scaled to unit variance on the train split.

    Targets do not depend on the learner, so they are computed once here, a chunk of paths per scan.
    """
    target_op = OperatorPair(target_operator(target, config.data_seed), structure="general")
    paths = _parallel_map(
        lambda seed: simulate_brownian(seed, config.steps, config.horizon),
        _trajectory_seeds(config),
        config.threads,
    )
    column = word_index((2, 3), 3)
    chunks = _parallel_map(
        lambda chunk: batch_ews_features(
            [paths[i] for i in chunk], [target_op], 2, config.target_substeps
        )[0, :, :, column],
        _chunks(range(len(paths))),
        config.threads,
    )
    targets = np.concatenate(chunks)
    train, val, test = split_indices(len(paths), config.split, config.data_seed)
    return Task(
        f"expressivity-{target}",
        paths,
        targets,
        paths[0].times.copy(),
        TargetScaler.fit(targets[train], "standard"),
        train,
        val,
        test,
    )


def sde_task(config: TrainConfig, params: SdeParams) -> Task:
    """Driving paths normalized to [0, 1] with train statistics and a base point prepended; target X1 min-max scaled."""
    simulated = _parallel_map(
        lambda seed: simulate_coupled_sde(params, seed), _trajectory_seeds(config), config.threads
    )
    drivers = [driver for driver, _ in simulated]
    targets = np.array([states[:, 0] for _, states in simulated])
    train, val, test = split_indices(len(drivers), config.split, config.data_seed)
    stats = NormalizationStats.fit(np.stack([drivers[i].knots for i in train]))
    paths = [
        basepoint_prepend(PiecewiseLinearPath(d.times, stats.transform(d.knots), clock_index=0))
        for d in drivers
    ]
    return Task(
        "sde",
        paths,
        targets,
        drivers[0].times.copy(),
        TargetScaler.fit(targets[train], "minmax"),
        train,
        val,
        test,
        drop=1,
    )


def run_expressivity(
    target: str, learners: Union[str, Sequence[str]], config: TrainConfig
) -> Tuple[Dict[str, ExperimentReport], pd.DataFrame]:
    """Runs one or more learners against one target class.

    Returns:
        Reports keyed by learner and the per-time predictions table.
    """
    learners = [learners] if isinstance(learners, str) else list(learners)
    for learner in learners:
        if learner not in LEARNERS:
            raise ValueError(f"Unknown learner {learner!r}. Expected one of {list(LEARNERS)}")
    task = expressivity_task(target, config)
    reports, runs = {}, {}
    for learner in learners:
        learner_config = replace(config, parametrization=LEARNERS[learner])
        report, checkpoints = train_operator(task, learner_config)
        report.target = target
        reports[learner] = report
        runs[learner] = (learner_config, checkpoints)
    return reports, _prediction_frame(task, runs)


def run_sde(
    config: TrainConfig, params: Union[SdeParams, None] = None
) -> Tuple[Dict[str, ExperimentReport], pd.DataFrame]:
    """Runs the EWS, EFM and signature learners on the coupled SDE task."""
    task = sde_task(config, params or SdeParams())
    reports, runs = {}, {}
    for learner, parametrization in LEARNERS.items():
        learner_config = replace(config, parametrization=parametrization)
        reports[learner], checkpoints = train_operator(task, learner_config)
        runs[learner] = (learner_config, checkpoints)
    return reports, _prediction_frame(task, runs)
