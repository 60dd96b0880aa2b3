import numpy as np
import pandas as pd
import pytest
from pytest_cases import parametrize_with_cases

from ews_signatures import OperatorPair, efm_signature, ews_features, scan_ews, signature
from ews_signatures.ews_engine import (
    LNCDE_MAX_DIMENSION,
    SegmentState,
    batch_ews_features,
    build_lncde_matrices,
    chen_combine,
    check_clock_compatible,
    factorial_decay_bound,
    lncde_solve,
    segment_ews,
    spectral_level_one,
    substep_deviation,
    uniqueness_holds,
)
from ews_signatures.oracles import classical_signature, relative_error, riemann_ews, rk4_ssm
from ews_signatures.path_model import PiecewiseLinearPath, time_augment
from ews_signatures.tensor_algebra import (
    TruncatedTensor,
    level_norms,
    pair,
    shuffle_product,
    total_dimension,
    word,
    word_index,
    words,
)

from .datasets import random_general_operator, random_polyline


def suffix(path, index):
    return PiecewiseLinearPath(path.times[index:], path.knots[index:], path.clock_index)


def test_depth_zero_is_the_unit(zigzag_path):
    s = scan_ews(zigzag_path, OperatorPair.identity(3), 0)
    np.testing.assert_array_equal(s.flatten(), [1.0])


def test_signature_matches_sequential_chen(zigzag_path):
    np.testing.assert_allclose(
        signature(zigzag_path, 4).flatten(),
        classical_signature(zigzag_path, 4).flatten(),
        rtol=1e-12,
        atol=1e-15,
    )


def test_single_segment_signature_is_the_tensor_exponential():
    path = time_augment([0.0, 1.0], [0.0, 1.0])
    s = signature(path, 3)
    assert s.coefficient((1, 2)) == pytest.approx(0.5)
    assert s.coefficient((2, 2, 2)) == pytest.approx(1.0 / 6.0)


def test_efm_signature_is_a_diagonal_scan(zigzag_path):
    np.testing.assert_array_equal(
        efm_signature(zigzag_path, [0.5, 0.3, 0.8], 2, 16).flatten(),
        scan_ews(zigzag_path, OperatorPair.diagonal([0.5, 0.3, 0.8]), 2, 16).flatten(),
    )


@parametrize_with_cases("op", cases=".cases_operators", prefix="operator_")
def test_streaming_scan(zigzag_path, op):
    tensors = scan_ews(zigzag_path, op, 3, 8, mode="streaming")
    assert len(tensors) == zigzag_path.n_segments + 1
    np.testing.assert_array_equal(tensors[0].flatten()[:1], [1.0])
    assert not np.any(tensors[0].flatten()[1:])
    np.testing.assert_array_equal(tensors[-1].flatten(), scan_ews(zigzag_path, op, 3, 8).flatten())


@parametrize_with_cases("op", cases=".cases_operators", prefix="operator_")
def test_features_of_a_prefix_are_a_prefix_of_features(zigzag_path, op):
    features = ews_features(zigzag_path, op, 2, 8)
    assert features.shape == (6, total_dimension(3, 2))
    np.testing.assert_allclose(
        ews_features(zigzag_path.prefix(3), op, 2, 8), features[:4], rtol=1e-12, atol=1e-15
    )


# --------------------
# Batched scans
# --------------------
@pytest.mark.parametrize(
    "ops",
    [
        [random_general_operator(0), OperatorPair.diagonal([0.5, 0.3, 0.8])],
        [OperatorPair.diagonal([0.5, 0.3, 0.8]), OperatorPair.diagonal([1.0, 2.0, 3.0])],
        [OperatorPair.zero(3)],
    ],
    ids=["mixed", "diagonal", "zero"],
)
def test_batch_features_match_single_scans(ops):
    paths = [random_polyline(seed) for seed in range(3)]
    features = batch_ews_features(paths, ops, 3, 8)
    assert features.shape == (len(ops), 3, 11, total_dimension(3, 3))
    for p, op in enumerate(ops):
        for b, path in enumerate(paths):
            np.testing.assert_allclose(features[p, b], ews_features(path, op, 3, 8), rtol=1e-10, atol=1e-12)


def test_batch_features_errors():
    op = OperatorPair.zero(3)
    with pytest.raises(ValueError, match="share"):
        batch_ews_features([random_polyline(0), random_polyline(1, segments=5)], [op], 2)
    with pytest.raises(ValueError, match="share"):
        batch_ews_features([random_polyline(0)], [op, OperatorPair.zero(2)], 2)
    with pytest.raises(ValueError, match="at least one"):
        batch_ews_features([], [op], 2)


@parametrize_with_cases("op", cases=".cases_operators", prefix="operator_")
def test_modified_chen_identity(zigzag_path, op):
    theta = zigzag_path.clock()
    full = scan_ews(zigzag_path, op, 3, 8).flatten()
    for u in range(1, zigzag_path.n_segments):
        left = SegmentState(theta[u] - theta[0], scan_ews(zigzag_path.prefix(u), op, 3, 8))
        right = SegmentState(theta[-1] - theta[u], scan_ews(suffix(zigzag_path, u), op, 3, 8))
        combined = chen_combine(left, right, op.A).tensor.flatten()
        assert relative_error(combined, full) < 1e-10


def test_chen_combine_is_associative():
    op = random_general_operator(11)
    rng = np.random.default_rng(11)
    a, b, c = (
        segment_ews(op, float(rng.uniform(0.1, 1.0)), rng.standard_normal(3), 3, 8)
        for _ in range(3)
    )
    left = chen_combine(chen_combine(a, b, op.A), c, op.A)
    right = chen_combine(a, chen_combine(b, c, op.A), op.A)
    assert left.dtheta == pytest.approx(right.dtheta)
    assert relative_error(left.tensor.flatten(), right.tensor.flatten()) < 1e-10


def test_chen_combine_checks_shapes():
    op = OperatorPair.identity(2)
    a = segment_ews(op, 0.5, [1.0, 1.0], 2, 4)
    b = segment_ews(op, 0.5, [1.0, 1.0], 3, 4)
    with pytest.raises(ValueError, match="Cannot combine states"):
        chen_combine(a, b, op.A)
    with pytest.raises(ValueError, match="A has dimension 3"):
        chen_combine(a, a, np.eye(3))


def test_segment_state_needs_a_unit_level_zero():
    with pytest.raises(ValueError, match="Level 0"):
        SegmentState(1.0, TruncatedTensor(2, 0, (np.array([2.0]),)))
    assert SegmentState.identity(2, 2).dtheta == 0.0


def test_segment_ews_checks_increment_size():
    with pytest.raises(ValueError, match="dX has 3 entries"):
        segment_ews(OperatorPair.identity(2), 1.0, [1.0, 2.0, 3.0], 2)


def test_group_like_shuffle_identity():
    path = random_polyline(5, channels=1, segments=6)
    S = scan_ews(path, random_general_operator(5, dim=2), 4, 16)
    candidates = [w for w in words(2, 3) if w]
    for u in candidates:
        for v in candidates:
            if len(u) + len(v) > 4:
                continue
            lhs = pair(shuffle_product(word(u, 2), word(v, 2)), S)
            rhs = S.coefficient(u) * S.coefficient(v)
            assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


@parametrize_with_cases("op", cases=".cases_operators", prefix="operator_")
def test_level_one_is_exact_for_any_substeps(zigzag_path, op):
    coarse = scan_ews(zigzag_path, op, 2, 1)
    fine = scan_ews(zigzag_path, op, 1, 64)
    np.testing.assert_allclose(coarse.levels[1], fine.levels[1], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_level_one_matches_the_spectral_reading(seed):
    path = random_polyline(seed)
    op = random_general_operator(seed)
    np.testing.assert_allclose(
        scan_ews(path, op, 1).levels[1], spectral_level_one(path, op), rtol=1e-9, atol=1e-12
    )


def test_spectral_reading_rejects_defective_operators(zigzag_path):
    jordan = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ValueError, match="diagonalisable"):
        spectral_level_one(zigzag_path, OperatorPair(jordan))


def test_efm_signature_of_a_long_segment_is_finite():
    path = PiecewiseLinearPath(np.array([0.0, 1000.0]), np.array([[0.0], [2.0]]))
    sig = efm_signature(path, [1.0], 2, 8)
    assert np.all(np.isfinite(sig.flatten()))
    np.testing.assert_allclose(sig.levels[1], [2.0 / 1000.0], rtol=1e-12)


def test_general_operator_over_a_long_segment():
    A = np.array([[1.0, 0.5], [0.0, 2.0]])
    op = OperatorPair(A, structure="general")
    path = PiecewiseLinearPath(np.array([0.0, 1000.0]), np.array([[0.0, 0.0], [1.0, 1.0]]))
    ews = scan_ews(path, op, 2, 8)
    assert np.all(np.isfinite(ews.flatten()))
    expected = np.linalg.solve(A, [1.0, 1.0]) / 1000.0
    np.testing.assert_allclose(ews.levels[1], expected, rtol=1e-9)
    np.testing.assert_allclose(spectral_level_one(path, op), expected, rtol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_scan_matches_nested_riemann_sums(seed):
    path = random_polyline(seed)
    op = random_general_operator(seed + 100)
    scanned = scan_ews(path, op, 2, 64).flatten()
    assert relative_error(scanned, riemann_ews(path, op, 2, 20_000).flatten()) < 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_scan_matches_linear_cde(seed):
    path = random_polyline(seed)
    op = random_general_operator(seed + 200)
    scanned = scan_ews(path, op, 2, 128)
    solved = lncde_solve(path, op, 2)
    assert relative_error(scanned.levels[1], solved.levels[1]) < 1e-10
    assert relative_error(scanned.levels[2], solved.levels[2]) < 1e-4


def test_linear_cde_of_zero_operator_is_the_signature(zigzag_path):
    np.testing.assert_allclose(
        lncde_solve(zigzag_path, OperatorPair.zero(3), 3).flatten(),
        signature(zigzag_path, 3).flatten(),
        rtol=1e-10,
        atol=1e-13,
    )


def test_substep_refinement_converges_quadratically():
    path = random_polyline(8)
    op = random_general_operator(8)
    ratio = substep_deviation(path, op, 2, 16) / substep_deviation(path, op, 2, 32)
    assert ratio > 3.0


def test_substep_deviation_vanishes_without_weighting(zigzag_path):
    assert substep_deviation(zigzag_path, OperatorPair.zero(3), 3, 4) == 0.0


def test_scan_uses_the_substeps_option(zigzag_path):
    op = random_general_operator(2)
    with pd.option_context("ews.substeps", 5):
        from_option = scan_ews(zigzag_path, op, 2).flatten()
    np.testing.assert_array_equal(from_option, scan_ews(zigzag_path, op, 2, 5).flatten())


def test_scan_errors(zigzag_path):
    with pytest.raises(ValueError, match="Unknown scan mode"):
        scan_ews(zigzag_path, OperatorPair.zero(3), 2, mode="partial")
    with pytest.raises(ValueError, match="no segments"):
        scan_ews(zigzag_path.prefix(0), OperatorPair.zero(3), 2)
    with pytest.raises(ValueError, match="expects 2 input channels"):
        scan_ews(zigzag_path, OperatorPair.zero(2), 2)


@pytest.mark.parametrize("seed", range(5))
def test_depth_one_of_the_integral_path_is_the_state_space_model(seed):
    rng = np.random.default_rng(seed)
    w = int(rng.integers(1, 4))
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.2, 8))])
    inputs = rng.standard_normal((8, w))
    knots = np.vstack([np.zeros((1, w)), np.cumsum(inputs * np.diff(times)[:, None], axis=0)])
    op = random_general_operator(seed, dim=w)
    features = ews_features(PiecewiseLinearPath(times, knots), op, 1)
    np.testing.assert_allclose(features[:, 1:], rk4_ssm(op.A, times, inputs), atol=1e-6)


@parametrize_with_cases("op", cases=".cases_operators", prefix="operator_")
def test_factorial_decay(zigzag_path, op):
    norms = level_norms(scan_ews(zigzag_path, op, 4, 8))
    bound = factorial_decay_bound(zigzag_path, op, 4)
    assert np.all(norms <= bound * (1 + 1e-9))


def test_lncde_matrices():
    A = np.array([[0.5, 0.0], [1.0, 2.0]])
    matrices = build_lncde_matrices(A, 2, 2)
    assert matrices.L.shape == (7, 7)
    np.testing.assert_array_equal(matrices.L[1:3, 1:3], A)
    np.testing.assert_array_equal(matrices.M[0], -matrices.L + matrices.rho[0])
    np.testing.assert_array_equal(matrices.M[1], matrices.rho[1])
    assert matrices.rho[0][word_index((1,), 2), 0] == 1.0
    assert matrices.rho[1][word_index((1, 2), 2), word_index((1,), 2)] == 1.0
    with pytest.raises(ValueError, match="must be 3 x 3"):
        build_lncde_matrices(A, 3, 2)


def test_lncde_guard(zigzag_path):
    big = PiecewiseLinearPath(zigzag_path.times, np.tile(zigzag_path.knots, (1, 3))[:, :8])
    assert total_dimension(8, 4) > LNCDE_MAX_DIMENSION
    with pytest.raises(ValueError, match="dense-solve guard"):
        lncde_solve(big, OperatorPair.identity(8), 4)


@pytest.mark.parametrize(
    "A, compatible, alpha",
    [
        (np.array([[0.5, 0.0], [1.0, 2.0]]), True, 0.5),
        (np.array([[0.5, 1.0], [0.0, 2.0]]), False, None),
        (np.zeros((2, 2)), True, 0.0),
    ],
)
def test_clock_compatibility(A, compatible, alpha):
    assert check_clock_compatible(A) == {"compatible": compatible, "alpha": alpha}
    assert uniqueness_holds(A) == compatible


def test_clock_compatibility_checks_index():
    with pytest.raises(ValueError, match="clock_index 2"):
        check_clock_compatible(np.eye(2), clock_index=2)
