import numpy as np
import pytest

from ews_signatures.oracles import (
    brute_force_shuffles,
    classical_signature,
    iterated_integral_riemann,
    pinv_least_squares,
    relative_error,
    rk4,
    taylor_expm,
)
from ews_signatures.path_model import PiecewiseLinearPath


def test_taylor_expm_of_diagonal():
    np.testing.assert_allclose(taylor_expm(np.diag([1.0, -2.0, 3.0])), np.diag(np.exp([1.0, -2.0, 3.0])), rtol=1e-14)


def test_brute_force_shuffles():
    assert brute_force_shuffles((1, 2), (3,)) == {(1, 2, 3): 1, (1, 3, 2): 1, (3, 1, 2): 1}


def test_iterated_integral_of_linear_paths_is_exact():
    t = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(iterated_integral_riemann(t, t), t**2 / 2, atol=1e-15)


def test_rk4_on_exponential_decay():
    states = rk4(lambda t, y: -y, [1.0], [0.0, 0.5, 1.0], substeps=50)
    np.testing.assert_allclose(states[:, 0], np.exp([0.0, -0.5, -1.0]), rtol=1e-10)


def test_classical_signature_of_two_chords():
    v1, v2 = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    path = PiecewiseLinearPath(np.array([0.0, 1.0, 2.0]), np.array([[0.0, 0.0], v1, v1 + v2]))
    sig = classical_signature(path, 3)
    np.testing.assert_allclose(sig.levels[1], v1 + v2, rtol=1e-15)
    np.testing.assert_allclose(
        sig.levels[2], np.outer(v1, v1) / 2 + np.outer(v1, v2) + np.outer(v2, v2) / 2, rtol=1e-14
    )

    def third(a, b, c):
        return np.einsum("i,j,k->ijk", a, b, c)

    expected = (
        third(v1, v1, v1) / 6 + third(v1, v1, v2) / 2 + third(v1, v2, v2) / 2 + third(v2, v2, v2) / 6
    )
    np.testing.assert_allclose(sig.levels[3], expected, rtol=1e-14, atol=1e-15)


def test_pinv_least_squares():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    np.testing.assert_allclose(pinv_least_squares(X, X @ [3.0, -1.0]), [3.0, -1.0])


@pytest.mark.parametrize(
    "value, reference, expected",
    [([1.0, 2.0], [1.0, 4.0], 0.5), ([0.5], [0.0], 0.5), ([1.0], [1.0], 0.0)],
)
def test_relative_error(value, reference, expected):
    assert relative_error(value, reference) == expected
