import threading

import numpy as np
import pandas as pd
import pytest

from ews_signatures.utils import (
    _as_float_array,
    _as_square_matrix,
    _check_positive_int,
    _format_float,
    _matmul,
    _matvec,
    _parallel_map,
    _read_json,
    _resolve_threads,
    _sha256,
    _to_json_text,
    _word_label,
    _write_csv,
    _write_json,
)


@pytest.mark.parametrize(
    "value, expected",
    [
        (0.1, "0.10000000000000001"),
        (1.0, "1"),
        (float("nan"), "NaN"),
        (float("inf"), "Infinity"),
        (float("-inf"), "-Infinity"),
    ],
)
def test_format_float(value, expected):
    assert _format_float(value) == expected


def test_format_float_digits_option():
    with pd.option_context("ews.float_digits", 3):
        assert _format_float(1.0 / 3.0) == "0.333"
    assert _format_float(1.0 / 3.0, digits=2) == "0.33"


def test_to_json_text():
    assert _to_json_text({"a": [1.0, 2]}) == '{\n  "a": [1, 2]\n}'
    assert _to_json_text({"b": None, "c": True, "d": "x"}) == '{\n  "b": null,\n  "c": true,\n  "d": "x"\n}'
    assert _to_json_text(np.array([[0.5], [0.25]])) == "[\n  [0.5],\n  [0.25]\n]"
    assert _to_json_text({}) == "{}"
    assert _to_json_text([]) == "[]"
    assert _to_json_text(complex(1.0, -2.0)) == "[1, -2]"
    with pytest.raises(TypeError, match="Cannot serialize"):
        _to_json_text({"s": {1, 2}})


def test_json_round_trip_keeps_every_bit(tmp_path):
    values = np.random.default_rng(0).standard_normal(20).tolist()
    file = _write_json({"values": values}, tmp_path / "values.json")
    assert _read_json(file)["values"] == values


def test_write_csv(tmp_path):
    file = _write_csv(pd.DataFrame({"t": [0.0, 0.1], "x": [1.0 / 3.0, 2.0]}), tmp_path / "x.csv")
    assert file.read_text().splitlines() == ["t,x", "0,0.33333333333333331", "0.10000000000000001,2"]


def test_sha256(tmp_path):
    file = tmp_path / "abc.txt"
    file.write_bytes(b"abc")
    assert _sha256(file) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_parallel_map_preserves_order():
    assert _parallel_map(lambda x: x * x, range(20), threads=4) == [x * x for x in range(20)]
    assert _parallel_map(lambda x: x, [], threads=4) == []


def test_parallel_map_single_thread_stays_on_caller():
    caller = threading.get_ident()
    assert _parallel_map(lambda _: threading.get_ident(), range(3), threads=1) == [caller] * 3


def test_resolve_threads():
    assert _resolve_threads(3) == 3
    with pd.option_context("ews.threads", 2):
        assert _resolve_threads() == 2
        assert _resolve_threads(0) == 2
    assert _resolve_threads() >= 1


def test_as_float_array():
    np.testing.assert_array_equal(_as_float_array([1, 2], "x"), [1.0, 2.0])
    with pytest.raises(TypeError, match="Expected numeric values for `x`"):
        _as_float_array(["a"], "x")
    with pytest.raises(ValueError, match="with 2 dimension"):
        _as_float_array([1.0], "x", ndim=2)
    with pytest.raises(ValueError, match="non-finite"):
        _as_float_array([np.inf], "x")


def test_as_square_matrix():
    with pytest.raises(ValueError, match="must be square"):
        _as_square_matrix(np.ones((2, 3)), "A")


@pytest.mark.parametrize(
    "value, minimum, error",
    [(0, 1, ValueError), (-1, 0, ValueError), (1.5, 1, TypeError), (True, 0, TypeError)],
)
def test_check_positive_int(value, minimum, error):
    with pytest.raises(error):
        _check_positive_int(value, "n", minimum)
    assert _check_positive_int(np.int64(3), "n") == 3


def test_batched_products_match_numpy(rng):
    a = rng.standard_normal((5, 3, 4))
    b = rng.standard_normal((5, 4, 2))
    v = rng.standard_normal((5, 4))
    np.testing.assert_allclose(_matmul(a, b), a @ b, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(_matvec(a, v), np.einsum("bij,bj->bi", a, v), rtol=1e-13, atol=1e-14)


def test_batched_product_does_not_depend_on_batch_size(rng):
    a = rng.standard_normal((6, 3, 3))
    b = rng.standard_normal((6, 3, 3))
    np.testing.assert_array_equal(_matmul(a, b)[2], _matmul(a[2], b[2]))


@pytest.mark.parametrize("word, expected", [((), "()"), ((1,), "(1)"), ((1, 2, 3), "(1,2,3)")])
def test_word_label(word, expected):
    assert _word_label(word) == expected
