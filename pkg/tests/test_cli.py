import inspect
import json

import numpy as np
import pandas as pd
import pytest

from ews_signatures import OperatorPair, cli, ingest_csv, scan_ews
from ews_signatures.cli import build_parser, main
from ews_signatures.ews_engine import build_lncde_matrices
from ews_signatures.flow_ops import derivation_block
from ews_signatures.utils import _sha256

ZIGZAG = "tests/data/zigzag.csv"


def read_json(path):
    with open(path) as f:
        return json.load(f)


def manifest_of(path):
    return read_json(path.with_name(path.name + ".manifest.json"))


# --------------------
# compute
# --------------------
def test_compute_signature(tmp_path):
    out = tmp_path / "sig.json"
    assert main(["compute", "--input", ZIGZAG, "--depth", "2", "--signature", "--out", str(out)]) == 0
    result = read_json(out)
    expected = scan_ews(ingest_csv(ZIGZAG), OperatorPair.zero(3), 2)
    assert (result["dim"], result["depth"]) == (3, 2)
    np.testing.assert_array_equal(np.concatenate(result["levels"]), expected.flatten())


def test_compute_writes_a_manifest(tmp_path):
    out = tmp_path / "sig.json"
    argv = ["compute", "--input", ZIGZAG, "--depth", "2", "--signature", "--out", str(out)]
    main(argv)
    manifest = manifest_of(out)
    assert set(manifest) == {"command", "config", "seeds", "version", "runtime", "outputs"}
    assert manifest["command"] == argv
    assert manifest["outputs"] == {"sig.json": _sha256(out)}
    assert manifest["config"]["substeps"] == 32
    assert manifest["config"]["operator"]["structure"] == "zero"


def test_compute_efm(tmp_path):
    out = tmp_path / "efm.json"
    assert main(
        ["compute", "--input", ZIGZAG, "--depth", "2", "--efm", "0.5,0.3,0.8", "--substeps", "4", "--out", str(out)]
    ) == 0
    expected = scan_ews(ingest_csv(ZIGZAG), OperatorPair.diagonal([0.5, 0.3, 0.8]), 2, 4)
    np.testing.assert_array_equal(np.concatenate(read_json(out)["levels"]), expected.flatten())


def test_compute_with_operator_file(tmp_path):
    out = tmp_path / "ews.json"
    assert main(
        ["compute", "--input", ZIGZAG, "--depth", "3", "--operator", "tests/data/operator.json", "--out", str(out)]
    ) == 0
    assert manifest_of(out)["config"]["operator"]["structure"] == "clock_compatible"
    assert len(np.concatenate(read_json(out)["levels"])) == 40


def test_compute_stream(tmp_path):
    out = tmp_path / "stream.json"
    assert main(
        ["compute", "--input", ZIGZAG, "--depth", "1", "--signature", "--stream", "--out", str(out)]
    ) == 0
    result = read_json(out)
    assert result["labels"] == ["()", "(1)", "(2)", "(3)"]
    assert len(result["rows"]) == len(result["times"]) == 6
    assert result["rows"][0] == [1.0, 0.0, 0.0, 0.0]


def test_compute_check_convergence(tmp_path, capsys):
    out = tmp_path / "ews.json"
    assert main(
        [
            "compute",
            "--input",
            ZIGZAG,
            "--depth",
            "2",
            "--operator",
            "tests/data/operator.json",
            "--substeps",
            "8",
            "--check-convergence",
            "--out",
            str(out),
        ]
    ) == 0
    convergence = read_json(out)["convergence"]
    assert (convergence["substeps"], convergence["doubled"]) == (8, 16)
    assert 0.0 < convergence["max_relative_deviation"] < 0.1
    assert "M=8 vs 16" in capsys.readouterr().out


def test_compute_missing_input(tmp_path, capsys):
    out = tmp_path / "sig.json"
    code = main(["compute", "--input", str(tmp_path / "missing.csv"), "--depth", "2", "--signature", "--out", str(out)])
    assert code == 1
    assert capsys.readouterr().err.startswith("ews: error:")
    assert not out.exists()


def test_compute_bad_csv(tmp_path, capsys):
    file = tmp_path / "bad.csv"
    file.write_text("t,x\n0,1\n0,2\n")
    code = main(["compute", "--input", str(file), "--depth", "2", "--signature", "--out", str(tmp_path / "o.json")])
    assert code == 1
    assert "Row 2 (line 3)" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["compute", "--input", ZIGZAG, "--depth", "-1", "--signature", "--out", "x.json"],
        ["compute", "--input", ZIGZAG, "--depth", "2", "--signature", "--efm", "1,1,1", "--out", "x.json"],
        ["compute", "--input", ZIGZAG, "--depth", "2", "--out", "x.json"],
        ["compute", "--input", ZIGZAG, "--depth", "2", "--efm", "a,b", "--out", "x.json"],
        ["compute", "--input", ZIGZAG, "--depth", "2", "--signature", "--substeps", "0", "--out", "x.json"],
        ["selftest", "--suite", "everything"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_with_2(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == 2


# --------------------
# dump-derivation and dump-lncde
# --------------------
def test_dump_derivation(tmp_path):
    out = tmp_path / "L2.json"
    assert main(["dump-derivation", "--dim", "2", "--depth", "2", "--A", "1,2,3,4", "--out", str(out)]) == 0
    result = read_json(out)
    expected = derivation_block(np.array([[1.0, 2.0], [3.0, 4.0]]), 2)
    assert (result["rows"], result["cols"]) == (4, 4)
    np.testing.assert_array_equal(result["data"], expected.reshape(-1))


def test_dump_derivation_checks_entry_count(tmp_path, capsys):
    code = main(["dump-derivation", "--dim", "2", "--depth", "2", "--A", "1,2,3", "--out", str(tmp_path / "L.json")])
    assert code == 1
    assert "--A needs 4 entries" in capsys.readouterr().err


def test_dump_lncde(tmp_path):
    out = tmp_path / "lncde.json"
    assert main(["dump-lncde", "--dim", "2", "--depth", "2", "--A", "0.5,0,1,2", "--out", str(out)]) == 0
    result = read_json(out)
    matrices = build_lncde_matrices(np.array([[0.5, 0.0], [1.0, 2.0]]), 2, 2)
    assert result["L"]["rows"] == 7
    np.testing.assert_array_equal(result["L"]["data"], matrices.L.reshape(-1))
    assert len(result["rho"]) == len(result["M"]) == 2
    assert [block["rows"] for block in result["L_blocks"]] == [1, 2, 4]


# --------------------
# duffing
# --------------------
def test_duffing_chain_table(tmp_path):
    out = tmp_path / "chain.csv"
    assert main(["duffing", "--input", "tests/data/scalar.csv", "--lambda-x", "0.8", "--K", "2", "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert list(table.columns) == ["t", "S_x_0", "S_x_1", "S_x_2", "approx", "truth", "bound"]
    assert len(table) == 9
    assert manifest_of(out)["outputs"] == {"chain.csv": _sha256(out)}


@pytest.mark.parametrize(
    "argv",
    [
        ["duffing", "--input", ZIGZAG, "--out", "chain.csv"],
        ["duffing", "--K", "2"],
    ],
)
def test_duffing_errors(argv, capsys):
    assert main(argv) == 1
    assert "ews: error:" in capsys.readouterr().err


# --------------------
# selftest
# --------------------
def test_selftest(capsys):
    assert main(["selftest", "--suite", "chen", "--suite", "quadrature"]) == 0
    out = capsys.readouterr().out
    assert "chen" in out
    assert "quadrature" in out


# --------------------
# experiment
# --------------------
def run_experiment(tmp_path, threads, name):
    out = tmp_path / name
    argv = [
        "--threads",
        str(threads),
        "experiment",
        "expressivity",
        "--target",
        "efm",
        "--learner",
        "efm",
        "--config",
        "tests/data/tiny_config.json",
        "--out",
        str(out),
    ]
    assert main(argv) == 0
    return out


def test_experiment_is_reproducible_across_threads(tmp_path):
    one = run_experiment(tmp_path, 1, "one.json")
    two = run_experiment(tmp_path, 2, "two.json")
    assert one.read_bytes() == two.read_bytes()
    assert (tmp_path / "one.predictions.csv").read_bytes() == (tmp_path / "two.predictions.csv").read_bytes()


def test_experiment_outputs(tmp_path):
    out = run_experiment(tmp_path, 1, "expressivity.json")
    result = read_json(out)
    assert result["task"] == "expressivity"
    assert result["target"] == "efm"
    assert list(result["reports"]) == ["efm"]
    assert "runtime" not in result["reports"]["efm"]
    assert "threads" not in result["reports"]["efm"]["config"]
    manifest = manifest_of(out)
    assert manifest["seeds"] == [0]
    assert set(manifest["outputs"]) == {"expressivity.json", "expressivity.predictions.csv"}


# --------------------
# Global flags
# --------------------
def test_quiet(tmp_path, capsys):
    out = tmp_path / "ews.json"
    main(
        [
            "--quiet",
            "compute",
            "--input",
            ZIGZAG,
            "--depth",
            "2",
            "--efm",
            "0.5,0.3,0.8",
            "--check-convergence",
            "--out",
            str(out),
        ]
    )
    assert capsys.readouterr().out == ""
    assert pd.get_option("ews.verbose")


def test_parser_defaults():
    args = build_parser().parse_args(["duffing", "--demo"])
    assert (args.threads, args.quiet, args.lambda_x, args.K) == (0, False, 0.5, 4)


def test_every_command_helper_has_a_docstring():
    functions = [
        obj for obj in vars(cli).values() if inspect.isfunction(obj) and obj.__module__ == cli.__name__
    ]
    assert len(functions) > 10
    assert [function.__name__ for function in functions if not inspect.getdoc(function)] == []
