import json
import pathlib
from tempfile import TemporaryDirectory

import pytest

from exactwkb import cli
from exactwkb.settings import DEFAULT_TOLERANCES, resolve_tolerances


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_config_prints_defaults(capsys):
    code, out, _ = run(capsys, "config")
    assert code == cli.EXIT_OK
    assert json.loads(out)["ode_rtol"] == DEFAULT_TOLERANCES.ode_rtol


def test_overrides_and_environment(capsys, monkeypatch):
    monkeypatch.setenv("EXACTWKB_SCAN_POINTS", "32")
    code, out, _ = run(capsys, "config", "--tol", "ode_rtol=1e-8")
    assert code == cli.EXIT_OK
    resolved = json.loads(out)
    assert resolved["ode_rtol"] == 1e-8
    assert resolved["scan_points"] == 32


def test_config_writes_run_file(capsys):
    with TemporaryDirectory() as folder:
        path = pathlib.Path(folder) / "run.ini"
        code, out, _ = run(
            capsys, "config", "--tol", "fan_size=12", "--output", str(path)
        )
        assert code == cli.EXIT_OK
        assert out == ""
        resolved = resolve_tolerances(path)
    assert resolved == DEFAULT_TOLERANCES.replace(fan_size=12)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["quantize"],
        ["quantize", "--window", "0,-1"],
        ["quantize", "--window", "-1,0", "--mode", "guess"],
        ["config", "--output", "run.json"],
        ["config", "--tol", "no_such_key=1"],
        ["config", "--tol", "ode_rtol=tiny"],
        ["quantize", "--window", "-1,0", "--output", "levels.svg"],
        ["quantize", "--window", "-1,0", "--format", "csv"],
        ["graph", "--E", "0.1", "--output", "graph.png"],
        ["scatter", "--E", "0.05+0.01j"],
        ["coulomb", "--levels", "0"],
    ],
    ids=lambda argv: " ".join(argv) or "empty",
)
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == cli.EXIT_USAGE
    assert out == ""
    assert err


def test_negative_values_follow_their_flags():
    args = cli.build_parser().parse_args(
        cli._join_signed(["quantize", "--window", "-1,0", "--hbar", "0.5"])
    )
    assert args.window == (-1.0, 0.0)
    args = cli.build_parser().parse_args(
        cli._join_signed(["graph", "--E", "-0.5", "--no-langer"])
    )
    assert args.E == -0.5
    assert args.langer is False


def test_solver_failure_is_reported_as_json(capsys):
    code, out, _ = run(capsys, "scatter", "--E", "0.12", "--hbar", "0.1")
    assert code == cli.EXIT_SOLVER
    record = json.loads(out)
    assert record["error"] == "GraphDegenerate"
    assert record["command"] == "scatter"
    assert "barrier" in record["message"]


def test_bad_potential_is_a_solver_failure(capsys):
    code, out, _ = run(
        capsys, "quantize", "--potential", "nowhere", "--window", "-1,0"
    )
    assert code == cli.EXIT_SOLVER
    assert json.loads(out)["error"] == "NonRationalInput"


def test_empty_quantize_window(capsys):
    code, out, _ = run(capsys, "quantize", "--window", "0.1,0.5")
    assert code == cli.EXIT_OK
    record = json.loads(out)
    assert record["problem"] == "quantize"
    assert record["value"] == []
    assert record["provenance"] == {"count": 0}
    assert record["params"]["window"] == [0.1, 0.5]


def test_coulomb_levels(capsys):
    code, out, _ = run(
        capsys, "coulomb", "--alpha", "2", "--hbar", "1", "--verify"
    )
    assert code == cli.EXIT_OK
    record = json.loads(out)
    energies = [level["energy"][0] for level in record["value"]]
    assert energies == pytest.approx([-1.0, -0.25, -1.0 / 9.0], rel=1e-9)
    assert all(check["difference"] < 1e-9 for check in record["verify"])
    assert record["method"] == "exact-condition"


def test_coulomb_levels_to_json_file(capsys):
    with TemporaryDirectory() as folder:
        path = pathlib.Path(folder) / "levels.json"
        code, out, _ = run(
            capsys, "coulomb", "--levels", "1", "--output", str(path)
        )
        assert code == cli.EXIT_OK
        assert out == ""
        record = json.loads(path.read_text())
    assert record["value"][0]["provenance"]["n"] == 1


@pytest.mark.slow
def test_graph_svg_is_reproducible(capsys):
    argv = ["graph", "--E", "-0.5", "--hbar", "0.5"]
    with TemporaryDirectory() as folder:
        first = pathlib.Path(folder) / "first.svg"
        second = pathlib.Path(folder) / "second.svg"
        assert run(capsys, *argv, "--output", str(first))[0] == cli.EXIT_OK
        assert run(capsys, *argv, "--output", str(second))[0] == cli.EXIT_OK
        text = first.read_text()
        assert "<svg" in text
        assert text == second.read_text()


@pytest.mark.slow
def test_graph_csv(capsys):
    with TemporaryDirectory() as folder:
        path = pathlib.Path(folder) / "graph.csv"
        code, _, _ = run(
            capsys, "graph", "--E", "-0.5", "--hbar", "0.5", "--output",
            str(path),
        )
        assert code == cli.EXIT_OK
        header = path.read_text().splitlines()[0]
    assert header == "line,x_re,x_im,W_re,W_im"


@pytest.mark.slow
def test_quantize_with_verification(capsys):
    code, out, _ = run(
        capsys, "quantize", "--window", "-1,0", "--hbar", "0.5", "--verify"
    )
    assert code == cli.EXIT_OK
    record = json.loads(out)
    assert record["value"]
    assert all(c["difference"] < 1e-6 for c in record["verify"]["comparison"])
