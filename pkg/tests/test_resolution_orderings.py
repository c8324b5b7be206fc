import pathlib
from functools import reduce
from tempfile import TemporaryDirectory

import pytest
from hypothesis import HealthCheck, given, note, settings
from hypothesis import strategies as st

from exactwkb import parse
from exactwkb.settings import (
    DEFAULT_TOLERANCES,
    TOLERANCES,
    InvalidSetting,
    resolve_tolerances,
)

from . import strategies as x_st


def _load(monkeypatch, ordering, configurations, folder):
    filepath = pathlib.Path(folder) / "run.ini"
    overrides = []
    for source, conf in zip(ordering, configurations):
        if source.name == "ENV":
            x_st.write_env_configuration(monkeypatch, conf)
        elif source.name == "CLI":
            overrides = x_st.cli_overrides(conf)
        elif source.name == "CFG":
            with open(filepath, "w+") as fout:
                note(
                    x_st.write_ini_configuration(
                        fout, parse.DEFAULT_SECTION, conf
                    )
                )
    has_file = any(source.name == "CFG" for source in ordering)
    return (filepath if has_file else None), overrides


@settings(
    suppress_health_check=[HealthCheck.function_scoped_fixture],
    max_examples=200,
)
@given(x_st.resolutions(), st.data())
def test_orderings(monkeypatch, ordering, data):
    configurations = data.draw(
        st.lists(
            x_st.tolerance_overrides(),
            min_size=len(ordering),
            max_size=len(ordering),
        )
    )
    with TemporaryDirectory() as folder, monkeypatch.context() as m:
        path, overrides = _load(m, ordering, configurations, folder)

        # the highest-precedence source is listed first
        order = reduce(lambda lhs, rhs: lhs > rhs, ordering)
        reference = {}
        for conf in reversed(configurations):
            reference.update(conf)

        tol = resolve_tolerances(path, order=order, cli_overrides=overrides)
        note(f"Order: {order!r}")
        for key, value in reference.items():
            assert getattr(tol, key) == value


@settings(
    suppress_health_check=[HealthCheck.function_scoped_fixture],
    max_examples=200,
)
@given(x_st.resolutions(), st.data())
def test_orderings_lt(monkeypatch, ordering, data):
    configurations = data.draw(
        st.lists(
            x_st.tolerance_overrides(),
            min_size=len(ordering),
            max_size=len(ordering),
        )
    )
    with TemporaryDirectory() as folder, monkeypatch.context() as m:
        path, overrides = _load(m, ordering, configurations, folder)

        # the highest-precedence source is listed last
        order = reduce(lambda lhs, rhs: lhs < rhs, ordering)
        reference = {}
        for conf in configurations:
            reference.update(conf)

        tol = resolve_tolerances(path, order=order, cli_overrides=overrides)
        note(f"Order: {order!r}")
        for key, value in reference.items():
            assert getattr(tol, key) == value


def test_default_order_lists_every_source():
    assert TOLERANCES.order.interpreter_order == [
        parse.CLI,
        parse.CFG,
        parse.ENV,
    ]


def test_grouped_orderings_agree():
    left = (parse.CLI > parse.CFG) > parse.ENV
    right = parse.CLI > (parse.CFG > parse.ENV)
    chained = parse.ResolutionDefinition.chain(parse.CLI, parse.CFG, parse.ENV)
    expected = [parse.CLI, parse.CFG, parse.ENV]
    assert left.interpreter_order == expected
    assert right.interpreter_order == expected
    assert chained.interpreter_order == expected
    assert (parse.ENV < (parse.CFG < parse.CLI)).interpreter_order == expected


def test_repeated_source_rejected():
    with pytest.raises(parse.InvalidOrdering):
        (parse.ENV > parse.CFG) > parse.ENV
    with pytest.raises(parse.InvalidOrdering):
        parse.ResolutionDefinition.chain(parse.CLI, parse.CLI)


def test_cli_override_beats_file_and_environment(monkeypatch):
    monkeypatch.setenv("EXACTWKB_ODE_RTOL", "1e-6")
    with TemporaryDirectory() as folder:
        filepath = pathlib.Path(folder) / "run.ini"
        with open(filepath, "w+") as fout:
            x_st.write_ini_configuration(
                fout, "tolerances", {"ode_rtol": 1e-8}
            )
        tol = resolve_tolerances(filepath, cli_overrides=["ode_rtol=1e-10"])
    assert tol.ode_rtol == 1e-10


def test_default_order_prefers_cli_over_file_over_env(monkeypatch):
    with TemporaryDirectory() as folder:
        filepath = pathlib.Path(folder) / "run.ini"
        with open(filepath, "w+") as fout:
            x_st.write_ini_configuration(
                fout,
                "tolerances",
                {"ode_rtol": 1e-7, "fan_size": 12, "scan_points": 10},
            )
        monkeypatch.setenv("EXACTWKB_ODE_RTOL", "1e-5")
        monkeypatch.setenv("EXACTWKB_FAN_SIZE", "8")
        monkeypatch.setenv("EXACTWKB_CLEARANCE", "0.01")

        tol = resolve_tolerances(filepath, cli_overrides=["ode_rtol=1e-9"])

    assert tol.ode_rtol == 1e-9
    assert tol.fan_size == 12
    assert tol.scan_points == 10
    assert tol.clearance == 0.01
    assert tol.quad_tol == DEFAULT_TOLERANCES.quad_tol


def test_keyword_overrides_win(monkeypatch):
    monkeypatch.setenv("EXACTWKB_SECANT_TOL", "1e-6")
    tol = resolve_tolerances(
        cli_overrides=["secant_tol=1e-8"], secant_tol="1e-10"
    )
    assert tol.secant_tol == 1e-10


def test_unprefixed_environment_is_ignored():
    tol = resolve_tolerances(environ={"ODE_RTOL": "1e-3", "HOME": "/root"})
    assert tol == DEFAULT_TOLERANCES


def test_unknown_setting_rejected():
    with pytest.raises(InvalidSetting, match="unknown settings"):
        resolve_tolerances(cli_overrides=["not_a_tolerance=1"])


def test_uncastable_setting_rejected():
    with pytest.raises(InvalidSetting, match="fan_size"):
        resolve_tolerances(cli_overrides=["fan_size=many"])


def test_malformed_override_rejected():
    with pytest.raises(ValueError, match="key=value"):
        resolve_tolerances(cli_overrides=["ode_rtol"])


def test_missing_section_lists_found_sections():
    with TemporaryDirectory() as folder:
        filepath = pathlib.Path(folder) / "run.ini"
        with open(filepath, "w+") as fout:
            x_st.write_ini_configuration(fout, "other", {"fan_size": 3})
        with pytest.raises(KeyError, match="other"):
            resolve_tolerances(filepath)


def test_yaml_run_file():
    yaml = pytest.importorskip("yaml")
    with TemporaryDirectory() as folder:
        filepath = pathlib.Path(folder) / "run.yaml"
        with open(filepath, "w") as fout:
            yaml.safe_dump({"tolerances": {"ode_atol": 1e-14}}, fout)
        tol = resolve_tolerances(filepath)
    assert tol.ode_atol == 1e-14
