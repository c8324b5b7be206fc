import configparser
import dataclasses
import typing

from hypothesis import strategies as st

from exactwkb import parse
from exactwkb.settings import Tolerances

TOLERANCE_FIELDS = {
    field.name: typing.get_type_hints(Tolerances)[field.name]
    for field in dataclasses.fields(Tolerances)
}


def write_ini_configuration(fout, header, configuration):
    """Write ``configuration`` under ``header``; returns the file text."""
    config = configparser.ConfigParser()
    config[header] = {key: str(value) for key, value in configuration.items()}
    config.write(fout)
    fout.seek(0)
    return fout.read()


def write_env_configuration(monkeypatch, configuration):
    for key, value in configuration.items():
        monkeypatch.setenv(f"{parse.ENV_PREFIX}{key.upper()}", str(value))


def cli_overrides(configuration):
    return [f"{key}={value}" for key, value in configuration.items()]


def _value(type_):
    if type_ is int:
        return st.integers(min_value=1, max_value=10**6)
    return st.floats(
        min_value=1e-15, max_value=1e3, allow_nan=False, allow_infinity=False
    )


@st.composite
def tolerance_overrides(draw, min_size=1):
    names = draw(
        st.lists(
            st.sampled_from(sorted(TOLERANCE_FIELDS)),
            min_size=min_size,
            max_size=6,
            unique=True,
        )
    )
    return {name: draw(_value(TOLERANCE_FIELDS[name])) for name in names}


@st.composite
def resolutions(draw):
    bag = st.sampled_from([parse.ENV, parse.CLI, parse.CFG])

    return draw(st.lists(bag, min_size=1, unique=True))


def section_names():
    return st.text(
        alphabet=st.characters(whitelist_categories=["Ll", "Lu"]),
        min_size=1,
        max_size=12,
    ).filter(lambda name: name.upper() != "DEFAULT")


def hbars(min_value=0.05, max_value=1.0):
    return st.floats(min_value=min_value, max_value=max_value)


@st.composite
def separated_roots(draw, min_size=1, max_size=4, gap=0.1):
    """Real roots in [-2, 2] at least ``gap`` apart."""
    roots = draw(
        st.lists(
            st.floats(min_value=-2.0, max_value=2.0),
            min_size=min_size,
            max_size=max_size,
        )
    )
    kept = []
    for root in sorted(roots):
        if not kept or root - kept[-1] >= gap:
            kept.append(root)
    return kept
