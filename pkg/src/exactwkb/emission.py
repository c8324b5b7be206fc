"""
Result and run-file emission.

Writers are looked up by file extension in :data:`EMISSION_REGISTRY`. The
registry holds writers for run files (``.ini``/``.conf``), result records
(``.json``), tabular traces (``.csv``) and figures (``.svg``).

Functions
---------
autoemit_config
    Write a payload with the writer registered for the path's suffix.
register
    Decorator registering a writer for extensions.
emit_ini, emit_json, emit_csv, emit_svg
    Built-in writers.
format_float, jsonable
    Number formatting shared by every text writer.

Examples
--------
>>> autoemit_config(Path("levels.json"), [{"energy": -0.13}])
PosixPath('/.../levels.json')
>>> autoemit_config(Path("run.ini"), {"ode_rtol": "1e-10"}, "tolerances")
PosixPath('/.../run.ini')
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import numbers
import pathlib
import typing

import numpy as np

SIGNIFICANT_DIGITS = 15

EMISSION_REGISTRY: dict[
    str,
    typing.Callable[[pathlib.Path, str, typing.Any], pathlib.Path],
] = {}


def autoemit_config(
    path: pathlib.Path,
    configuration: typing.Any,
    section: typing.Optional[str] = None,
) -> pathlib.Path:
    """
    Write ``configuration`` with the writer registered for ``path``.

    Parameters
    ----------
    path : pathlib.Path
        Output path; its suffix selects the writer.
    configuration : Any
        Payload understood by the writer: a mapping for run files, records
        for JSON, ``{"header": [...], "rows": [...]}`` for CSV, a matplotlib
        figure for SVG.
    section : str, optional
        Section name for run files. Defaults to "DEFAULT".

    Returns
    -------
    pathlib.Path
        Absolute path of the written file.

    Raises
    ------
    KeyError
        If no writer is registered for the suffix.
    """
    path = pathlib.Path(path)
    try:
        func = EMISSION_REGISTRY[path.suffix]
    except KeyError:
        supported_extensions = ", ".join(EMISSION_REGISTRY.keys())
        raise KeyError(
            f"Unsupported file extension '{path.suffix}'. "
            f"Supported extensions are: {supported_extensions}"
        )
    if section is None:
        section = "DEFAULT"
    return func(path, section, configuration)


def register(
    *extensions: str,
) -> typing.Callable[[typing.Callable], typing.Callable]:
    """
    Register a writer ``(path, section, payload) -> path`` for extensions.
    """

    def decoration(func: typing.Callable) -> typing.Callable:
        for extension in extensions:
            EMISSION_REGISTRY[extension] = func
        return func

    return decoration


def format_float(value: float) -> float:
    """
    Round to 15 significant digits so repeated runs print identically.
    """
    if not math.isfinite(value):
        return value
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def jsonable(value: typing.Any) -> typing.Any:
    """
    Convert results to JSON-ready values.

    Complex numbers become ``[re, im]``, numpy scalars and arrays become
    Python numbers and lists, dataclasses and objects with ``to_record``
    are expanded, and every float is rounded by :func:`format_float`.
    """
    if hasattr(value, "to_record"):
        return jsonable(value.to_record())
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [jsonable(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        number = format_float(float(value))
        return number if math.isfinite(number) else str(number)
    if isinstance(value, numbers.Complex):
        return [jsonable(value.real), jsonable(value.imag)]
    if isinstance(value, pathlib.Path):
        return str(value)
    return value


def dumps(payload: typing.Any) -> str:
    """
    Serialise ``payload`` deterministically (sorted keys, rounded floats).
    """
    return json.dumps(jsonable(payload), indent=2, sort_keys=True)


@register(".ini", ".conf")
def emit_ini(
    config_path: pathlib.Path,
    header: str,
    configuration: typing.Mapping[str, typing.Any],
) -> pathlib.Path:
    """
    Write a run file with one section.

    Existing files are overwritten; parent directories must exist.
    """
    parser = configparser.ConfigParser()
    parser[header] = {key: str(value) for key, value in configuration.items()}

    real_path = config_path.expanduser().resolve()
    with open(real_path, "wt") as fout:
        parser.write(fout)

    return real_path


@register(".json")
def emit_json(
    path: pathlib.Path, header: str, payload: typing.Any
) -> pathlib.Path:
    real_path = path.expanduser().resolve()
    with open(real_path, "wt") as fout:
        fout.write(dumps(payload))
        fout.write("\n")
    return real_path


@register(".csv")
def emit_csv(
    path: pathlib.Path, header: str, payload: typing.Mapping[str, typing.Any]
) -> pathlib.Path:
    """
    Write ``payload["rows"]`` under ``payload["header"]``.

    Complex cells are split into ``<column>_re`` and ``<column>_im``.
    """
    columns = list(payload["header"])
    rows = [list(row) for row in payload["rows"]]
    complex_columns = {
        index
        for index in range(len(columns))
        if any(isinstance(row[index], complex) for row in rows)
    }
    expanded_header = []
    for index, column in enumerate(columns):
        if index in complex_columns:
            expanded_header.extend([f"{column}_re", f"{column}_im"])
        else:
            expanded_header.append(column)

    real_path = path.expanduser().resolve()
    with open(real_path, "wt", newline="") as fout:
        writer = csv.writer(fout)
        writer.writerow(expanded_header)
        for row in rows:
            cells: list = []
            for index, cell in enumerate(row):
                if index in complex_columns:
                    cell = complex(cell)
                    cells.extend(
                        [format_float(cell.real), format_float(cell.imag)]
                    )
                elif isinstance(cell, float):
                    cells.append(format_float(cell))
                else:
                    cells.append(cell)
            writer.writerow(cells)
    return real_path


@register(".svg")
def emit_svg(
    path: pathlib.Path, header: str, figure: typing.Any
) -> pathlib.Path:
    """
    Save a matplotlib figure as SVG with reproducible element ids.
    """
    import matplotlib

    real_path = path.expanduser().resolve()
    with matplotlib.rc_context({"svg.hashsalt": "exactwkb"}):
        figure.savefig(real_path, format="svg", metadata={"Date": None})
    return real_path
