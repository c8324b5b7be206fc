"""
Command-line front end.

Subcommands
-----------
graph
    Stokes graph of a potential at one energy (JSON, CSV polylines or SVG).
quantize
    Bound-state energies in a window.
scatter
    Reflection and transmission amplitudes at one energy or over a window.
resonance
    Quasi-bound levels in a window.
coulomb
    Radial Coulomb levels, or the scattering phase at ``--E``.
config
    Write the resolved tolerances as a run file.

Results go to stdout as JSON unless ``--output`` names a file. Exit codes
are 0 on success, 1 for usage errors and 2 when a solver fails, in which
case stdout carries ``{"error", "message", "command"}``.

Examples
--------
$ exactwkb quantize --potential double-hump --hbar 0.5 --window -1,0 --verify
$ exactwkb graph --potential double-hump --E 0.05 --hbar 0.1 --output g.svg
$ exactwkb coulomb --alpha 2 --l 0 --hbar 1 --levels 3
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import pathlib
import sys
import typing

import numpy as np

from exactwkb import connection, oracle
from exactwkb.emission import autoemit_config, dumps
from exactwkb.errors import ExactWKBError
from exactwkb.potential import build_effective_q, load_potential
from exactwkb.settings import (
    InvalidSetting,
    Tolerances,
    emit_tolerances,
    resolve_tolerances,
)
from exactwkb.stokes import trace_graph

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2

FORMATS = {".json": "json", ".csv": "csv", ".svg": "svg"}
# flags whose values may start with "-"
_SIGNED_FLAGS = ("--window", "--E")


class UsageError(Exception):
    """Bad command-line usage; reported with exit code 1."""

    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _window(text: str) -> typing.Tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'lo,hi', got {text!r}"
        )
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"empty window {text!r}")
    return lo, hi


def _energy(text: str) -> complex:
    try:
        value = complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    return value


def _common() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--potential",
        default="double-hump",
        help="built-in name, .json file or JSON literal {num, den}",
    )
    common.add_argument("--hbar", type=float, default=0.1)
    common.add_argument("--format", choices=sorted(set(FORMATS.values())))
    common.add_argument("--output", type=pathlib.Path)
    common.add_argument("--config", type=pathlib.Path, help="run file")
    common.add_argument(
        "--tol",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="tolerance override, repeatable",
    )
    common.add_argument(
        "--verify", action="store_true", help="compare with the oracle"
    )
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="INFO, twice DEBUG"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(
        prog="exactwkb",
        description="Exact WKB connection problems for rational potentials.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    graph = commands.add_parser("graph", parents=[common])
    graph.add_argument("--E", type=_energy, required=True)
    graph.add_argument("--no-langer", dest="langer", action="store_false")

    quantize = commands.add_parser("quantize", parents=[common])
    quantize.add_argument("--window", type=_window, required=True)
    quantize.add_argument("--mode", choices=connection.MODES, default="exact")

    scatter = commands.add_parser("scatter", parents=[common])
    where = scatter.add_mutually_exclusive_group(required=True)
    where.add_argument("--E", type=_energy)
    where.add_argument("--window", type=_window)
    scatter.add_argument("--points", type=int, default=21)
    scatter.add_argument("--mode", choices=connection.MODES, default="exact")

    resonance = commands.add_parser("resonance", parents=[common])
    resonance.add_argument("--window", type=_window, required=True)
    resonance.add_argument(
        "--method",
        choices=connection.RESONANCE_METHODS,
        default="complex-root",
    )

    coulomb = commands.add_parser("coulomb", parents=[common])
    coulomb.add_argument("--alpha", type=float, default=2.0)
    coulomb.add_argument("--l", type=int, default=0)
    coulomb.add_argument("--levels", type=int, default=3)
    coulomb.add_argument("--E", type=_energy, help="scattering energy")
    coulomb.add_argument("--mode", choices=connection.MODES, default="exact")
    coulomb.add_argument("--no-langer", dest="langer", action="store_false")

    commands.add_parser("config", parents=[common])
    return parser


def _join_signed(argv: typing.Sequence[str]) -> typing.List[str]:
    joined = []  # type: typing.List[str]
    tokens = list(argv)
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token in _SIGNED_FLAGS and i + 1 < len(tokens):
            joined.append(f"{token}={tokens[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def _format(args: argparse.Namespace) -> str:
    if args.command == "config":
        suffix = None if args.output is None else args.output.suffix
        if suffix is not None and suffix not in (".ini", ".conf"):
            raise UsageError("config writes .ini or .conf run files")
        return "ini" if args.output is not None else "json"
    if args.output is not None:
        suffix_format = FORMATS.get(args.output.suffix)
        if suffix_format is None:
            raise UsageError(
                f"unsupported output suffix '{args.output.suffix}'; "
                f"use one of {', '.join(FORMATS)}"
            )
        if args.format is not None and args.format != suffix_format:
            raise UsageError(
                f"--format {args.format} does not match {args.output.name}"
            )
        fmt = suffix_format
    else:
        fmt = args.format or "json"
    if fmt == "svg" and args.command != "graph":
        raise UsageError("svg output is only available for 'graph'")
    if fmt == "csv" and args.command not in ("graph", "scatter"):
        raise UsageError(f"csv output is not available for '{args.command}'")
    if fmt != "json" and args.output is None:
        raise UsageError(f"{fmt} output needs --output")
    return fmt


def _real(value: complex, flag: str) -> float:
    if value.imag != 0:
        raise UsageError(f"{flag} must be real for this command")
    return value.real


def _params(args: argparse.Namespace) -> dict:
    skip = {"format", "output", "config", "tol", "verbose", "jobs", "command"}
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip
    }


def _nearest(energy: float, references: typing.Sequence[float]) -> dict:
    if not references:
        return {"oracle": None, "difference": None}
    best = min(references, key=lambda ref: abs(ref - energy))
    return {"oracle": best, "difference": abs(best - energy)}


# -- commands -----------------------------------------------------------------


def cmd_graph(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    potential = load_potential(args.potential)
    q = build_effective_q(potential, args.E, args.hbar, args.langer, tol)
    graph = trace_graph(q, tolerances=tol)
    if fmt == "svg":
        from exactwkb.plotting import graph_figure

        return graph_figure(graph)
    if fmt == "csv":
        return graph.to_csv_payload()
    return connection.to_record("graph", _params(args), graph.to_record())


def cmd_quantize(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    potential = load_potential(args.potential)
    levels = connection.bound_states(
        potential, args.hbar, args.window, args.mode, tolerances=tol
    )
    record = connection.to_record(
        "quantize",
        _params(args),
        levels,
        residual=max((level.residual for level in levels), default=0.0),
        method=args.mode,
        provenance={"count": len(levels)},
    )
    if args.verify:
        references = oracle.numerov_bound_states(
            potential, args.hbar, args.window, tolerances=tol, jobs=args.jobs
        )
        record["verify"] = {
            "oracle": references,
            "comparison": [
                {
                    "energy": level.energy.real,
                    **_nearest(level.energy.real, references),
                }
                for level in levels
            ],
        }
    return record


def cmd_scatter(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    potential = load_potential(args.potential)
    solver = connection.ConnectionSolver(
        potential, args.hbar, mode=args.mode, tolerances=tol
    )
    if args.E is not None:
        energies = [_real(args.E, "--E")]
    else:
        if args.points < 2:
            raise UsageError("--points must be at least 2")
        energies = [float(E) for E in np.linspace(*args.window, args.points)]

    amplitudes = [
        connection.barrier_amplitudes(
            potential, args.hbar, E, args.mode, tolerances=tol, solver=solver
        )
        for E in energies
    ]
    references = None
    if args.verify:
        references = oracle.scan_transmission(
            potential, args.hbar, energies, tolerances=tol, jobs=args.jobs
        )

    if fmt == "csv":
        header = ["E", "transmission", "phase"]
        rows = [
            [result.energy, result.transmission, float(np.angle(result.T))]
            for result in amplitudes
        ]
        if references is not None:
            header += ["oracle_transmission", "difference"]
            for row, (_, probability, _) in zip(rows, references):
                row += [probability, abs(probability - row[1])]
        return {"header": header, "rows": rows}

    value = amplitudes[0] if args.E is not None else amplitudes
    record = connection.to_record(
        "scatter",
        _params(args),
        value,
        residual=max(result.unitarity_defect for result in amplitudes),
        method=args.mode,
    )
    if references is not None:
        record["verify"] = [
            {
                "energy": E,
                "oracle_transmission": probability,
                "difference": abs(probability - result.transmission),
            }
            for (E, probability, _), result in zip(references, amplitudes)
        ]
    return record


def cmd_resonance(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    potential = load_potential(args.potential)
    found = connection.resonances(
        potential, args.hbar, args.window, args.method, tolerances=tol
    )
    record = connection.to_record(
        "resonance",
        _params(args),
        found,
        residual=None,
        method=args.method,
        provenance={"count": len(found)},
    )
    if args.verify:
        checks = []
        span = args.window[1] - args.window[0]
        for result in found:
            half = min(0.25 * span, max(50 * result.Gamma, 1e-3 * span))
            try:
                fit = oracle.resonance_fit(
                    potential,
                    args.hbar,
                    (result.E0 - half, result.E0 + half),
                    tolerances=tol,
                    jobs=args.jobs,
                )
            except ExactWKBError as err:
                checks.append(
                    {
                        "E0": result.E0,
                        "error": type(err).__name__,
                        "message": str(err),
                    }
                )
                continue
            relative = None
            if fit.Gamma > 0:
                relative = abs(fit.Gamma - result.Gamma) / fit.Gamma
            checks.append(
                {
                    "E0": result.E0,
                    "oracle": fit,
                    "difference_E0": abs(fit.E0 - result.E0),
                    "relative_difference_Gamma": relative,
                }
            )
        record["verify"] = checks
    return record


def cmd_coulomb(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    if args.E is not None:
        phase = connection.coulomb_phase(
            args.alpha, args.l, args.hbar, _real(args.E, "--E"), args.mode,
            tolerances=tol,
        )
        return connection.to_record("coulomb-phase", _params(args), phase)

    if args.levels < 1:
        raise UsageError("--levels must be at least 1")
    levels = connection.coulomb_levels(
        args.alpha, args.l, args.hbar, args.levels - 1, tolerances=tol,
        langer=args.langer,
    )
    record = connection.to_record(
        "coulomb",
        _params(args),
        levels,
        residual=max((level.residual for level in levels), default=0.0),
        method=levels[0].method if levels else None,
    )
    if args.verify:
        exact = oracle.coulomb_exact_levels(
            args.alpha, args.l, args.hbar, args.l + args.levels
        )
        record["verify"] = [
            {
                "energy": level.energy.real,
                "oracle": reference,
                "difference": abs(level.energy.real - reference),
            }
            for level, reference in zip(levels, exact)
        ]
    return record


def cmd_config(
    args: argparse.Namespace, tol: Tolerances, fmt: str
) -> typing.Any:
    return dataclasses.asdict(tol)


COMMANDS = {
    "graph": cmd_graph,
    "quantize": cmd_quantize,
    "scatter": cmd_scatter,
    "resonance": cmd_resonance,
    "coulomb": cmd_coulomb,
    "config": cmd_config,
}


def _configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _emit(
    args: argparse.Namespace, fmt: str, payload: typing.Any
) -> None:
    if args.output is None:
        sys.stdout.write(dumps(payload))
        sys.stdout.write("\n")
        return
    if args.command == "config":
        path = emit_tolerances(args.output, Tolerances(**payload))
    else:
        path = autoemit_config(args.output, payload)
    logger.info("wrote %s", path)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """
    Run one subcommand; returns the process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(
            _join_signed(sys.argv[1:] if argv is None else argv)
        )
    except UsageError as err:
        sys.stderr.write(f"{err}\n")
        return EXIT_USAGE
    _configure_logging(args.verbose)

    try:
        fmt = _format(args)
        tol = resolve_tolerances(args.config, cli_overrides=args.tol)
        payload = COMMANDS[args.command](args, tol, fmt)
        _emit(args, fmt, payload)
    except (UsageError, InvalidSetting, ValueError) as err:
        if isinstance(err, ExactWKBError):
            return _solver_error(args, err)
        sys.stderr.write(f"exactwkb {args.command}: {err}\n")
        return EXIT_USAGE
    except ExactWKBError as err:
        return _solver_error(args, err)
    return EXIT_OK


def _solver_error(args: argparse.Namespace, err: Exception) -> int:
    logger.debug("solver failure", exc_info=err)
    record = {
        "error": type(err).__name__,
        "message": str(err),
        "command": args.command,
    }
    sys.stdout.write(dumps(record))
    sys.stdout.write("\n")
    return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
