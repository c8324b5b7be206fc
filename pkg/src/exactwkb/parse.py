"""
Run-configuration sources and their precedence.

Numerical tolerances can come from three places: command-line overrides
(``--tol key=value``), a run file, and ``EXACTWKB_*`` environment variables.
This module reads each source into a flat ``{name: raw_value}`` mapping and
merges them according to a precedence chain written with ``>`` and ``<``.

Classes
-------
InvalidOrdering
    Exception raised for cyclic or duplicated source orderings.
ResolutionDefinition
    Ordered chain of sources, highest precedence first.
Interpreter
    Base class of a configuration source.
Env, Cli, Cfg
    Environment, command-line and run-file sources.

Functions
---------
autoparse_config
    Parse a run file according to its extension.
register
    Decorator registering a run-file parser for extensions.
parse_ini, parse_yaml, parse_toml
    Built-in run-file parsers.

Examples
--------
>>> from exactwkb.parse import CLI, CFG, ENV
>>> order = (CLI > CFG) > ENV
>>> order.load(config_path="run.ini", cli_overrides=["ode_rtol=1e-9"])
{'ode_rtol': '1e-9', ...}
"""

from __future__ import annotations

import configparser
import operator
import os
import pathlib
import typing

try:
    import yaml  # type: ignore[import-untyped]

    HAS_YAML = True
except ImportError:
    HAS_YAML = False

try:
    import tomllib

    HAS_TOML = True
except ImportError:
    try:
        import tomli as tomllib  # type: ignore[import-not-found,no-redef]

        HAS_TOML = True
    except ImportError:
        HAS_TOML = False

ENV_PREFIX = "EXACTWKB_"
DEFAULT_SECTION = "tolerances"

PARSING_REGISTRY = {}  # type: typing.Dict[str, typing.Any]

RHS = typing.Union["ResolutionDefinition", "Interpreter"]
LHS = RHS
OP = typing.Callable[[LHS, RHS], "ResolutionDefinition"]


class InvalidOrdering(Exception):
    """
    Raised when a source ordering repeats a source.

    Examples
    --------
    >>> (ENV > CFG) > ENV
    Traceback (most recent call last):
    ...
    InvalidOrdering

    Notes
    -----
    Python chains comparisons, so ``ENV > CFG > ENV`` means
    ``(ENV > CFG) and (CFG > ENV)``; group orderings of three sources
    with parentheses or build them with :meth:`ResolutionDefinition.chain`.
    """

    pass


class ResolutionDefinition:
    """
    Precedence chain of configuration sources.

    Attributes
    ----------
    interpreter_order : list
        Interpreters from highest to lowest precedence.

    Notes
    -----
    The default chain used by :func:`exactwkb.settings.resolve_tolerances`
    is ``(CLI > CFG) > ENV``.
    """

    def __init__(self, first_element: "RHS"):
        self.interpreter_order = [first_element]

    @classmethod
    def chain(cls, *sources: "Interpreter") -> "ResolutionDefinition":
        """Order ``sources`` from highest to lowest precedence."""
        if not sources:
            raise InvalidOrdering("an ordering needs at least one source")
        order = cls(sources[0])
        for source in sources[1:]:
            order = order > source
        return order

    def __lt__(self, rhs: "RHS") -> "ResolutionDefinition":
        if rhs in self.interpreter_order:
            raise InvalidOrdering()

        self.interpreter_order.insert(0, rhs)
        return self

    def __gt__(self, rhs: "RHS") -> "ResolutionDefinition":
        if rhs in self.interpreter_order:
            raise InvalidOrdering()

        self.interpreter_order.append(rhs)
        return self

    def __repr__(self) -> str:
        return " > ".join(str(source) for source in self.interpreter_order)

    def load(self, **context: typing.Any) -> dict:
        """
        Merge every source, letting higher precedence sources win.

        Parameters
        ----------
        **context : Any
            Passed to each interpreter: ``config_path``, ``parse_kwargs``,
            ``cli_overrides`` and ``environ`` are understood.

        Returns
        -------
        dict
            Raw (uncast) values keyed by setting name.
        """
        payload = {}

        for interpreter in reversed(self.interpreter_order):
            payload.update(interpreter.load(**context))

        return payload


def autoparse_config(
    path: pathlib.Path, section: typing.Optional[str] = None
) -> dict:
    """
    Parse a run file with the parser registered for its suffix.

    Unknown suffixes fall back to the ``.ini`` parser.
    """
    path = pathlib.Path(path).expanduser()
    func = PARSING_REGISTRY.get(path.suffix, PARSING_REGISTRY[".ini"])
    if section is None:
        section = DEFAULT_SECTION
    return dict(func(path, section))


def register(
    *extensions: str,
) -> typing.Callable[[typing.Callable], typing.Callable]:
    """
    Register a run-file parser for one or more extensions.

    Parameters
    ----------
    *extensions : str
        Suffixes including the dot, e.g. ``".json"``.

    Examples
    --------
    >>> @register(".json")
    ... def parse_json(path, section):
    ...     with open(path) as fin:
    ...         return json.load(fin)[section]
    """

    def decoration(func: typing.Callable) -> typing.Callable:
        for extension in extensions:
            PARSING_REGISTRY[extension] = func
        return func

    return decoration


def _missing_section(
    config_path: pathlib.Path, key: str, found: typing.Iterable[str]
) -> KeyError:
    return KeyError(
        f"Could not find section '{key}', "
        f"only found [{', '.join(found)}]. "
        f"Run file: {config_path}"
    )


@register(".ini", ".conf")
def parse_ini(
    config_path: pathlib.Path, key: str
) -> configparser.SectionProxy:
    """
    Parse one section of an INI run file.

    Raises
    ------
    KeyError
        If the section is absent; the message lists the sections found.
    """
    config = configparser.ConfigParser()
    config.read(config_path.expanduser())
    if key not in config.sections():
        raise _missing_section(config_path, key, config.sections())
    return config[key]


@register(".yaml", ".yml")
def parse_yaml(config_path: pathlib.Path, key: str) -> dict:
    """
    Parse one mapping of a YAML run file.

    Raises
    ------
    ImportError
        If PyYAML is not installed.
    ValueError
        If the document is not a mapping.
    KeyError
        If the section is absent.
    """
    if not HAS_YAML:
        raise ImportError(
            "PyYAML is required for YAML run files. "
            "Install it with: pip install PyYAML"
        )

    with open(config_path.expanduser(), "r") as fin:
        data = yaml.safe_load(fin)

    if not isinstance(data, dict):
        raise ValueError(
            "YAML run file must contain a mapping at top level, "
            f"got {type(data).__name__}"
        )
    if key not in data:
        raise _missing_section(config_path, key, list(data.keys()))
    return data[key]


@register(".toml")
def parse_toml(config_path: pathlib.Path, key: str) -> dict:
    """
    Parse one table of a TOML run file.

    Raises
    ------
    ImportError
        If neither tomllib nor tomli is available.
    KeyError
        If the table is absent.
    """
    if not HAS_TOML:
        raise ImportError(
            "tomllib is required for TOML run files. "
            "For Python < 3.11, install tomli with: pip install tomli"
        )

    with open(config_path.expanduser(), "rb") as fin:
        data = tomllib.load(fin)

    if key not in data:
        raise _missing_section(config_path, key, list(data.keys()))
    return data[key]


class Interpreter:
    """
    Base class of a configuration source.

    Subclasses implement :meth:`interpret`; instances combine with ``>`` and
    ``<`` into a :class:`ResolutionDefinition`.
    """

    name: typing.Optional[str] = None

    def load(self, **context: typing.Any) -> dict:
        return self.interpret(context)

    def interpret(self, context: dict) -> dict:
        raise NotImplementedError

    def _coalesce(
        self, rhs: RHS, op: OP, flipped: OP
    ) -> ResolutionDefinition:
        if isinstance(rhs, ResolutionDefinition):
            # ``CLI > (CFG > ENV)`` puts CLI at the head of the chain
            return flipped(rhs, self)
        return op(ResolutionDefinition(self), rhs)

    def __lt__(self, rhs: RHS) -> ResolutionDefinition:
        return self._coalesce(rhs, operator.lt, operator.gt)

    def __gt__(self, rhs: RHS) -> ResolutionDefinition:
        return self._coalesce(rhs, operator.gt, operator.lt)

    def __str__(self) -> str:
        return self.name or "Unknown"

    def __repr__(self) -> str:
        return self.name or "Unknown"


class Env(Interpreter):
    """
    Environment source.

    Only variables starting with ``EXACTWKB_`` are read; the prefix is
    stripped and the remainder lower-cased, so ``EXACTWKB_ODE_RTOL`` sets
    ``ode_rtol``.
    """

    name = "ENV"

    def interpret(self, context: dict) -> dict:
        environ = context.get("environ", os.environ)
        return {
            key.removeprefix(ENV_PREFIX).lower(): value
            for key, value in environ.items()
            if key.startswith(ENV_PREFIX) and len(key) > len(ENV_PREFIX)
        }


class Cli(Interpreter):
    """
    Command-line override source.

    Reads ``key=value`` strings from ``context["cli_overrides"]`` (the
    repeated ``--tol`` flag). A later occurrence of a key wins.

    Examples
    --------
    >>> CLI.load(cli_overrides=["ode_rtol=1e-9", "fan_size=32"])
    {'ode_rtol': '1e-9', 'fan_size': '32'}
    """

    name = "CLI"

    def interpret(self, context: dict) -> dict:
        accumulator = {}  # type: dict[str, str]
        for item in context.get("cli_overrides") or ():
            key, sep, value = item.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or not key:
                raise ValueError(
                    f"Override '{item}' is not of the form key=value"
                )
            accumulator[key] = value.strip()
        return accumulator


class Cfg(Interpreter):
    """
    Run-file source; reads ``context["config_path"]`` when present.
    """

    name = "CFG"

    def interpret(self, context: dict) -> dict:
        try:
            config_path = context["config_path"]
        except KeyError:
            return {}
        if config_path is None:
            return {}

        return autoparse_config(
            config_path, **context.get("parse_kwargs", {})
        )


ENV = Env()
CLI = Cli()
CFG = Cfg()
