"""
Numerical tolerances and their resolution from configuration sources.

Every threshold the pipeline uses lives on :class:`Tolerances`. A
:class:`SettingsSchema` describes the fields (name, type, default) and a
:class:`SettingsFactory` resolves them from command-line overrides, a run
file and the environment, casting raw strings to each field's type.

Classes
-------
InvalidSetting
    Raised for unknown keys or values that fail to cast.
Setting
    One named, typed setting with a default.
SettingsSchema
    Collection of settings bound to a target constructor.
SettingsFactory
    Resolves a schema against ordered sources and emits run-file templates.
Tolerances
    The frozen tolerance record shared by every module.

Functions
---------
resolve_tolerances
    Resolve :class:`Tolerances` with the default ``(CLI > CFG) > ENV`` order.
emit_tolerances
    Write a run-file template holding the given tolerances.

Examples
--------
>>> tol = resolve_tolerances(cli_overrides=["ode_rtol=1e-9"])
>>> tol.ode_rtol
1e-09
>>> emit_tolerances(pathlib.Path("run.ini"), tol)
PosixPath('/.../run.ini')
"""

from __future__ import annotations

import dataclasses
import pathlib
import typing
from dataclasses import dataclass
from typing import Any, Callable, Dict, Generic, Mapping, Optional, TypeVar

from exactwkb.emission import autoemit_config
from exactwkb.parse import (
    CFG,
    CLI,
    DEFAULT_SECTION,
    ENV,
    ResolutionDefinition,
)

T = TypeVar("T")


class InvalidSetting(ValueError):
    """
    Raised when a configuration source names an unknown setting or gives a
    value that cannot be cast to the setting's type.

    Examples
    --------
    >>> resolve_tolerances(cli_overrides=["fan_size=many"])
    Traceback (most recent call last):
    ...
    InvalidSetting: setting 'fan_size' expects int, got 'many'
    """

    pass


@dataclass(frozen=True)
class Setting:
    """
    A named setting with a type cast and a default.

    Attributes
    ----------
    name : str
        Key used in run files, overrides and (upper-cased, prefixed)
        environment variables.
    type : callable
        Converts the raw source value.
    default : Any
        Used when no source defines the key.
    """

    name: str
    type: Callable[[Any], Any]
    default: Any

    def cast(self, raw: Any) -> Any:
        if isinstance(raw, str) and self.type is int:
            raw = raw.strip()
        try:
            return self.type(raw)
        except (TypeError, ValueError) as err:
            type_name = getattr(self.type, "__name__", repr(self.type))
            raise InvalidSetting(
                f"setting '{self.name}' expects {type_name}, got {raw!r}"
            ) from err


@dataclass
class SettingsSchema(Generic[T]):
    """
    Settings bound to the constructor that consumes them.

    Attributes
    ----------
    settings : dict
        Setting name to :class:`Setting`.
    target : callable
        Called with the resolved values as keyword arguments.
    """

    settings: Dict[str, Setting]
    target: Callable[..., T]

    def add_setting(
        self, name: str, type: Callable[[Any], Any], default: Any
    ) -> Setting:
        setting = Setting(name=name, type=type, default=default)
        self.settings[name] = setting
        return setting

    @classmethod
    def from_dataclass(cls, target: Callable[..., T]) -> "SettingsSchema[T]":
        """
        Build a schema from the fields of a dataclass.

        Field annotations must be plain ``int``, ``float`` or ``str``.
        """
        schema = cls(settings={}, target=target)
        hints = typing.get_type_hints(target)
        for field in dataclasses.fields(target):  # type: ignore[arg-type]
            schema.add_setting(field.name, hints[field.name], field.default)
        return schema

    def defaults(self) -> Dict[str, Any]:
        return {name: s.default for name, s in self.settings.items()}


class SettingsFactory(Generic[T]):
    """
    Resolves a :class:`SettingsSchema` against ordered sources.

    Attributes
    ----------
    schema : SettingsSchema
        The settings to resolve.
    section : str
        Run-file section read by the ``CFG`` source.
    order : ResolutionDefinition
        Source precedence, highest first.
    """

    def __init__(
        self,
        schema: SettingsSchema[T],
        section: str,
        order: ResolutionDefinition,
    ):
        self.schema = schema
        self.section = section
        self.order = order

    def __repr__(self) -> str:
        return f"SettingsFactory({self.section!r}, order={self.order!r})"

    def parse(
        self,
        _filepath: Optional[pathlib.Path] = None,
        _section: Optional[str] = None,
        cli_overrides: Optional[typing.Sequence[str]] = None,
        environ: Optional[Mapping[str, str]] = None,
        **overrides: Any,
    ) -> Dict[str, Any]:
        """
        Resolve every setting to a typed value.

        Keyword overrides win over all sources and are cast like source
        values.

        Raises
        ------
        InvalidSetting
            For keys the schema does not define or values that fail to cast.
        """
        context: Dict[str, Any] = {
            "parse_kwargs": {"section": _section or self.section},
            "cli_overrides": cli_overrides,
        }
        if _filepath is not None:
            context["config_path"] = pathlib.Path(_filepath)
        if environ is not None:
            context["environ"] = environ

        raw = self.order.load(**context)
        raw.update(overrides)

        unknown = sorted(set(raw) - set(self.schema.settings))
        if unknown:
            raise InvalidSetting(
                f"unknown settings {unknown}; "
                f"known: {sorted(self.schema.settings)}"
            )

        resolved = self.schema.defaults()
        for key, value in raw.items():
            resolved[key] = self.schema.settings[key].cast(value)
        return resolved

    def __call__(
        self,
        _filepath: Optional[typing.Union[str, pathlib.Path]] = None,
        _section: Optional[str] = None,
        **kwargs: Any,
    ) -> T:
        filepath = None if _filepath is None else pathlib.Path(_filepath)
        return self.schema.target(**self.parse(filepath, _section, **kwargs))

    def emit(
        self,
        output_path: pathlib.Path,
        values: Optional[Mapping[str, Any]] = None,
        _section: Optional[str] = None,
    ) -> pathlib.Path:
        """
        Write a run-file template; defaults fill keys missing from
        ``values``.
        """
        payload = self.schema.defaults()
        payload.update(values or {})
        section = self.section if _section is None else _section
        return autoemit_config(
            pathlib.Path(output_path),
            {key: repr(value) for key, value in payload.items()},
            section=section,
        )


@dataclass(frozen=True)
class Tolerances:
    """
    Numerical thresholds shared by the pipeline.

    Attributes
    ----------
    root_residual : float
        Relative residual accepted for polished polynomial roots.
    root_merge : float
        Polished roots closer than this are merged.
    clearance : float
        Minimum distance of paths from poles and turning points.
    branch_continuity : float
        Consecutive square-root samples differ by less than this fraction
        of their modulus.
    max_subdivisions : int
        Refinement passes allowed while tracking a branch.
    quad_tol : float
        Absolute error target of action quadrature.
    infinity_radius : float
        Truncation radius R for paths to infinity.
    pole_offset : float
        Distance from double poles where chi integration starts and ends.
    ode_rtol, ode_atol : float
        Tolerances of the chi integrator.
    stokes_tol : float
        Accepted drift of Re W along traced Stokes lines.
    audit_tol : float
        Accepted monotonicity violation along canonical paths, relative to
        the local action scale.
    scan_points : int
        Grid points of energy scans.
    secant_max_iter : int
        Iteration limit of the complex secant.
    secant_tol : float
        Residual target of root refinement.
    barrier_band : float
        Smallest parabolic barrier action pi |E - V_top| / (hbar
        sqrt(2 |V''_top|)) accepted by the connection solvers.
    fan_size : int
        Flow lines launched per canonical-path search.
    oracle_points : int
        Default Numerov grid size.
    oracle_domain : float
        Half-width of the oracle real-axis domain.
    """

    root_residual: float = 1e-12
    root_merge: float = 1e-8
    clearance: float = 1e-3
    branch_continuity: float = 0.5
    max_subdivisions: int = 40
    quad_tol: float = 1e-12
    infinity_radius: float = 50.0
    pole_offset: float = 1e-4
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    stokes_tol: float = 1e-6
    audit_tol: float = 1e-9
    scan_points: int = 64
    secant_max_iter: int = 50
    secant_tol: float = 1e-12
    barrier_band: float = 1.0
    fan_size: int = 24
    oracle_points: int = 20000
    oracle_domain: float = 30.0

    def replace(self, **changes: Any) -> "Tolerances":
        return dataclasses.replace(self, **changes)


TOLERANCES = SettingsFactory[Tolerances](
    SettingsSchema.from_dataclass(Tolerances),
    DEFAULT_SECTION,
    ResolutionDefinition.chain(CLI, CFG, ENV),
)

DEFAULT_TOLERANCES = Tolerances()


def resolve_tolerances(
    path: Optional[typing.Union[str, pathlib.Path]] = None,
    *,
    section: Optional[str] = None,
    order: Optional[ResolutionDefinition] = None,
    cli_overrides: Optional[typing.Sequence[str]] = None,
    environ: Optional[Mapping[str, str]] = None,
    **overrides: Any,
) -> Tolerances:
    """
    Resolve :class:`Tolerances` from the configured sources.

    Parameters
    ----------
    path : path-like, optional
        Run file (``.ini``, ``.conf``, ``.yaml``, ``.toml``).
    section : str, optional
        Section of the run file; ``tolerances`` by default.
    order : ResolutionDefinition, optional
        Custom precedence; ``(CLI > CFG) > ENV`` by default.
    cli_overrides : sequence of str, optional
        ``key=value`` strings from the command line.
    environ : mapping, optional
        Environment to read instead of :data:`os.environ`.
    **overrides : Any
        Values that win over every source.

    Returns
    -------
    Tolerances
    """
    factory = TOLERANCES
    if order is not None:
        factory = SettingsFactory(factory.schema, factory.section, order)
    return factory(
        path,
        section,
        cli_overrides=cli_overrides,
        environ=environ,
        **overrides,
    )


def emit_tolerances(
    path: typing.Union[str, pathlib.Path],
    tolerances: Optional[Tolerances] = None,
    section: Optional[str] = None,
) -> pathlib.Path:
    """
    Write ``tolerances`` (defaults when omitted) as a run-file template.
    """
    values = dataclasses.asdict(tolerances or DEFAULT_TOLERANCES)
    return TOLERANCES.emit(pathlib.Path(path), values, _section=section)
