"""
Rational potentials and the Langer-corrected effective q.

A potential is a ratio of two complex polynomials. Its poles determine the
Langer term delta(x) = sum 1 / (4 (x - z)**2) taken over the first and
second order poles z of q = V - E, and the effective function

    q~(x) = V(x) - E + hbar**2 * delta(x)

is kept both pointwise and in a cleared form N(x) / D(x) whose numerator
roots are the turning points.

Classes
-------
RationalPotential
    V(x) as a reduced ratio of polynomials (ascending coefficients).
Singularity, SingularityList
    Finite poles of q~ with orders and the behaviour at infinity.
EffectiveQ
    q~ for one (E, hbar) with analytic derivatives.

Functions
---------
polynomial_roots
    Companion-matrix roots with clustering and Newton polishing.
build_effective_q, classify_singularities, find_turning_points
    The public operations on potentials.
builtin, named_potential, load_potential
    Registry of named potentials and loading from JSON.

Examples
--------
>>> V = named_potential("double-hump")
>>> q = build_effective_q(V, -0.5, 0.5)
>>> [z for z, _ in find_turning_points(q)]
[(-0.5...+0j), ...]
"""

from __future__ import annotations

import functools
import json
import logging
import math
import pathlib
import typing
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from exactwkb.errors import NonRationalInput, RootFindingFailed
from exactwkb.settings import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

Coefficients = typing.Tuple[complex, ...]
ArrayLike = typing.Union[complex, np.ndarray]

PotentialFactory = typing.Callable[..., "RationalPotential"]

BUILTIN_POTENTIALS = {}  # type: typing.Dict[str, PotentialFactory]


def _coefficients(
    values: typing.Iterable[typing.Any], what: str
) -> Coefficients:
    array = np.asarray(list(values), dtype=complex)
    if array.ndim != 1 or array.size == 0:
        raise NonRationalInput(f"{what} needs at least one coefficient")
    if not np.all(np.isfinite(array)):
        raise NonRationalInput(f"{what} has non-finite coefficients")
    nonzero = np.flatnonzero(array)
    if nonzero.size == 0:
        return (0j,)
    return tuple(complex(c) for c in array[: nonzero[-1] + 1])


def horner(
    coefficients: Coefficients, x: complex
) -> typing.Tuple[complex, complex, complex]:
    """
    Value, first and second derivative of a polynomial at a scalar point.
    """
    p = dp = ddp = 0j
    for c in reversed(coefficients):
        ddp = ddp * x + 2.0 * dp
        dp = dp * x + p
        p = p * x + c
    return p, dp, ddp


def _newton(coefficients: np.ndarray, z: complex, steps: int = 8) -> complex:
    derivative = P.polyder(coefficients)
    best = z
    best_residual = abs(P.polyval(z, coefficients))
    for _ in range(steps):
        slope = P.polyval(z, derivative)
        if slope == 0:
            break
        z = z - P.polyval(z, coefficients) / slope
        residual = abs(P.polyval(z, coefficients))
        if residual < best_residual:
            best, best_residual = z, residual
        else:
            break
    return complex(best)


def _residual_ok(coefficients: np.ndarray, z: complex, tol: float) -> bool:
    powers = np.abs(z) ** np.arange(len(coefficients))
    scale = float(np.sum(np.abs(coefficients) * powers))
    return abs(P.polyval(z, coefficients)) <= tol * max(scale, 1e-300)


def polynomial_roots(
    coefficients: typing.Sequence[complex],
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> typing.List[typing.Tuple[complex, int]]:
    """
    Roots of a polynomial with multiplicities.

    Companion-matrix eigenvalues that lie within the square root of
    ``root_merge`` (relative) of each other are treated as one multiple
    root: the cluster centroid is polished by Newton steps on the
    ``(m - 1)``-th derivative, ``m`` being the cluster size. Polished roots
    closer than ``root_merge`` are merged.

    Parameters
    ----------
    coefficients : sequence of complex
        Ascending coefficients.
    tolerances : Tolerances
        Supplies ``root_merge`` and ``root_residual``.

    Returns
    -------
    list of (complex, int)
        Roots sorted by (real, imag) with their multiplicities.

    Raises
    ------
    RootFindingFailed
        If a polished root's relative residual exceeds ``root_residual``.
    """
    c = np.asarray(_coefficients(coefficients, "polynomial"), dtype=complex)
    if len(c) < 2:
        return []

    raw = P.polyroots(c)
    radius = math.sqrt(tolerances.root_merge)
    clusters = []  # type: typing.List[typing.List[complex]]
    for root in sorted(raw, key=lambda z: (z.real, z.imag)):
        for cluster in clusters:
            anchor = cluster[0]
            if abs(root - anchor) <= radius * max(1.0, abs(anchor)):
                cluster.append(root)
                break
        else:
            clusters.append([root])

    polished = []  # type: typing.List[typing.Tuple[complex, int]]
    for cluster in clusters:
        m = len(cluster)
        centre = complex(np.mean(cluster))
        candidate = _newton(P.polyder(c, m - 1), centre)
        if _residual_ok(c, candidate, tolerances.root_residual):
            polished.append((candidate, m))
            continue
        logger.debug(
            "cluster of %d near %s split into simple roots", m, centre
        )
        for member in cluster:
            simple = _newton(c, complex(member))
            if not _residual_ok(c, simple, tolerances.root_residual):
                raise RootFindingFailed(
                    f"root near {simple:.6g} has residual "
                    f"{abs(P.polyval(simple, c)):.3e}"
                )
            polished.append((simple, 1))

    merged = []  # type: typing.List[typing.List[typing.Any]]
    for root, multiplicity in polished:
        for entry in merged:
            scale = max(1.0, abs(root))
            if abs(entry[0] - root) <= tolerances.root_merge * scale:
                entry[1] += multiplicity
                break
        else:
            merged.append([root, multiplicity])

    return sorted(
        ((complex(z), int(m)) for z, m in merged),
        key=lambda item: (round(item[0].real, 12), round(item[0].imag, 12)),
    )


def _cancel_common_roots(
    numerator: Coefficients, denominator: Coefficients
) -> typing.Tuple[Coefficients, Coefficients]:
    """Divide both polynomials by (x - z) for every root z they share."""
    num = np.asarray(numerator, dtype=complex)
    den = np.asarray(denominator, dtype=complex)
    if len(den) < 2 or not np.any(num):
        return numerator, denominator
    for pole, multiplicity in polynomial_roots(den):
        for _ in range(multiplicity):
            if len(num) < 2 or not _residual_ok(num, pole, 1e-10):
                break
            logger.debug("cancelling the common root %s", pole)
            num = P.polydiv(num, [-pole, 1.0])[0]
            den = P.polydiv(den, [-pole, 1.0])[0]
    return (
        _coefficients(num, "numerator"),
        _coefficients(den, "denominator"),
    )


@dataclass(frozen=True)
class RationalPotential:
    """
    A rational potential V(x) = numerator(x) / denominator(x).

    Attributes
    ----------
    numerator, denominator : tuple of complex
        Ascending polynomial coefficients; trailing zeros are dropped.
    label : str, optional
        Name used in reports.

    Numerator and denominator are reduced by their common roots, so
    ``(x - 1) / ((x - 1) (x**2 + 1))`` is stored as ``1 / (x**2 + 1)``.

    Raises
    ------
    NonRationalInput
        If the denominator vanishes identically or a coefficient is not
        finite.
    """

    numerator: Coefficients
    denominator: Coefficients = (1 + 0j,)
    label: typing.Optional[str] = None

    def __post_init__(self) -> None:
        numerator = _coefficients(self.numerator, "numerator")
        denominator = _coefficients(self.denominator, "denominator")
        if denominator == (0j,):
            raise NonRationalInput("denominator is the zero polynomial")
        numerator, denominator = _cancel_common_roots(numerator, denominator)
        object.__setattr__(self, "numerator", numerator)
        object.__setattr__(self, "denominator", denominator)

    @functools.cached_property
    def poles(self) -> typing.List[typing.Tuple[complex, int]]:
        return polynomial_roots(self.denominator)

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return P.polyval(x, self.numerator) / P.polyval(x, self.denominator)

    def derivatives(
        self, x: ArrayLike
    ) -> typing.Tuple[ArrayLike, ArrayLike, ArrayLike]:
        """V, V' and V'' at ``x`` from the quotient rule."""
        n = [P.polyval(x, P.polyder(self.numerator, k)) for k in range(3)]
        d = [P.polyval(x, P.polyder(self.denominator, k)) for k in range(3)]
        v = n[0] / d[0]
        v1 = (n[1] - v * d[1]) / d[0]
        v2 = (n[2] - 2 * v1 * d[1] - v * d[2]) / d[0]
        return v, v1, v2

    def asymptotic_value(self) -> complex:
        """Limit of V at infinity (``inf`` when V grows)."""
        excess = len(self.numerator) - len(self.denominator)
        if excess < 0:
            return 0j
        if excess == 0:
            return self.numerator[-1] / self.denominator[-1]
        return complex(math.inf)

    def is_real(self, tol: float = 1e-14) -> bool:
        """True when V is real on the real axis."""
        coefficients = np.concatenate([self.numerator, self.denominator])
        bound = tol * np.max(np.abs(coefficients))
        return bool(np.all(np.abs(coefficients.imag) <= bound))

    def real_maxima(self) -> typing.List[typing.Tuple[float, float]]:
        """
        Local maxima of V on the real axis as ``(x, V(x))``.
        """
        num, den = np.asarray(self.numerator), np.asarray(self.denominator)
        critical = P.polysub(
            P.polymul(P.polyder(num), den), P.polymul(num, P.polyder(den))
        )
        if np.all(critical == 0):
            return []
        maxima = []
        for z, _ in polynomial_roots(critical):
            if abs(z.imag) > 1e-9 * max(1.0, abs(z)):
                continue
            x = z.real
            if abs(P.polyval(x, den)) == 0:
                continue
            h = 1e-4 * max(1.0, abs(x))
            here = self(x).real
            if self(x - h).real < here and self(x + h).real < here:
                maxima.append((x, here))
        return sorted(maxima)

    def to_json(self) -> dict:
        return {
            "num": [[c.real, c.imag] for c in self.numerator],
            "den": [[c.real, c.imag] for c in self.denominator],
        }

    @classmethod
    def from_json(
        cls,
        payload: typing.Mapping[str, typing.Any],
        label: typing.Optional[str] = None,
    ) -> "RationalPotential":
        """
        Build from ``{"num": [[re, im], ...], "den": [[re, im], ...]}``.

        Plain numbers are accepted in place of ``[re, im]`` pairs; ``den``
        defaults to 1.
        """

        def _read(items: typing.Any, what: str) -> typing.List[complex]:
            if not isinstance(items, (list, tuple)):
                raise NonRationalInput(f"'{what}' must be a list")
            values = []
            for item in items:
                if isinstance(item, (list, tuple)):
                    if len(item) != 2:
                        raise NonRationalInput(
                            f"'{what}' entries must be [re, im] pairs"
                        )
                    values.append(complex(float(item[0]), float(item[1])))
                else:
                    values.append(complex(float(item)))
            return values

        try:
            numerator = payload["num"]
        except (KeyError, TypeError):
            raise NonRationalInput("potential JSON needs a 'num' list")
        denominator = payload.get("den", [[1.0, 0.0]])
        return cls(
            tuple(_read(numerator, "num")),
            tuple(_read(denominator, "den")),
            label=label or payload.get("label"),
        )

    @classmethod
    def from_spec(cls, spec: str, **params: typing.Any) -> "RationalPotential":
        """A built-in name, a ``.json`` file path or a JSON literal."""
        return load_potential(spec, **params)


def builtin(
    *names: str,
) -> typing.Callable[[PotentialFactory], PotentialFactory]:
    """
    Register a named potential constructor.

    Examples
    --------
    >>> @builtin("step-well")
    ... def step_well(depth=1.0):
    ...     return RationalPotential((-depth,), (1.0, 0.0, 1.0))
    """

    def decoration(func: PotentialFactory) -> PotentialFactory:
        for name in names:
            BUILTIN_POTENTIALS[name] = func
        return func

    return decoration


@builtin("double-hump")
def double_hump() -> RationalPotential:
    """V(x) = (x**2 - 1) / (x**2 + 1)**2."""
    return RationalPotential(
        (-1.0, 0.0, 1.0), (1.0, 0.0, 2.0, 0.0, 1.0), label="double-hump"
    )


@builtin("coulomb")
def coulomb(
    alpha: float = 2.0, l: int = 0, hbar: float = 1.0
) -> RationalPotential:
    """
    Radial Coulomb potential V_l(r) = -alpha / r + hbar**2 l (l + 1) / r**2.
    """
    if alpha <= 0:
        raise NonRationalInput("coulomb needs alpha > 0")
    if l < 0:
        raise NonRationalInput("coulomb needs l >= 0")
    label = f"coulomb(alpha={alpha:g}, l={l})"
    if l == 0:
        return RationalPotential((-alpha,), (0.0, 1.0), label=label)
    return RationalPotential(
        (hbar**2 * l * (l + 1), -alpha), (0.0, 0.0, 1.0), label=label
    )


@builtin("harmonic")
def harmonic() -> RationalPotential:
    """V(x) = x**2."""
    return RationalPotential((0.0, 0.0, 1.0), label="harmonic")


def named_potential(name: str, **params: typing.Any) -> RationalPotential:
    try:
        factory = BUILTIN_POTENTIALS[name]
    except KeyError:
        raise NonRationalInput(
            f"unknown potential '{name}'; "
            f"known: {', '.join(sorted(BUILTIN_POTENTIALS))}"
        )
    return factory(**params)


def load_potential(spec: str, **params: typing.Any) -> RationalPotential:
    """
    Resolve a potential from a built-in name, a JSON file or a JSON literal.
    """
    if spec in BUILTIN_POTENTIALS:
        return named_potential(spec, **params)
    path = pathlib.Path(spec).expanduser()
    try:
        if path.suffix == ".json" and path.exists():
            with open(path) as fin:
                payload = json.load(fin)
            return RationalPotential.from_json(payload, label=path.stem)
        return RationalPotential.from_json(json.loads(spec))
    except json.JSONDecodeError as err:
        raise NonRationalInput(f"cannot read potential '{spec}': {err}")


@dataclass(frozen=True)
class Singularity:
    location: complex
    order: int

    @property
    def divergent(self) -> bool:
        """W diverges logarithmically or faster at poles of order >= 2."""
        return self.order >= 2


@dataclass(frozen=True)
class SingularityList:
    """
    Finite poles of q~ and its behaviour at infinity.

    Attributes
    ----------
    entries : tuple of Singularity
        Distinct finite poles with orders >= 1.
    infinity_order : int
        ``m`` such that q~ behaves like ``c * x**m`` at infinity.
    infinity_coefficient : complex
        The constant ``c``.
    """

    entries: typing.Tuple[Singularity, ...]
    infinity_order: int
    infinity_coefficient: complex

    @property
    def infinity_divergent(self) -> bool:
        """W diverges at infinity unless q~ decays faster than x**-2."""
        return self.infinity_order >= -2

    @property
    def divergent_poles(self) -> typing.List[Singularity]:
        return [s for s in self.entries if s.divergent]

    def __iter__(self) -> typing.Iterator[Singularity]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class EffectiveQ:
    """
    The Langer-corrected q~(x) = V(x) - E + hbar**2 delta(x).

    Attributes
    ----------
    base : RationalPotential
    energy : complex
    hbar : float
    langer_poles : tuple of complex
        Poles receiving a 1 / (4 (x - z)**2) term.
    numerator, denominator : tuple of complex
        Cleared rational form of q~.
    langer : bool
        False when delta was omitted on request.
    tolerances : Tolerances
    """

    base: RationalPotential
    energy: complex
    hbar: float
    langer_poles: typing.Tuple[complex, ...]
    numerator: Coefficients
    denominator: Coefficients
    langer: bool = True
    tolerances: Tolerances = DEFAULT_TOLERANCES

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return self.value(x)

    def value(self, x: ArrayLike) -> ArrayLike:
        if isinstance(x, (complex, float, int)):
            return horner(self.numerator, complex(x))[0] / self._factored(x)
        x = np.asarray(x, dtype=complex)
        return P.polyval(x, self.numerator) / self._factored(x)

    def _factored(self, x: ArrayLike) -> ArrayLike:
        """
        The denominator as lead * prod (x - z)**m.

        The expanded form loses about |x - z|**-m digits next to a pole of
        order m; the product keeps full relative precision there.
        """
        d = self.denominator[-1] + 0 * np.asarray(x, dtype=complex)
        for s in self.singularities:
            d = d * (np.asarray(x, dtype=complex) - s.location) ** s.order
        return d if np.ndim(d) else complex(d)

    def derivatives(
        self, x: complex
    ) -> typing.Tuple[complex, complex, complex]:
        """q~, q~' and q~'' at a scalar point."""
        x = complex(x)
        n, n1, n2 = horner(self.numerator, x)
        d = self._factored(x)
        # logarithmic derivatives of the factored denominator
        first = sum(s.order / (x - s.location) for s in self.singularities)
        second = sum(
            s.order / (x - s.location) ** 2 for s in self.singularities
        )
        q = n / d
        q1 = n1 / d - q * first
        q2 = n2 / d - 2 * q1 * first - q * (first * first - second)
        return q, q1, q2

    def delta(self, x: ArrayLike) -> ArrayLike:
        total = 0 * np.asarray(x, dtype=complex)
        for z in self.langer_poles:
            total = total + 0.25 / (np.asarray(x, dtype=complex) - z) ** 2
        return total if np.ndim(total) else complex(total)

    def direct(self, x: ArrayLike) -> ArrayLike:
        """V(x) - E + hbar**2 delta(x) evaluated term by term."""
        return self.base(x) - self.energy + self.hbar**2 * self.delta(x)

    def with_energy(self, energy: complex) -> "EffectiveQ":
        return build_effective_q(
            self.base,
            energy,
            self.hbar,
            langer=self.langer,
            tolerances=self.tolerances,
        )

    @functools.cached_property
    def singularities(self) -> SingularityList:
        entries = tuple(
            Singularity(z, m)
            for z, m in polynomial_roots(self.denominator, self.tolerances)
        )
        order = (len(self.numerator) - 1) - (len(self.denominator) - 1)
        coefficient = self.numerator[-1] / self.denominator[-1]
        return SingularityList(entries, order, coefficient)

    @functools.cached_property
    def turning_points(self) -> typing.List[typing.Tuple[complex, int]]:
        poles = [s.location for s in self.singularities]
        merge = self.tolerances.root_merge
        return [
            (z, m)
            for z, m in polynomial_roots(self.numerator, self.tolerances)
            if all(abs(z - p) > merge * max(1.0, abs(p)) for p in poles)
        ]

    @functools.cached_property
    def singular_points(self) -> typing.Tuple[complex, ...]:
        """Poles and turning points together."""
        return tuple(s.location for s in self.singularities) + tuple(
            z for z, _ in self.turning_points
        )

    def nearest_singular_distance(self, x: complex) -> float:
        points = self.singular_points
        if not points:
            return math.inf
        return min(abs(x - z) for z in points)


def build_effective_q(
    potential: RationalPotential,
    E: complex,
    hbar: float,
    langer: bool = True,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> EffectiveQ:
    """
    Build q~ for a potential at energy ``E``.

    A term hbar**2 / (4 (x - z)**2) is added for every first or second order
    pole z of V (the poles of q = V - E); higher order poles and pole-free
    potentials receive none.

    Parameters
    ----------
    potential : RationalPotential
    E : complex
    hbar : float
        Must be non-negative.
    langer : bool
        When False, delta is omitted.
    tolerances : Tolerances

    Returns
    -------
    EffectiveQ

    Raises
    ------
    ValueError
        If ``hbar`` is negative.
    """
    if hbar < 0:
        raise ValueError("hbar must be non-negative")
    E = complex(E)
    num = np.asarray(potential.numerator)
    den = np.asarray(potential.denominator)
    base_num = P.polysub(num, E * den)

    langer_poles = tuple(
        z for z, m in potential.poles if m in (1, 2)
    ) if langer else ()

    if not langer_poles:
        numerator, denominator = base_num, den
    else:
        lift = np.array([1 + 0j])
        for z, m in potential.poles:
            if z in langer_poles and m == 1:
                lift = P.polymul(lift, [-z, 1.0])
        denominator = P.polymul(den, lift)
        numerator = P.polymul(base_num, lift)
        for z in langer_poles:
            quotient, _ = P.polydiv(denominator, P.polyfromroots([z, z]))
            numerator = P.polyadd(numerator, 0.25 * hbar**2 * quotient)

    return EffectiveQ(
        base=potential,
        energy=E,
        hbar=float(hbar),
        langer_poles=langer_poles,
        numerator=_coefficients(numerator, "numerator"),
        denominator=_coefficients(denominator, "denominator"),
        langer=langer,
        tolerances=tolerances,
    )


def classify_singularities(q: EffectiveQ) -> SingularityList:
    """Finite poles of q~ with orders, and the behaviour at infinity."""
    return q.singularities


def find_turning_points(
    q: EffectiveQ,
) -> typing.List[typing.Tuple[complex, int]]:
    """
    Roots of the cleared numerator of q~ with multiplicities, excluding
    points that coincide with poles.

    Raises
    ------
    RootFindingFailed
    """
    return q.turning_points
