"""
The chi factor of fundamental solutions.

A fundamental solution is written Psi = p**(-1/2) exp(W / hbar) chi with
p = sigma sqrt(q~) and W = int p dx. chi then solves

    chi'' + (2 p / hbar - p' / p) chi' + p omega chi = 0,
    omega = delta / p - q~'' / (4 p**3) + 5 q~'**2 / (16 p**5),

and has the formal expansion chi = sum_n (-hbar / 2)**n I_n with I_0 = 1
and I_n' = I_{n-1}'' / p - (p' / p**2) I_{n-1}' + omega I_{n-1}.

:func:`chi_ode` integrates the equation along a contour path in arc
length; :func:`series_coefficients` builds I_n on piecewise Chebyshev
panels. Near a second order pole q~ = g(x) / (x - z)**2 with g analytic and
every quantity is evaluated through g, so the cancelling 1 / (x - z) parts
of omega never appear.

Classes
-------
ChiValue
SeriesCoefficients

Functions
---------
omega, chi_ode, series_coefficients, chi_series_eval,
endpoint_omega_integral, translate_series
"""

from __future__ import annotations

import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
import numpy.polynomial.chebyshev as C
import numpy.polynomial.polynomial as P
from scipy.integrate import solve_ivp

from exactwkb.contour import ContourPath, EndpointKind, align, integrate_unit
from exactwkb.errors import (
    EvaluationAtSingularity,
    NonCanonicalPath,
    StiffnessFailure,
)
from exactwkb.potential import EffectiveQ

logger = logging.getLogger(__name__)

_NODES = 16
_T = C.chebpts1(_NODES)
_VINV = np.linalg.inv(C.chebvander(_T, _NODES - 1))
MAX_SERIES_ORDER = 6


@dataclass(frozen=True, eq=False)
class ChiValue:
    """
    A chi factor at the far end of a path.

    Attributes
    ----------
    value : complex
        chi at the end, extrapolated to the singular endpoint when the path
        ends at one.
    sigma : int
    path : ContourPath
    error_estimate : float
    method : str
        ``"ode"`` or ``"series(N)"``.
    last : complex
        chi at the last sample before extrapolation.
    trace : numpy.ndarray, optional
        Rows of (arc length, chi, dchi/dx) when a trace was requested.
    """

    value: complex
    sigma: int
    path: typing.Optional[ContourPath] = field(repr=False)
    error_estimate: float
    method: str
    last: complex = 0j
    trace: typing.Optional[np.ndarray] = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "sigma": self.sigma,
            "error_estimate": self.error_estimate,
            "method": self.method,
        }

    def to_csv_payload(self) -> dict:
        if self.trace is None:
            raise ValueError("chi value was computed without a trace")
        rows = [
            [float(s.real), complex(v), complex(d)] for s, v, d in self.trace
        ]
        return {"header": ["s", "chi", "dchi_dx"], "rows": rows}


@dataclass(frozen=True, eq=False)
class SeriesCoefficients:
    """
    I_0..I_N at ``point`` relative to ``base``.

    ``None`` for ``base`` or ``point`` stands for infinity. ``J`` holds the
    derivatives I_n' at ``point``. When ``C`` is given the expansion at
    ``point`` is sum_p C_p I_{n-p} (the standard form with constants C_p).
    """

    I: typing.Tuple[complex, ...]
    J: typing.Tuple[complex, ...]
    base: typing.Optional[complex]
    point: typing.Optional[complex]
    path: typing.Optional[ContourPath] = field(default=None, repr=False)
    C: typing.Optional[typing.Tuple[complex, ...]] = None

    @property
    def order(self) -> int:
        return len(self.I) - 1

    def kappa(self) -> typing.Tuple[complex, ...]:
        """Coefficients of (-sigma hbar / 2)**n in chi."""
        if self.C is None:
            return self.I
        return translate_series(self.C, self.I)


def translate_series(
    at_base: typing.Sequence[complex], increments: typing.Sequence[complex]
) -> typing.Tuple[complex, ...]:
    """
    chi coefficients at x from those at x0 and I_n(x, x0).

    kappa_n(x) = sum_p kappa_p(x0) I_{n-p}(x, x0).
    """
    n = min(len(at_base), len(increments))
    return tuple(
        complex(sum(at_base[k] * increments[m - k] for k in range(m + 1)))
        for m in range(n)
    )


@dataclass(frozen=True)
class _Deflated:
    z: complex
    g_num: np.ndarray
    g_den: np.ndarray
    langer: float
    others: typing.Tuple[complex, ...]
    radius: float


def _quotient(
    num: np.ndarray, den: np.ndarray, x: np.ndarray
) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n0 = P.polyval(x, num)
    n1 = P.polyval(x, P.polyder(num))
    n2 = P.polyval(x, P.polyder(num, 2))
    d0 = P.polyval(x, den)
    d1 = P.polyval(x, P.polyder(den))
    d2 = P.polyval(x, P.polyder(den, 2))
    f0 = n0 / d0
    f1 = (n1 - f0 * d1) / d0
    f2 = (n2 - 2 * f1 * d1 - f0 * d2) / d0
    return f0, f1, f2


class _Field:
    """
    p, 1/p, p'/p**2 and omega along arrays of points.

    Branches follow ``ref``, an array of approximate values of p.
    """

    def __init__(self, q: EffectiveQ):
        self.q = q
        self.num = np.asarray(q.numerator, dtype=complex)
        self.den = np.asarray(q.denominator, dtype=complex)
        self.deflated = []  # type: typing.List[_Deflated]
        for s in q.singularities:
            if s.order != 2:
                continue
            z = s.location
            g_den, _ = P.polydiv(self.den, P.polyfromroots([z, z]))
            same = [
                abs(z - w) <= 1e-8 * max(1.0, abs(w)) for w in q.langer_poles
            ]
            langer = 0.25 if any(same) else 0.0
            others = tuple(
                w for w, hit in zip(q.langer_poles, same) if not hit
            )
            neighbours = [w for w in q.singular_points if abs(w - z) > 1e-12]
            radius = 0.2 * min((abs(w - z) for w in neighbours), default=5.0)
            self.deflated.append(
                _Deflated(
                    z, self.num, np.asarray(g_den), langer, others, radius
                )
            )

    def delta(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros_like(x)
        for w in self.q.langer_poles:
            total = total + 0.25 / (x - w) ** 2
        return total

    def evaluate(
        self, x: np.ndarray, ref: np.ndarray
    ) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (p, 1/p, p'/p**2, omega)."""
        x = np.asarray(x, dtype=complex)
        ref = np.asarray(ref, dtype=complex)
        q0, q1, q2 = _quotient(self.num, self.den, x)
        if np.any(q0 == 0) or not np.all(np.isfinite(q0)):
            raise EvaluationAtSingularity(
                "omega requested at a turning point or pole"
            )
        p = align(np.sqrt(q0), ref)
        p3 = p**3
        inv_p = 1.0 / p
        dpp = q1 / (2 * p3)
        omega = (
            self.delta(x) * inv_p
            - q2 / (4 * p3)
            + 5 * q1**2 / (16 * p3 * p * p)
        )

        for d in self.deflated:
            t = x - d.z
            mask = np.abs(t) < d.radius
            if not np.any(mask):
                continue
            tm = t[mask]
            g0, g1, g2 = _quotient(d.g_num, d.g_den, x[mask])
            rg = align(np.sqrt(g0), ref[mask] * tm)
            rg3 = rg**3
            reg = np.zeros_like(tm)
            for w in d.others:
                reg = reg + 0.25 / (x[mask] - w) ** 2
            p[mask] = rg / tm
            inv_p[mask] = tm / rg
            dpp[mask] = (g1 * tm - 2 * g0) / (2 * rg3)
            omega[mask] = (
                reg * tm / rg
                - g2 * tm / (4 * rg3)
                - g1 / (4 * rg3)
                + 5 * g1**2 * tm / (16 * rg3 * rg * rg)
                + (d.langer - 0.25) / (tm * rg)
            )
        return p, inv_p, dpp, omega

    def pole_data(self, z: complex) -> typing.Optional[_Deflated]:
        for d in self.deflated:
            if abs(d.z - z) <= 1e-8 * max(1.0, abs(z)):
                return d
        return None


def omega(
    q: EffectiveQ, x: complex, seed: typing.Optional[complex] = None
) -> complex:
    """
    omega(x) on the branch of sqrt(q~) closest to ``seed``.

    The principal root is used when ``seed`` is None.

    Raises
    ------
    EvaluationAtSingularity
        At a pole or a turning point.
    """
    x = complex(x)
    if any(abs(x - z) == 0 for z in q.singular_points):
        raise EvaluationAtSingularity(f"omega is singular at {x:.6g}")
    ref = complex(q.value(x)) ** 0.5 if seed is None else complex(seed)
    _, _, _, w = _Field(q).evaluate(np.array([x]), np.array([ref]))
    return complex(w[0])


# -- Chebyshev panels ---------------------------------------------------------


@dataclass(frozen=True)
class _Panel:
    x: np.ndarray
    x_t: np.ndarray
    ref: np.ndarray


def _segment_panel(a: complex, b: complex, ra: complex, rb: complex) -> _Panel:
    frac = 0.5 * (_T + 1.0)
    return _Panel(
        x=a + (b - a) * frac,
        x_t=np.full(_NODES, 0.5 * (b - a), dtype=complex),
        ref=ra + (rb - ra) * frac,
    )


def _pole_panel(z: complex, b: complex, rb: complex, outward: bool) -> _Panel:
    """Straight panel between the pole ``z`` and ``b``, from z if outward."""
    frac = 0.5 * (_T + 1.0)
    if outward:
        x = z + (b - z) * frac
        x_t = np.full(_NODES, 0.5 * (b - z), dtype=complex)
    else:
        x = b + (z - b) * frac
        x_t = np.full(_NODES, 0.5 * (z - b), dtype=complex)
    return _Panel(x=x, x_t=x_t, ref=rb * (b - z) / (x - z))


def _tail_panel(b: complex, rb: complex, m: int, outward: bool) -> _Panel:
    """
    Panel between ``b`` and infinity along x = b / v**k, v in (0, 1].

    k = 2 for odd growth orders so that p stays single valued in v.
    """
    k = 2 if m % 2 else 1
    if outward:
        v = 0.5 * (1.0 - _T)
        dv = -0.5
    else:
        v = 0.5 * (1.0 + _T)
        dv = 0.5
    x = b / v**k
    x_t = -k * b / v ** (k + 1) * dv
    ref = rb * v ** (-0.5 * k * m)
    return _Panel(
        x=x.astype(complex),
        x_t=x_t.astype(complex),
        ref=ref.astype(complex),
    )


def _split(
    a: complex, b: complex, singular: typing.Sequence[complex]
) -> typing.List[complex]:
    """Interior points cutting [a, b] into pieces no longer than half the
    distance from their start to the nearest singular point."""
    cuts = []
    current = a
    total = abs(b - a)
    if total == 0:
        return cuts
    direction = (b - a) / total
    for _ in range(10000):
        gap = min((abs(current - z) for z in singular), default=math.inf)
        step = 0.5 * gap
        if abs(b - current) <= step:
            break
        current = current + step * direction
        cuts.append(current)
    return cuts


def _path_panels(path: ContourPath) -> typing.List[_Panel]:
    singular = list(path.q.singular_points)
    panels = []
    points, roots = path.points, path.roots
    for k in range(len(points) - 1):
        a, b = complex(points[k]), complex(points[k + 1])
        if a == b:
            continue
        ra, rb = complex(roots[k]), complex(roots[k + 1])
        nodes = [a] + _split(a, b, singular) + [b]
        for lo, hi in zip(nodes[:-1], nodes[1:]):
            f0 = abs(lo - a) / abs(b - a)
            f1 = abs(hi - a) / abs(b - a)
            r_lo, r_hi = ra + (rb - ra) * f0, ra + (rb - ra) * f1
            panels.append(_segment_panel(lo, hi, r_lo, r_hi))
    return panels


def _nearest_pole(q: EffectiveQ, x: complex) -> complex:
    poles = [s.location for s in q.singularities]
    if not poles:
        raise ValueError("q has no poles")
    return min(poles, key=lambda z: abs(z - x))


def _sweep(
    fld: _Field,
    panels: typing.Sequence[_Panel],
    order: int,
    start: typing.Optional[typing.Sequence[complex]] = None,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Carry I_0..I_order across panels; return I_n and I_n' at the last node.
    """
    values = np.zeros(order + 1, dtype=complex)
    values[0] = 1.0
    if start is not None:
        values[: len(start)] = start
    slopes = np.zeros(order + 1, dtype=complex)
    for panel in panels:
        _, inv_p, dpp, w = fld.evaluate(panel.x, panel.ref)
        previous_i = np.full(_NODES, values[0], dtype=complex)
        previous_j = np.zeros(_NODES, dtype=complex)
        ends = [values[0]]
        end_slopes = [0j]
        for n in range(1, order + 1):
            coeffs = _VINV @ previous_j
            curvature = C.chebval(_T, C.chebder(coeffs)) / panel.x_t
            current_j = inv_p * curvature - dpp * previous_j + w * previous_i
            integral = C.chebint(_VINV @ (current_j * panel.x_t), lbnd=-1)
            current_i = values[n] + C.chebval(_T, integral)
            ends.append(values[n] + C.chebval(1.0, integral))
            end_slopes.append(C.chebval(1.0, _VINV @ current_j))
            previous_i, previous_j = current_i, current_j
        values = np.asarray(ends, dtype=complex)
        slopes = np.asarray(end_slopes, dtype=complex)
    return values, slopes


def series_coefficients(
    q: EffectiveQ, path: ContourPath, N: int, anchored: bool = True
) -> SeriesCoefficients:
    """
    I_0..I_N at the end of ``path`` on the path's branch of sqrt(q~).

    Parameters
    ----------
    q : EffectiveQ
    path : ContourPath
    N : int
        Highest order, at most 6.
    anchored : bool
        When True and the path starts (ends) at a pole or at infinity, the
        base (the evaluation point) is the singular endpoint itself rather
        than the first (last) sample.

    Returns
    -------
    SeriesCoefficients

    Raises
    ------
    ValueError
        If ``N`` is negative or exceeds 6.
    """
    if not 0 <= N <= MAX_SERIES_ORDER:
        raise ValueError(f"series order must lie in [0, {MAX_SERIES_ORDER}]")
    fld = _Field(q)
    m = q.singularities.infinity_order
    panels = []
    base = path.start  # type: typing.Optional[complex]
    point = path.end  # type: typing.Optional[complex]
    first, last = path.endpoint_kinds
    if anchored and first is EndpointKind.POLE:
        base = _nearest_pole(q, path.start)
        panels.append(_pole_panel(base, path.start, path.seed, outward=True))
    elif anchored and first is EndpointKind.INFINITY:
        base = None
        panels.append(_tail_panel(path.start, path.seed, m, outward=False))
    panels.extend(_path_panels(path))
    if anchored and last is EndpointKind.POLE:
        point = _nearest_pole(q, path.end)
        panels.append(
            _pole_panel(point, path.end, path.end_root, outward=False)
        )
    elif anchored and last is EndpointKind.INFINITY:
        point = None
        panels.append(_tail_panel(path.end, path.end_root, m, outward=True))

    if N == 0 or not panels:
        values = np.zeros(N + 1, dtype=complex)
        values[0] = 1.0
        slopes = np.zeros(N + 1, dtype=complex)
    else:
        values, slopes = _sweep(fld, panels, N)
    logger.debug("series to order %d over %d panels", N, len(panels))
    return SeriesCoefficients(
        I=tuple(complex(v) for v in values),
        J=tuple(complex(v) for v in slopes),
        base=base,
        point=point,
        path=path,
    )


def chi_series_eval(
    coeffs: SeriesCoefficients, sigma: int, hbar: float
) -> ChiValue:
    """
    Partial sum sum_n (-sigma hbar / 2)**n kappa_n.

    The error estimate is the magnitude of the last retained term.
    """
    factor = -sigma * hbar / 2.0
    kappa = coeffs.kappa()
    terms = [k * factor**n for n, k in enumerate(kappa)]
    value = complex(sum(terms))
    return ChiValue(
        value=value,
        sigma=sigma,
        path=coeffs.path,
        error_estimate=float(abs(terms[-1])) if len(terms) > 1 else 0.0,
        method=f"series({coeffs.order})",
        last=value,
    )


def endpoint_omega_integral(
    q: EffectiveQ,
    z: complex,
    x: complex,
    seed: typing.Optional[complex] = None,
    tol: typing.Optional[float] = None,
) -> complex:
    """
    int_z^x omega along the segment from the singular point ``z``.

    Raises
    ------
    QuadratureNotConverged
        When omega is not integrable at ``z``, as at a Coulomb origin
        without the Langer term.
    """
    fld = _Field(q)
    ref_end = complex(q.value(x)) ** 0.5 if seed is None else complex(seed)
    span = x - z

    def integrand(t: float) -> np.ndarray:
        points = np.array([z + span * t])
        # arg p is constant along a ray out of a pole to leading order
        _, _, _, w = fld.evaluate(points, np.full_like(points, ref_end))
        return span * w

    value = integrate_unit(integrand, tol or q.tolerances.quad_tol)
    return complex(value[0])


# -- ODE ----------------------------------------------------------------------


class _Profile:
    """Position, direction and reference root along a path in arc length."""

    def __init__(self, path: ContourPath, sigma: int):
        points = np.asarray(path.points, dtype=complex)
        roots = sigma * np.asarray(path.roots, dtype=complex)
        keep = np.concatenate([[True], np.abs(np.diff(points)) > 0])
        self.points = points[keep]
        self.roots = roots[keep]
        steps = np.abs(np.diff(self.points))
        self.arclength = np.concatenate([[0.0], np.cumsum(steps)])
        self.length = float(self.arclength[-1])

    def locate(self, s: float) -> typing.Tuple[complex, complex, complex]:
        k = int(np.searchsorted(self.arclength, s, side="right")) - 1
        k = min(max(k, 0), len(self.points) - 2)
        span = self.arclength[k + 1] - self.arclength[k]
        frac = (s - self.arclength[k]) / span
        a, b = self.points[k], self.points[k + 1]
        x = a + frac * (b - a)
        ref = self.roots[k] + frac * (self.roots[k + 1] - self.roots[k])
        return complex(x), complex((b - a) / abs(b - a)), complex(ref)

    def arclength_of(self, x: complex) -> float:
        hits = np.flatnonzero(self.points == x)
        if hits.size:
            k = int(hits[-1])
        else:
            k = int(np.argmin(np.abs(self.points - x)))
        return float(self.arclength[k])


def _audit(path: ContourPath, sigma: int, tol: float) -> None:
    w = sigma * path.actions.real
    if w.size < 2:
        return
    drops = -np.diff(w) / np.maximum(1.0, np.abs(path.actions[:-1]))
    worst = float(np.max(drops))
    if worst > tol:
        k = int(np.argmax(drops))
        raise NonCanonicalPath(
            f"sigma Re W decreases by {worst:.3e} "
            f"near {complex(path.points[k]):.6g}"
        )


def _start_data(
    fld: _Field, path: ContourPath, sigma: int, hbar: float
) -> typing.Tuple[complex, complex]:
    q = fld.q
    kind = path.endpoint_kinds[0]
    p0 = sigma * path.seed
    if kind is EndpointKind.POLE:
        z = _nearest_pole(q, path.start)
        data = fld.pole_data(z)
        t0 = path.start - z
        if data is None:
            return 1 + 0j, 0j
        g0, g1, _ = _quotient(data.g_num, data.g_den, np.array([z]))
        rc = align(np.sqrt(g0), np.array([p0 * t0]))[0]
        omega0 = -g1[0] / (4 * rc**3)
        c1 = -hbar * rc * omega0 / (2 * rc + hbar)
        return complex(1 + c1 * t0), complex(c1)
    if kind is EndpointKind.INFINITY:
        panel = _tail_panel(
            path.start, p0, q.singularities.infinity_order, False
        )
        values, slopes = _sweep(fld, [panel], 2)
        factor = -hbar / 2.0
        chi = sum(values[n] * factor**n for n in range(3))
        slope = sum(slopes[n] * factor**n for n in range(3))
        return complex(chi), complex(slope)
    return 1 + 0j, 0j


def _limit(
    q: EffectiveQ,
    path: ContourPath,
    near: complex,
    far: complex,
    x_near: complex,
    x_far: complex,
) -> complex:
    """Extrapolate samples at the last two waypoints to the endpoint."""
    kind = path.endpoint_kinds[1]
    if kind is EndpointKind.POLE:
        z = _nearest_pole(q, path.end)
        t_near, t_far = abs(x_near - z), abs(x_far - z)
        if t_near == t_far:
            return far
        return (t_near * far - t_far * near) / (t_near - t_far)
    if kind is EndpointKind.INFINITY:
        m = q.singularities.infinity_order
        # chi - chi(infinity) decays like |x|**-kappa
        kappa = 0.5 * m + 1.0 if m > -2 else 1.0
        r_near, r_far = abs(x_near) ** kappa, abs(x_far) ** kappa
        if r_near == r_far:
            return far
        return (r_far * far - r_near * near) / (r_far - r_near)
    return far


def chi_ode(
    q: EffectiveQ,
    path: ContourPath,
    sigma: int = 1,
    hbar: typing.Optional[float] = None,
    *,
    audit: bool = True,
    trace: bool = False,
) -> ChiValue:
    """
    Integrate the chi equation along ``path``.

    Parameters
    ----------
    q : EffectiveQ
    path : ContourPath
        Starts at a pole offset, at twice the truncation radius, or at an
        ordinary point (where chi = 1, chi' = 0).
    sigma : int
        +1 for the branch carried by the path, -1 for the other one.
    hbar : float, optional
        Defaults to the hbar of ``q``.
    audit : bool
        Refuse paths along which sigma Re W decreases.
    trace : bool
        Record chi at every path sample.

    Returns
    -------
    ChiValue

    Raises
    ------
    NonCanonicalPath
    StiffnessFailure
    EvaluationAtSingularity
        If the path starts or ends at a turning point.
    """
    hbar = q.hbar if hbar is None else hbar
    if hbar <= 0:
        raise ValueError("chi needs a positive hbar")
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    if EndpointKind.TURNING_POINT in path.endpoint_kinds:
        raise EvaluationAtSingularity("chi is not defined at a turning point")
    tol = path.tolerances
    if audit:
        _audit(path, sigma, tol.audit_tol)

    profile = _Profile(path, sigma)
    if len(profile.points) < 2 or profile.length == 0:
        return ChiValue(1 + 0j, sigma, path, 0.0, "ode", 1 + 0j)

    fld = _Field(q)
    chi0, slope0 = _start_data(fld, path, sigma, hbar)

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        x, u, ref = profile.locate(s)
        p, _, dpp, w = fld.evaluate(np.array([x]), np.array([ref]))
        pk = p[0]
        friction = 2 * pk / hbar - dpp[0] * pk
        return np.array([u * y[1], -u * (friction * y[1] + pk * w[0] * y[0])])

    ends = path.endpoint_kinds[1] in (
        EndpointKind.POLE,
        EndpointKind.INFINITY,
    )
    x_near = path.end
    if len(path.waypoints) > 1:
        x_near = complex(path.waypoints[-2])
    s_near = profile.arclength_of(x_near) if ends else profile.length
    if trace:
        t_eval = np.unique(np.concatenate([profile.arclength, [s_near]]))
    else:
        t_eval = np.unique([s_near, profile.length])

    def integrate(scale: float) -> typing.Any:
        solution = solve_ivp(
            rhs,
            (0.0, profile.length),
            np.array([chi0, slope0], dtype=complex),
            method="DOP853",
            t_eval=t_eval,
            rtol=scale * tol.ode_rtol,
            atol=scale * tol.ode_atol,
        )
        if not solution.success:
            raise StiffnessFailure(
                f"chi integration stopped at s = {solution.t[-1]:.6g} of "
                f"{profile.length:.6g}: {solution.message}"
            )
        logger.debug(
            "chi integrated over length %.4g with %d evaluations",
            profile.length,
            solution.nfev,
        )
        return solution

    def endpoint(solution: typing.Any) -> typing.Tuple[complex, complex]:
        values = solution.y[0]
        last = complex(values[-1])
        if not ends:
            return last, last
        near = complex(values[int(np.searchsorted(solution.t, s_near))])
        return _limit(q, path, near, last, x_near, path.end), last

    # the same integration at a tenth of the tolerances measures the
    # integration error
    coarse = integrate(1.0)
    fine = integrate(0.1)
    value, last = endpoint(fine)
    error = abs(value - endpoint(coarse)[0]) + abs(value - last)
    rows = np.column_stack([fine.t, fine.y[0], fine.y[1]]) if trace else None
    return ChiValue(value, sigma, path, float(error), "ode", last, rows)
