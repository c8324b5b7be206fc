"""
Complex paths with a continuously tracked branch of sqrt(q~).

A path is a polyline of waypoints. :func:`track_branch` refines it until
consecutive samples of sqrt(q~) change by less than ``branch_continuity``
of their modulus, choosing at every sample the root closest to the previous
one. The accumulated action W(x) = int sqrt(q~) dx is computed lazily by
adaptive Gauss-Kronrod quadrature; segments touching a turning point use the
substitution x = x0 + (x1 - x0) u**2.

Classes
-------
EndpointKind
    What a path end is: turning point, pole offset, infinity truncation or
    ordinary point.
ContourPath
    Refined samples, tracked roots and accumulated action.
LoopContour
    A closed path around declared singular points.

Functions
---------
track_branch, action_integral, loop_integral
    The public operations on paths.
make_loop
    Build an elliptic loop around a set of points.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from exactwkb.errors import (
    BranchAmbiguous,
    BranchNotClosed,
    QuadratureNotConverged,
)
from exactwkb.potential import EffectiveQ
from exactwkb.settings import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

_QUAD_LIMIT = 400
_MAX_INITIAL_PER_SEGMENT = 2048


class EndpointKind(str, enum.Enum):
    TURNING_POINT = "turning-point"
    POLE = "pole"
    INFINITY = "infinity"
    INTERIOR = "interior"


def align(roots: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip each root to the sign closest to its reference value."""
    flip = (roots * np.conj(reference)).real < 0
    return np.where(flip, -roots, roots)


def continue_roots(principal: np.ndarray) -> np.ndarray:
    """
    Make a sequence of square roots continuous by nearest-sign selection.

    Zero samples keep the running sign.
    """
    if principal.size < 2:
        return principal.copy()
    overlap = (principal[1:] * np.conj(principal[:-1])).real
    steps = np.where(overlap < 0, -1.0, 1.0)
    # a zero sample has no orientation: compare across it instead
    zero = principal == 0
    if np.any(zero):
        signs = np.ones(principal.size)
        last = None
        for k, value in enumerate(principal):
            if value == 0:
                signs[k] = signs[k - 1] if k else 1.0
                continue
            if last is not None:
                prev_index, prev_value = last
                signs[k] = signs[prev_index]
                if (value * np.conj(prev_value)).real < 0:
                    signs[k] = -signs[k]
            last = (k, value)
        return signs * principal
    signs = np.concatenate([[1.0], np.cumprod(steps)])
    return signs * principal


def _segment_distance(
    a: np.ndarray, b: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Distance from segment [a_k, b_k] (rows) to every point (columns)."""
    d = (b - a)[:, None]
    rel = points[None, :] - a[:, None]
    length2 = np.abs(d) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(length2 > 0, (rel * np.conj(d)).real / length2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.abs(rel - t * d)


def integrate_unit(
    func: typing.Callable[[float], np.ndarray], tol: float
) -> np.ndarray:
    """
    int_0^1 func(t) dt for a complex vector-valued ``func``.

    Adaptive Gauss-Kronrod from :func:`scipy.integrate.quad_vec`; ``tol`` is
    both the absolute and the relative target on the largest component.

    Raises
    ------
    QuadratureNotConverged
        If the target is not reached within the subinterval limit or the
        integrand is not finite.
    """
    value, error, info = integrate.quad_vec(
        func,
        0.0,
        1.0,
        epsabs=tol,
        epsrel=tol,
        norm="max",
        limit=_QUAD_LIMIT,
        full_output=True,
    )
    value = np.atleast_1d(np.asarray(value, dtype=complex))
    # status 2 means the estimate is down to rounding
    if info.status not in (0, 2) or not np.all(np.isfinite(value)):
        raise QuadratureNotConverged(
            f"quadrature stopped at error {error:.3e} "
            f"after {info.neval} evaluations: {info.message}"
        )
    return value


@dataclass(frozen=True, eq=False)
class ContourPath:
    """
    A refined polyline with the tracked branch of sqrt(q~).

    Attributes
    ----------
    q : EffectiveQ
    waypoints : tuple of complex
        The polyline as requested.
    points : numpy.ndarray
        Refined samples, waypoints included.
    roots : numpy.ndarray
        sqrt(q~) on the tracked branch at every sample.
    endpoint_kinds : (EndpointKind, EndpointKind)
    tolerances : Tolerances
    """

    q: EffectiveQ
    waypoints: typing.Tuple[complex, ...]
    points: np.ndarray = field(repr=False)
    roots: np.ndarray = field(repr=False)
    endpoint_kinds: typing.Tuple[EndpointKind, EndpointKind]
    tolerances: Tolerances = field(default=DEFAULT_TOLERANCES, repr=False)

    @property
    def start(self) -> complex:
        return complex(self.points[0])

    @property
    def end(self) -> complex:
        return complex(self.points[-1])

    @property
    def seed(self) -> complex:
        return complex(self.roots[0])

    @property
    def end_root(self) -> complex:
        return complex(self.roots[-1])

    def __len__(self) -> int:
        return len(self.points)

    @functools.cached_property
    def arclength(self) -> np.ndarray:
        steps = np.abs(np.diff(self.points))
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @functools.cached_property
    def actions(self) -> np.ndarray:
        """W accumulated from the start at every sample."""
        return _accumulate_actions(self)

    @property
    def action(self) -> complex:
        return complex(self.actions[-1])

    def position(self, s: float) -> complex:
        """Point at arc length ``s`` (clipped to the path)."""
        s = min(max(s, 0.0), self.length)
        k = int(np.searchsorted(self.arclength, s, side="right")) - 1
        k = min(max(k, 0), len(self.points) - 2)
        span = self.arclength[k + 1] - self.arclength[k]
        t = 0.0 if span == 0 else (s - self.arclength[k]) / span
        a, b = self.points[k], self.points[k + 1]
        return complex(a + t * (b - a))

    def root_at(self, x: complex, reference: complex) -> complex:
        """sqrt(q~(x)) on the branch closest to ``reference``."""
        r = complex(np.sqrt(complex(self.q.value(x))))
        return -r if (r * reference.conjugate()).real < 0 else r

    def tangent(self, k: int) -> complex:
        """Unit direction of the segment leaving sample ``k``."""
        k = min(k, len(self.points) - 2)
        step = self.points[k + 1] - self.points[k]
        return complex(step / abs(step)) if step != 0 else 1 + 0j

    def reversed(self) -> "ContourPath":
        return ContourPath(
            q=self.q,
            waypoints=tuple(reversed(self.waypoints)),
            points=self.points[::-1].copy(),
            roots=self.roots[::-1].copy(),
            endpoint_kinds=(self.endpoint_kinds[1], self.endpoint_kinds[0]),
            tolerances=self.tolerances,
        )

    def to_json(self) -> dict:
        return {
            "waypoints": [[z.real, z.imag] for z in self.waypoints],
            "endpoint_kinds": [kind.value for kind in self.endpoint_kinds],
        }

    def to_csv_payload(self) -> dict:
        rows = [
            [float(s), complex(x), complex(r), complex(w)]
            for s, x, r, w in zip(
                self.arclength, self.points, self.roots, self.actions
            )
        ]
        return {"header": ["s", "x", "sqrt_q", "W"], "rows": rows}


def _reroot(seed: complex, q_start: complex) -> complex:
    """
    The square root of ``q_start`` on the sign of ``seed``.

    Seeds computed by another evaluation of q~ near a pole carry its
    rounding, so only the orientation of ``seed`` is trusted; a seed
    farther than 1e-6 (relative) from either root is rejected.
    """
    root = complex(np.sqrt(q_start))
    if (root * seed.conjugate()).real < 0:
        root = -root
    if abs(seed - root) > 1e-6 * max(abs(root), 1e-300):
        raise ValueError(
            f"seed {seed:.6g} does not square to q(start) = {q_start:.6g}"
        )
    return root


def _exempt_points(
    q: EffectiveQ,
    first: complex,
    last: complex,
    kinds: typing.Tuple[EndpointKind, EndpointKind],
) -> typing.List[complex]:
    singular = list(q.singular_points)
    exempt = []
    for end, kind in ((first, kinds[0]), (last, kinds[1])):
        if kind is EndpointKind.TURNING_POINT:
            exempt.extend(
                z for z, _ in q.turning_points if abs(z - end) < 1e-6
            )
        elif kind is EndpointKind.POLE and singular:
            poles = [s.location for s in q.singularities]
            if poles:
                exempt.append(min(poles, key=lambda z: abs(z - end)))
    return exempt


def _initial_grid(
    waypoints: np.ndarray, guard: np.ndarray
) -> np.ndarray:
    a, b = waypoints[:-1], waypoints[1:]
    lengths = np.abs(b - a)
    if guard.size:
        nearest = _segment_distance(a, b, guard).min(axis=1)
    else:
        nearest = np.full(lengths.shape, np.inf)
    pieces = []
    for k in range(len(a)):
        if lengths[k] == 0:
            pieces.append(np.array([a[k]]))
            continue
        spacing = 0.25 * max(nearest[k], 1e-12)
        # two samples at least, so a chord between turning points has a root
        n = int(
            min(
                max(math.ceil(lengths[k] / spacing), 2),
                _MAX_INITIAL_PER_SEGMENT,
            )
        )
        pieces.append(a[k] + (b[k] - a[k]) * np.arange(n) / n)
    pieces.append(np.array([waypoints[-1]]))
    return np.concatenate(pieces)


def track_branch(
    q: EffectiveQ,
    path: typing.Sequence[complex],
    seed: complex,
    endpoint_kinds: typing.Optional[
        typing.Tuple[EndpointKind, EndpointKind]
    ] = None,
    tolerances: typing.Optional[Tolerances] = None,
) -> ContourPath:
    """
    Track the branch of sqrt(q~) agreeing with ``seed`` along a polyline.

    Parameters
    ----------
    q : EffectiveQ
    path : sequence of complex
        Waypoints, at least one.
    seed : complex
        sqrt(q~) at the first waypoint. When the path starts at a turning
        point the seed only orients the branch: the root at the first
        non-zero sample is the one with positive overlap with ``seed``.
    endpoint_kinds : (EndpointKind, EndpointKind), optional
        Inferred from q~ when omitted (turning point when q~ vanishes,
        otherwise interior).
    tolerances : Tolerances, optional
        Defaults to the tolerances of ``q``.

    Returns
    -------
    ContourPath

    Raises
    ------
    ValueError
        If ``seed**2`` does not match q~ at the start.
    BranchAmbiguous
        If refinement exceeds ``max_subdivisions`` passes or the path passes
        within ``clearance`` of a singular point other than a declared
        endpoint.
    """
    tol = tolerances or q.tolerances
    waypoints = np.asarray([complex(z) for z in path], dtype=complex)
    if waypoints.size == 0:
        raise ValueError("a path needs at least one waypoint")
    if waypoints.size == 1:
        waypoints = np.array([waypoints[0], waypoints[0]])

    q_start = complex(q.value(complex(waypoints[0])))
    q_scale = max(1.0, abs(q_start))
    if endpoint_kinds is None:
        q_end = complex(q.value(complex(waypoints[-1])))
        endpoint_kinds = (
            EndpointKind.TURNING_POINT
            if abs(q_start) <= 1e-12 * q_scale
            else EndpointKind.INTERIOR,
            EndpointKind.TURNING_POINT
            if abs(q_end) <= 1e-12 * max(1.0, abs(q_end))
            else EndpointKind.INTERIOR,
        )
    at_turning_point = endpoint_kinds[0] is EndpointKind.TURNING_POINT
    seed = complex(seed)
    if not at_turning_point:
        seed = _reroot(seed, q_start)

    exempt = _exempt_points(
        q, complex(waypoints[0]), complex(waypoints[-1]), endpoint_kinds
    )
    guard = np.array(
        [
            z
            for z in q.singular_points
            if all(abs(z - e) > 1e-12 for e in exempt)
        ],
        dtype=complex,
    )
    if guard.size:
        gap = _segment_distance(waypoints[:-1], waypoints[1:], guard).min()
        if gap < tol.clearance:
            raise BranchAmbiguous(
                f"path passes {gap:.3g} from a singular point "
                f"(clearance {tol.clearance:g})"
            )

    points = _initial_grid(waypoints, guard)
    for passes in range(tol.max_subdivisions + 1):
        values = np.asarray(q.value(points), dtype=complex)
        principal = np.sqrt(values)
        if at_turning_point:
            principal[0] = 0
        if endpoint_kinds[1] is EndpointKind.TURNING_POINT:
            principal[-1] = 0
        roots = continue_roots(principal)
        nonzero = np.flatnonzero(roots != 0)
        if nonzero.size:
            k0 = nonzero[0]
            if (roots[k0] * np.conj(seed)).real < 0:
                roots = -roots

        moduli = np.abs(roots)
        jump = np.abs(np.diff(roots))
        scale = np.minimum(moduli[:-1], moduli[1:])
        bad = jump >= tol.branch_continuity * scale
        # segments touching a zero sample (turning-point ends) are exempt
        bad &= (moduli[:-1] > 0) & (moduli[1:] > 0)
        bad &= np.abs(np.diff(points)) > 0
        if not np.any(bad):
            if passes:
                logger.debug(
                    "branch tracked after %d refinement passes (%d samples)",
                    passes,
                    points.size,
                )
            return ContourPath(
                q=q,
                waypoints=tuple(complex(z) for z in waypoints),
                points=points,
                roots=roots,
                endpoint_kinds=tuple(endpoint_kinds),  # type: ignore[arg-type]
                tolerances=tol,
            )
        index = np.flatnonzero(bad)
        midpoints = 0.5 * (points[index] + points[index + 1])
        points = np.insert(points, index + 1, midpoints)

    raise BranchAmbiguous(
        f"branch of sqrt(q) still discontinuous after "
        f"{tol.max_subdivisions} refinement passes near "
        f"{complex(points[int(np.flatnonzero(bad)[0])]):.6g}"
    )


def _segment_integrand(
    q: EffectiveQ,
    a: np.ndarray,
    b: np.ndarray,
    root_a: np.ndarray,
    root_b: np.ndarray,
) -> typing.Callable[[float], np.ndarray]:
    """
    sqrt(q~) dx/dt on every segment [a_k, b_k] at once, for t in [0, 1].

    A segment with a turning point (zero root) at one end is parametrised
    as x = x0 + (x1 - x0) t**2 from that end, which removes the square-root
    singularity of the integrand.
    """
    a, b, root_a, root_b = (
        np.atleast_1d(np.asarray(v, dtype=complex))
        for v in (a, b, root_a, root_b)
    )
    d = b - a
    from_a = (root_a == 0) & (root_b != 0)
    from_b = (root_b == 0) & (root_a != 0)
    dead = (d == 0) | ((root_a == 0) & (root_b == 0))
    squared = from_a | from_b

    def integrand(t: float) -> np.ndarray:
        x = np.where(
            from_a, a + d * t * t, np.where(from_b, b - d * t * t, a + d * t)
        )
        reference = np.where(
            from_a,
            root_b * t,
            np.where(from_b, root_a * t, root_a + (root_b - root_a) * t),
        )
        jacobian = np.where(squared, 2.0 * d * t, d)
        principal = np.sqrt(np.asarray(q.value(x), dtype=complex))
        return np.where(dead, 0j, jacobian * align(principal, reference))

    return integrand


def segment_action(
    q: EffectiveQ,
    a: complex,
    b: complex,
    root_a: complex,
    root_b: complex,
    tol: float,
) -> complex:
    """
    int_a^b sqrt(q~) dx on the branch interpolating ``root_a`` and
    ``root_b``.
    """
    if a == b or (root_a == 0 and root_b == 0):
        return 0j
    integrand = _segment_integrand(q, a, b, root_a, root_b)
    return complex(integrate_unit(integrand, tol)[0])


def _accumulate_actions(path: ContourPath) -> np.ndarray:
    points, roots = path.points, path.roots
    integrand = _segment_integrand(
        path.q, points[:-1], points[1:], roots[:-1], roots[1:]
    )
    pieces = integrate_unit(integrand, path.tolerances.quad_tol)
    return np.concatenate([[0j], np.cumsum(pieces)])


def action_integral(path: ContourPath) -> complex:
    """
    W = int sqrt(q~) dx along the tracked branch of ``path``.

    Raises
    ------
    QuadratureNotConverged
    """
    return path.action


@dataclass(frozen=True, eq=False)
class LoopContour:
    """
    A closed path encircling ``enclosed`` with the given orientation.

    Attributes
    ----------
    path : ContourPath
        Starts and ends at the same point.
    enclosed : tuple of complex
    orientation : int
        +1 counterclockwise, -1 clockwise.
    """

    path: ContourPath
    enclosed: typing.Tuple[complex, ...]
    orientation: int

    def reversed(self) -> "LoopContour":
        return LoopContour(
            self.path.reversed(), self.enclosed, -self.orientation
        )


def winding_number(vertices: np.ndarray, point: complex) -> int:
    """Winding number of a closed polyline around ``point``."""
    rel = vertices - point
    turns = np.angle(rel[1:] / rel[:-1])
    return int(round(float(np.sum(turns)) / (2 * math.pi)))


def _ellipse(
    centre: complex,
    axis: complex,
    a: float,
    b: float,
    n: int,
    orientation: int,
) -> np.ndarray:
    theta = orientation * np.linspace(0.0, 2 * math.pi, n + 1)
    vertices = centre + axis * (a * np.cos(theta) + 1j * b * np.sin(theta))
    vertices[-1] = vertices[0]
    return vertices


def make_loop(
    q: EffectiveQ,
    enclosed: typing.Sequence[complex],
    orientation: int = 1,
    seed: typing.Optional[complex] = None,
    vertices: int = 256,
    tolerances: typing.Optional[Tolerances] = None,
) -> LoopContour:
    """
    An elliptic loop around ``enclosed`` avoiding every other singular point.

    The ellipse is aligned with the two farthest enclosed points and padded
    by half the distance from the enclosed set to the nearest excluded
    singular point; the padding shrinks until the winding numbers are right.

    Parameters
    ----------
    q : EffectiveQ
    enclosed : sequence of complex
        Points inside the loop; may be empty for an empty loop near 0.
    orientation : int
        +1 counterclockwise, -1 clockwise.
    seed : complex, optional
        sqrt(q~) at the first vertex; principal when omitted.

    Raises
    ------
    BranchNotClosed
        If the loop encloses an odd number of branch points (zeros counted
        with multiplicity, plus odd-order poles).
    ValueError
        If no ellipse separates the enclosed points from the others.
    """
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    tol = tolerances or q.tolerances
    inside = [complex(z) for z in enclosed]
    singular = list(q.singular_points)

    def _inside(z: complex) -> bool:
        return any(abs(z - w) <= 1e-9 * max(1, abs(w)) for w in inside)

    outside = [z for z in singular if not _inside(z)]

    branch_points = 0
    for z, m in q.turning_points:
        if _inside(z):
            branch_points += m
    for pole in q.singularities:
        if _inside(pole.location):
            branch_points += pole.order % 2
    if branch_points % 2:
        raise BranchNotClosed(
            f"loop encloses {branch_points} branch points; "
            "sqrt(q) cannot return to its start value"
        )

    if inside:
        far = max(
            ((u, v) for u in inside for v in inside),
            key=lambda pair: abs(pair[0] - pair[1]),
        )
        centre = 0.5 * (far[0] + far[1])
        span = 0.5 * abs(far[1] - far[0])
        axis = (far[1] - far[0]) / (2 * span) if span > 0 else 1 + 0j
        spread = max(abs(w - centre) for w in inside)
    else:
        centre = 0j if not singular else complex(
            np.mean(singular) + 1.0 + max(abs(z) for z in singular)
        )
        span, axis, spread = 0.0, 1 + 0j, 0.0
    gap = (
        min(abs(z - w) for z in outside for w in inside)
        if outside and inside
        else (
            min(abs(z - centre) for z in outside) if outside else 1.0
        )
    )
    margin = 0.5 * gap

    for _ in range(12):
        a = span + margin
        b = max(margin, spread - span + margin) if span else a
        ring = _ellipse(centre, axis, a, b, vertices, orientation)
        if all(winding_number(ring, w) == orientation for w in inside) and all(
            winding_number(ring, z) == 0 for z in outside
        ):
            break
        margin *= 0.5
    else:
        raise ValueError("no ellipse separates the enclosed points")

    start_root = (
        complex(np.sqrt(complex(q.value(complex(ring[0])))))
        if seed is None
        else complex(seed)
    )
    path = track_branch(
        q,
        ring,
        start_root,
        (EndpointKind.INTERIOR, EndpointKind.INTERIOR),
        tol,
    )
    return LoopContour(path, tuple(inside), orientation)


def loop_integral(q: EffectiveQ, loop: LoopContour) -> complex:
    """
    The closed integral of sqrt(q~) around ``loop``.

    Raises
    ------
    BranchNotClosed
        If the tracked branch does not return to its start value.
    QuadratureNotConverged
    """
    path = loop.path
    mismatch = abs(path.end_root - path.seed)
    if mismatch > 1e-8 * max(abs(path.seed), 1e-300):
        raise BranchNotClosed(
            f"branch returns as {path.end_root:.6g}, "
            f"started as {path.seed:.6g}"
        )
    return path.action
