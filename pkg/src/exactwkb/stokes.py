"""
Stokes graphs, sectors and canonical paths.

Stokes lines leave each simple turning point along the three directions in
which Re W = 0 locally; they are traced by an arc-length stepper with Newton
projection back onto Re W = 0 and stop at a pole, beyond the truncation
radius, or at a turning point.

Sectors are the domains attached to W-divergent singular endpoints: one per
second order pole and the angular ranges at infinity between asymptotic
Stokes directions. Every divergent pole carries a cut to infinity (up when
Im z > 0, down when Im z < 0, along the negative real axis otherwise); an
infinity range crossed by a cut is split in two. Sector ids are ``P0, P1,
...`` for poles sorted by (Re, Im) and ``I0, I1, ...`` for infinity ranges
sorted by their start angle in [0, 2 pi).

Canonical paths are assembled from anti-Stokes flow lines
dx/ds = conj(p) / |p| along which Re int p increases strictly; a fan of
flows is launched from the source sector and the first flow landing in the
target sector, without crossing a cut or stalling near a turning point, is
audited and returned. Failing that, flows descending from the target are
tried, then a second pair of fans spaced evenly in Im W, and last a short
ascending step joining a forward flow to a backward one. Planning depends
on the graph alone, so the same pair always gets the same path.

Classes
-------
Terminal, StokesLine, Cut, Sector, StokesGraph

Functions
---------
trace_graph
    Build the graph of an effective q.
plan_canonical_path
    Canonical path between two sectors.
"""

from __future__ import annotations

import itertools
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np

from exactwkb.contour import (
    ContourPath,
    EndpointKind,
    continue_roots,
    segment_action,
    track_branch,
)
from exactwkb.errors import (
    BranchAmbiguous,
    CanonicalPathNotFound,
    NonGenericGraph,
    TracingStalled,
)
from exactwkb.potential import EffectiveQ
from exactwkb.settings import Tolerances

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
_GAUSS3 = np.polynomial.legendre.leggauss(3)
_MAX_LINE_STEPS = 20000
_MAX_FLOW_STEPS = 6000
_JUNCTION_POINTS = 256
_JUNCTION_TRIES = 16
# both flows must head into the joining step within 60 degrees
_JUNCTION_COS = 0.5

SectorPair = typing.Tuple[str, str]


def _wrap(angle: float) -> float:
    return angle % TWO_PI


def _sqrt(q: EffectiveQ, x: complex, reference: complex) -> complex:
    r = complex(q.value(x)) ** 0.5
    return -r if (r * reference.conjugate()).real < 0 else r


@dataclass(frozen=True)
class Terminal:
    """Where a Stokes line ends (pole, infinity or turning point)."""

    kind: str
    location: complex
    direction: typing.Optional[float] = None


@dataclass(frozen=True, eq=False)
class StokesLine:
    """
    A traced Stokes line.

    Attributes
    ----------
    origin : complex
        The turning point it leaves.
    polyline : numpy.ndarray
    actions : numpy.ndarray
        W measured from ``origin`` at every vertex.
    terminal : Terminal
    """

    origin: complex
    polyline: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)
    terminal: Terminal

    def drift(self) -> float:
        """max |Re W| / (1 + |Im W|) along the line."""
        ratio = np.abs(self.actions.real) / (1.0 + np.abs(self.actions.imag))
        return float(np.max(ratio))

    def to_csv_rows(self, index: int) -> typing.List[list]:
        return [
            [index, complex(x), complex(w)]
            for x, w in zip(self.polyline, self.actions)
        ]


@dataclass(frozen=True)
class Cut:
    """A ray ``origin + t * direction`` (t > 0) excluded from paths."""

    origin: complex
    direction: complex

    @property
    def exit_angle(self) -> float:
        return _wrap(math.atan2(self.direction.imag, self.direction.real))

    def crosses(self, a: complex, b: complex) -> bool:
        """True when the segment [a, b] meets the ray."""
        # rotate so the ray is the positive real axis from 0
        rotation = self.direction.conjugate()
        u = (a - self.origin) * rotation
        v = (b - self.origin) * rotation
        if (u.imag > 0) == (v.imag > 0) and u.imag != 0 and v.imag != 0:
            return False
        if u.imag == v.imag:
            return u.imag == 0 and max(u.real, v.real) > 0
        t = u.imag / (u.imag - v.imag)
        return u.real + t * (v.real - u.real) > 0


@dataclass(frozen=True)
class Sector:
    """
    Domain attached to a W-divergent singular endpoint.

    Attributes
    ----------
    id : str
    kind : str
        ``pole`` or ``infinity``.
    endpoint : complex
        Pole location, or the unit vector of the mid direction at infinity.
    sigma : int
        Chosen so that sigma * Re W decreases toward the endpoint when W is
        built from the principal root at ``representative``.
    representative : complex
    angle_range : (float, float), optional
        Start angle and width, for infinity sectors.
    bounding_lines : tuple of int
        Indices of Stokes lines terminating on the sector boundary.
    """

    id: str
    kind: str
    endpoint: complex
    sigma: int
    representative: complex
    angle_range: typing.Optional[typing.Tuple[float, float]] = None
    bounding_lines: typing.Tuple[int, ...] = ()

    @property
    def mid_angle(self) -> float:
        if self.angle_range is None:
            raise AttributeError("pole sectors have no angle range")
        start, width = self.angle_range
        return _wrap(start + 0.5 * width)

    def contains_angle(self, angle: float) -> bool:
        if self.angle_range is None:
            return False
        start, width = self.angle_range
        return _wrap(angle - start) < width


@dataclass(eq=False)
class StokesGraph:
    """
    Turning points, Stokes lines, cuts and sectors of one effective q.

    The communication table and canonical paths are computed on demand and
    cached per graph instance. ``cache`` is scratch space for solvers
    working on this graph.
    """

    q: EffectiveQ
    turning_points: typing.Tuple[complex, ...]
    lines: typing.List[StokesLine]
    sectors: typing.Dict[str, Sector]
    cuts: typing.List[Cut]
    tolerances: Tolerances
    radius: float
    _paths: typing.Dict[SectorPair, ContourPath] = field(
        default_factory=dict, repr=False
    )
    _failures: typing.Dict[SectorPair, str] = field(
        default_factory=dict, repr=False
    )
    cache: typing.Dict[typing.Any, typing.Any] = field(
        default_factory=dict, repr=False
    )

    def sector(self, sector_id: str) -> Sector:
        try:
            return self.sectors[sector_id]
        except KeyError:
            raise KeyError(
                f"no sector '{sector_id}'; sectors: {', '.join(self.sectors)}"
            )

    def sector_at_pole(self, z: complex) -> Sector:
        candidates = [s for s in self.sectors.values() if s.kind == "pole"]
        if not candidates:
            raise KeyError("graph has no pole sectors")
        best = min(candidates, key=lambda s: abs(s.endpoint - z))
        if abs(best.endpoint - z) > 1e-6 * max(1.0, abs(z)):
            raise KeyError(f"no pole sector at {z:.6g}")
        return best

    def sector_at_infinity(self, angle: float) -> Sector:
        for s in self.sectors.values():
            if s.kind == "infinity" and s.contains_angle(angle):
                return s
        raise KeyError(f"no infinity sector contains angle {angle:.6g}")

    def conjugate_sector(self, sector_id: str) -> Sector:
        """The sector holding the mirror image of ``sector_id``'s endpoint."""
        s = self.sector(sector_id)
        if s.kind == "pole":
            return self.sector_at_pole(s.endpoint.conjugate())
        return self.sector_at_infinity(_wrap(-s.mid_angle))

    def launch_radius(self, z: complex) -> float:
        others = [p for p in self.q.singular_points if abs(p - z) > 1e-12]
        gap = min((abs(p - z) for p in others), default=1.0)
        return min(0.05, 0.1 * gap)

    def sector_of(self, x: complex) -> typing.Optional[Sector]:
        """The sector whose endpoint neighbourhood contains ``x``."""
        for s in self.sectors.values():
            if s.kind != "pole":
                continue
            if abs(x - s.endpoint) <= 1.5 * self.launch_radius(s.endpoint):
                return s
        if abs(x) >= 0.5 * self.radius:
            try:
                return self.sector_at_infinity(math.atan2(x.imag, x.real))
            except KeyError:
                return None
        return None

    def crosses_cut(self, a: complex, b: complex) -> bool:
        return any(cut.crosses(a, b) for cut in self.cuts)

    def communicates(self, source: str, target: str) -> bool:
        try:
            self.plan(source, target)
        except CanonicalPathNotFound:
            return False
        return True

    @property
    def communication(self) -> typing.List[SectorPair]:
        """Ordered sector pairs joined by a canonical path."""
        return [
            (a, b)
            for a in self.sectors
            for b in self.sectors
            if a != b and self.communicates(a, b)
        ]

    @property
    def planned_paths(self) -> typing.Dict[SectorPair, ContourPath]:
        return dict(self._paths)

    def to_record(self) -> dict:
        return {
            "energy": self.q.energy,
            "hbar": self.q.hbar,
            "turning_points": sorted(
                self.turning_points, key=lambda z: (z.real, z.imag)
            ),
            "poles": sorted(
                (s.location for s in self.q.singularities),
                key=lambda z: (z.real, z.imag),
            ),
            "sectors": {
                s.id: {
                    "kind": s.kind,
                    "endpoint": s.endpoint,
                    "sigma": s.sigma,
                    "representative": s.representative,
                }
                for s in self.sectors.values()
            },
            "lines": [
                {
                    "origin": line.origin,
                    "terminal": line.terminal.kind,
                    "end": line.terminal.location,
                }
                for line in self.lines
            ],
        }

    def to_csv_payload(self) -> dict:
        rows = [
            row
            for index, line in enumerate(self.lines)
            for row in line.to_csv_rows(index)
        ]
        return {"header": ["line", "x", "W"], "rows": rows}

    def plan(self, source: str, target: str) -> ContourPath:
        key = (source, target)
        if key in self._paths:
            return self._paths[key]
        if key in self._failures:
            raise CanonicalPathNotFound(source, target, self._failures[key])
        try:
            path = _plan(self, self.sector(source), self.sector(target))
        except CanonicalPathNotFound as err:
            self._failures[key] = str(err).partition(": ")[2]
            raise
        self._paths[key] = path
        return path


def stokes_directions(q: EffectiveQ, x0: complex) -> typing.List[float]:
    """
    Angles of the three Stokes lines leaving a simple turning point.
    """
    _, slope, _ = q.derivatives(x0)
    phase = 0.5 * math.atan2(slope.imag, slope.real)
    return sorted(
        _wrap((2.0 / 3.0) * (0.5 * math.pi - phase + k * math.pi))
        for k in range(3)
    )


def asymptotic_directions(q: EffectiveQ) -> typing.List[float]:
    """
    Directions at infinity along which Re W stays bounded.

    Empty when infinity is not W-divergent or q~ behaves like x**-2.
    """
    info = q.singularities
    m = info.infinity_order
    if not info.infinity_divergent or m == -2:
        return []
    kappa = 0.5 * m + 1.0
    root_phase = 0.5 * math.atan2(
        info.infinity_coefficient.imag, info.infinity_coefficient.real
    )
    return sorted(
        _wrap((0.5 * math.pi - root_phase + k * math.pi) / kappa)
        for k in range(m + 2)
    )


def _cut_for(z: complex) -> Cut:
    scale = 1e-12 * max(1.0, abs(z))
    if z.imag > scale:
        return Cut(z, 1j)
    if z.imag < -scale:
        return Cut(z, -1j)
    return Cut(z, -1 + 0j)


def _nearest(points: typing.Sequence[complex], x: complex) -> float:
    return min((abs(x - p) for p in points), default=math.inf)


def _project(
    q: EffectiveQ, x: complex, w: complex, r: complex
) -> typing.Tuple[complex, complex, complex]:
    """Newton steps moving ``x`` onto Re W = 0."""
    for _ in range(3):
        if abs(w.real) <= 1e-14 * (1.0 + abs(w)):
            break
        dx = -w.real * r.conjugate() / abs(r) ** 2
        x_new = x + dx
        r_new = _sqrt(q, x_new, r)
        w = w + 0.5 * (r + r_new) * dx
        x, r = x_new, r_new
    return x, w, r


def _chord_action(
    q: EffectiveQ, a: complex, b: complex, ra: complex
) -> complex:
    nodes, weights = _GAUSS3
    d = b - a
    total = 0j
    for node, weight in zip(nodes, weights):
        total += weight * _sqrt(q, a + 0.5 * d * (node + 1.0), ra)
    return 0.5 * d * total


def _trace_line(
    q: EffectiveQ,
    origin: complex,
    angle: float,
    tol: Tolerances,
    radius: float,
) -> StokesLine:
    singular = [p for p in q.singular_points if abs(p - origin) > 1e-12]
    turning = [z for z, _ in q.turning_points]
    poles = [s.location for s in q.singularities]
    gap = _nearest(singular, origin)
    h0 = 0.02 * min(gap, 1.0)
    direction = complex(math.cos(angle), math.sin(angle))
    x = origin + h0 * direction
    r = complex(q.value(x)) ** 0.5
    w = segment_action(q, origin, x, 0j, r, tol.quad_tol)
    x, w, r = _project(q, x, w, r)

    points = [origin, x]
    actions = [0j, w]
    winding = {p: 0.0 for p in poles}
    travelled = abs(x - origin)

    def field_at(
        y: complex, ref: complex, heading: complex
    ) -> typing.Tuple[complex, complex]:
        s = _sqrt(q, y, ref)
        v = 1j * s.conjugate() / abs(s)
        if (v * heading.conjugate()).real < 0:
            v = -v
        return v, s

    for _ in range(_MAX_LINE_STEPS):
        away = travelled > 4 * h0
        d = _nearest(singular + [origin] if away else singular, x)
        h = min(max(0.05 * d, 1e-9), 0.1 * max(1.0, abs(x)))
        if h <= 1e-9:
            raise TracingStalled("Stokes line step collapsed", x)
        k1, s1 = field_at(x, r, direction)
        k2, s2 = field_at(x + 0.5 * h * k1, s1, k1)
        k3, _ = field_at(x + 0.5 * h * k2, s2, k2)
        k4, _ = field_at(x + h * k3, s2, k3)
        x_new = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        w_new = w + _chord_action(q, x, x_new, r)
        r_new = _sqrt(q, x_new, r)
        x_new, w_new, r_new = _project(q, x_new, w_new, r_new)

        step = x_new - x
        if step == 0:
            raise TracingStalled("Stokes line made no progress", x)
        direction = step / abs(step)
        for p in poles:
            winding[p] += float(np.angle((x_new - p) / (x - p)))
        travelled += abs(step)
        x, w, r = x_new, w_new, r_new
        points.append(x)
        actions.append(w)

        if abs(x) > radius:
            terminal = Terminal("infinity", x, math.atan2(x.imag, x.real))
            break
        near_pole = [p for p in poles if abs(x - p) < 10 * tol.clearance]
        if near_pole:
            terminal = Terminal("pole", near_pole[0])
            break
        wound = [p for p, total in winding.items() if abs(total) > 3 * math.pi]
        if wound:
            terminal = Terminal("pole", wound[0])
            break
        away = travelled > 4 * h0
        targets = turning if away else [t for t in turning if t != origin]
        reach = max(10 * tol.clearance, 3 * h)
        hits = [t for t in targets if abs(x - t) < reach]
        if hits:
            t = hits[0]
            w_end = w + segment_action(q, x, t, r, 0j, tol.quad_tol)
            points.append(t)
            actions.append(w_end)
            terminal = Terminal("turning-point", t)
            break
    else:
        raise TracingStalled("Stokes line did not terminate", x)

    return StokesLine(
        origin=origin,
        polyline=np.asarray(points, dtype=complex),
        actions=np.asarray(actions, dtype=complex),
        terminal=terminal,
    )


def _check_generic(q: EffectiveQ, tol: Tolerances) -> typing.List[complex]:
    roots = q.turning_points
    multiple = [z for z, m in roots if m > 1]
    if multiple:
        raise NonGenericGraph(
            "multiple turning points at "
            + ", ".join(f"{z:.6g}" for z in multiple)
        )
    locations = [z for z, _ in roots]
    for a, b in itertools.combinations(locations, 2):
        if abs(a - b) < 10 * tol.clearance:
            raise NonGenericGraph(
                f"turning points {a:.6g} and {b:.6g} nearly collide"
            )
    return sorted(
        locations, key=lambda z: (round(z.real, 12), round(z.imag, 12))
    )


def _build_sectors(
    q: EffectiveQ,
    cuts: typing.List[Cut],
    lines: typing.List[StokesLine],
    radius: float,
) -> typing.Dict[str, Sector]:
    sectors = {}  # type: typing.Dict[str, Sector]
    singular = q.singular_points

    poles = sorted(
        (s for s in q.singularities if s.divergent),
        key=lambda s: (round(s.location.real, 12), round(s.location.imag, 12)),
    )
    for index, pole in enumerate(poles):
        z = pole.location
        cut = _cut_for(z)
        others = [p for p in singular if abs(p - z) > 1e-12]
        rho = min(0.1, 0.25 * _nearest(others, z))
        rep = z - rho * cut.direction
        u_in = (z - rep) / abs(z - rep)
        principal = complex(q.value(rep)) ** 0.5
        sigma = -1 if (principal * u_in).real > 0 else 1
        bounding = tuple(
            k
            for k, line in enumerate(lines)
            if line.terminal.kind == "pole"
            and abs(line.terminal.location - z) < 1e-9
        )
        sector_id = f"P{index}"
        sectors[sector_id] = Sector(
            sector_id, "pole", z, sigma, rep, None, bounding
        )

    directions = asymptotic_directions(q)
    if q.singularities.infinity_divergent:
        bounds = list(directions)
        exits = [cut.exit_angle for cut in cuts]
        if not bounds and not exits:
            bounds = [0.0]
        for angle in exits:
            gaps = [abs(_wrap(angle - b + math.pi) - math.pi) for b in bounds]
            if all(gap > 1e-6 for gap in gaps):
                bounds.append(angle)
        bounds = sorted(set(_wrap(b) for b in bounds))
        ranges = []
        for k, start in enumerate(bounds):
            end = bounds[(k + 1) % len(bounds)]
            width = _wrap(end - start) or TWO_PI
            ranges.append((start, width))
        ranges.sort()
        for index, (start, width) in enumerate(ranges):
            mid = _wrap(start + 0.5 * width)
            unit = complex(math.cos(mid), math.sin(mid))
            rep = radius * unit
            principal = complex(q.value(rep)) ** 0.5
            sigma = -1 if (principal * unit).real > 0 else 1
            bounding = tuple(
                k
                for k, line in enumerate(lines)
                if line.terminal.kind == "infinity"
                and line.terminal.direction is not None
                and min(
                    abs(_wrap(line.terminal.direction - b + math.pi) - math.pi)
                    for b in (start, start + width)
                )
                < 0.15
            )
            sector_id = f"I{index}"
            sectors[sector_id] = Sector(
                sector_id,
                "infinity",
                unit,
                sigma,
                rep,
                (start, width),
                bounding,
            )
    return sectors


def trace_graph(
    q: EffectiveQ,
    with_lines: bool = True,
    tolerances: typing.Optional[Tolerances] = None,
) -> StokesGraph:
    """
    Trace the Stokes graph of ``q``.

    Parameters
    ----------
    q : EffectiveQ
    with_lines : bool
        When False only turning points, cuts and sectors are built; the
        connection solvers need no lines.
    tolerances : Tolerances, optional

    Returns
    -------
    StokesGraph

    Raises
    ------
    NonGenericGraph
        If a turning point is multiple or two lie within ten clearances.
    TracingStalled
        If a line stops making progress.
    """
    tol = tolerances or q.tolerances
    radius = tol.infinity_radius
    turning = _check_generic(q, tol)
    lines = []  # type: typing.List[StokesLine]
    if with_lines:
        for x0 in turning:
            for angle in stokes_directions(q, x0):
                lines.append(_trace_line(q, x0, angle, tol, radius))
        logger.debug(
            "traced %d Stokes lines from %d turning points",
            len(lines),
            len(turning),
        )
    cuts = [_cut_for(s.location) for s in q.singularities if s.divergent]
    sectors = _build_sectors(q, cuts, lines, radius)
    return StokesGraph(
        q=q,
        turning_points=tuple(turning),
        lines=lines,
        sectors=sectors,
        cuts=cuts,
        tolerances=tol,
        radius=radius,
    )


def recessive_root(q: EffectiveQ, x: complex, toward: complex) -> complex:
    """The root p at ``x`` with Re(p * toward) < 0."""
    r = complex(q.value(x)) ** 0.5
    return -r if (r * toward).real > 0 else r


def inward(sector: Sector, x: complex) -> complex:
    """Unit vector at ``x`` pointing toward ``sector``'s endpoint."""
    if sector.kind == "pole":
        step = sector.endpoint - x
        return step / abs(step)
    return x / abs(x)


def _fan_offsets(n: int) -> typing.List[int]:
    """0, 1, -1, 2, -2, ... (n entries)."""
    return [(j + 1) // 2 * (1 if j % 2 else -1) for j in range(n)]


def _flux_angles(graph: StokesGraph, sector: Sector, n: int) -> np.ndarray:
    """
    ``n`` angles on the truncation arc of an infinity sector, spaced evenly
    in accumulated |Im W| so that narrow bundles of flow lines are hit.
    """
    start, width = sector.angle_range  # type: ignore[misc]
    margin = 1e-3
    theta = start + width * np.linspace(margin, 1.0 - margin, 64 * n)
    x = graph.radius * np.exp(1j * theta)
    values = np.asarray(graph.q.value(x), dtype=complex)
    roots = continue_roots(np.sqrt(values))
    step = 0.5 * (roots[1:] + roots[:-1]) * np.diff(x)
    # the small |dW| share keeps the spacing defined where Im W is flat
    weight = np.abs(step.imag) + 1e-3 * np.abs(step)
    flux = np.concatenate([[0.0], np.cumsum(weight)])
    targets = (np.arange(n) + 0.5) / n * flux[-1]
    return np.interp(targets, flux, theta)


def _launches(
    graph: StokesGraph, sector: Sector, n: int, spread: bool = False
) -> typing.List[typing.Tuple[typing.List[complex], complex]]:
    """
    Launch data ``(lead-in points, flow start)`` for a fan out of ``sector``.

    Lead-in points run from the endpoint toward the flow start. The plain
    fan is spaced in angle; with ``spread`` an infinity fan is spaced in
    Im W instead and a pole fan is refined threefold, shifted by half a
    step.
    """
    tol = graph.tolerances
    launches = []
    if sector.kind == "pole":
        z = sector.endpoint
        eps = tol.pole_offset
        rho = graph.launch_radius(z)
        cut_angle = _cut_for(z).exit_angle
        count = 3 * n if spread else n
        shift = 0.5 if spread else 0.0
        for k in _fan_offsets(count):
            angle = cut_angle + math.pi + TWO_PI * (k + shift) / count
            if abs(_wrap(angle - cut_angle + math.pi) - math.pi) < 0.1:
                continue
            u = complex(math.cos(angle), math.sin(angle))
            launches.append(([z + 0.5 * eps * u, z + eps * u], z + rho * u))
        return launches
    if spread:
        angles = list(_flux_angles(graph, sector, n))
    else:
        start, width = sector.angle_range  # type: ignore[misc]
        half = max(n // 2, 1)
        angles = [
            start + width * min(max(0.5 + 0.4 * k / half, 0.1), 0.9)
            for k in _fan_offsets(n)
        ]
    for angle in angles:
        u = complex(math.cos(angle), math.sin(angle))
        launches.append(([2 * graph.radius * u], graph.radius * u))
    return launches


@dataclass(eq=False)
class _Flow:
    """A traced flow: lead-in, visited points with their roots, outcome."""

    lead: typing.List[complex]
    points: typing.List[complex]
    roots: typing.List[complex]
    reached: typing.Optional[Sector]
    reason: str

    def lands_in(self, sector: Sector) -> bool:
        return self.reached is not None and self.reached.id == sector.id


def _flow(
    graph: StokesGraph,
    lead: typing.List[complex],
    start: complex,
    p: complex,
    sign: float,
    origin: Sector,
) -> _Flow:
    """
    Follow dx/ds = sign * conj(p) / |p| from ``start``.

    The result records the visited points, the root p at each, the sector
    reached (None on failure) and a reason. Arrivals at infinity are
    projected onto the truncation circle; returning to ``origin`` counts as
    a failure.
    """
    q = graph.q
    tol = graph.tolerances
    turning = list(graph.turning_points)
    singular = list(q.singular_points)
    weak = [pole.location for pole in q.singularities if not pole.divergent]
    targets = [
        s
        for s in graph.sectors.values()
        if s.kind == "pole" and s.id != origin.id
    ]
    x = start
    points = [x]
    roots = [p]

    def done(reached: typing.Optional[Sector], reason: str) -> _Flow:
        return _Flow(lead, points, roots, reached, reason)

    def heading(y: complex, ref: complex) -> typing.Tuple[complex, complex]:
        s = _sqrt(q, y, ref)
        return sign * s.conjugate() / abs(s), s

    for _ in range(_MAX_FLOW_STEPS):
        d = _nearest(singular, x)
        h = min(max(0.2 * d, 1e-6), 0.1 * max(1.0, abs(x)), 0.5 * graph.radius)
        k1, s1 = heading(x, p)
        k2, s2 = heading(x + 0.5 * h * k1, s1)
        k3, s3 = heading(x + 0.5 * h * k2, s2)
        k4, _ = heading(x + h * k3, s3)
        x_new = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if graph.crosses_cut(x, x_new):
            return done(None, "crossed a cut")
        p = _sqrt(q, x_new, p)
        x = x_new

        if _nearest(turning, x) < 10 * tol.clearance:
            return done(None, "stalled near a turning point")
        if _nearest(weak, x) < 10 * tol.clearance:
            return done(None, "ran into a non-divergent pole")
        if abs(x) >= graph.radius:
            x = graph.radius * x / abs(x)
            points.append(x)
            roots.append(_sqrt(q, x, p))
            reached = graph.sector_of(x)
            if reached is None or reached.id == origin.id:
                return done(None, "returned to its own sector")
            return done(reached, "reached infinity")
        points.append(x)
        roots.append(p)
        for s in targets:
            if abs(x - s.endpoint) <= graph.launch_radius(s.endpoint):
                return done(s, "reached a pole")
    return done(None, "ran out of steps")


def _fan(
    graph: StokesGraph, sector: Sector, n: int, spread: bool, sign: float
) -> typing.Iterator[_Flow]:
    """
    Flows out of ``sector``: ascending for the sector's own recessive
    solution when ``sign`` is 1, descending for the dominant one when -1.
    """
    for lead, start in _launches(graph, sector, n, spread):
        p = sign * recessive_root(graph.q, start, inward(sector, start))
        yield _flow(graph, lead, start, p, sign, sector)


def _thin(size: int) -> np.ndarray:
    count = min(size, _JUNCTION_POINTS)
    return np.unique(np.linspace(0, size - 1, count).round().astype(int))


def _junctions(
    graph: StokesGraph,
    forward: typing.Sequence[_Flow],
    backward: typing.Sequence[_Flow],
) -> typing.List[typing.List[complex]]:
    """
    Waypoints joining a forward flow to a backward one by a straight step.

    Re W must rise into the step from both sides, the roots at its ends
    must agree and the step must stay clear of singular points and cuts.
    Each forward flow offers its shortest admissible step; candidates are
    ordered by step length relative to max(1, |x|).
    """
    if not forward or not backward:
        return []
    singular = np.asarray(graph.q.singular_points, dtype=complex)
    picks = [_thin(len(b.points)) for b in backward]
    owner = np.concatenate([np.full(k.size, i) for i, k in enumerate(picks)])
    local = np.concatenate(picks)
    ends = np.concatenate(
        [np.asarray(b.points)[k] for b, k in zip(backward, picks)]
    )
    end_roots = np.concatenate(
        [np.asarray(b.roots)[k] for b, k in zip(backward, picks)]
    )

    candidates = []  # type: typing.List[typing.Tuple[float, int, int, int]]
    for index, flow in enumerate(forward):
        keep = _thin(len(flow.points))
        a = np.asarray(flow.points, dtype=complex)[keep]
        ra = np.asarray(flow.roots, dtype=complex)[keep]
        if singular.size:
            room = np.min(np.abs(a[:, None] - singular[None, :]), axis=1)
        else:
            room = np.full(a.size, np.inf)
        step = ends[None, :] - a[:, None]
        gap = np.abs(step)
        admissible = (
            (
                (ra[:, None] * step).real
                > _JUNCTION_COS * np.abs(ra)[:, None] * gap
            )
            & (
                (end_roots[None, :] * step).real
                > _JUNCTION_COS * np.abs(end_roots)[None, :] * gap
            )
            & ((ra[:, None] * np.conj(end_roots[None, :])).real > 0)
            & (gap < 0.5 * room[:, None])
        )
        if not admissible.any():
            continue
        score = np.where(
            admissible, gap / np.maximum(1.0, np.abs(a))[:, None], np.inf
        )
        i, j = np.unravel_index(np.argmin(score), score.shape)
        if graph.crosses_cut(complex(a[i]), complex(ends[j])):
            continue
        candidates.append(
            (float(score[i, j]), index, int(keep[i]), int(j))
        )

    candidates.sort()
    joins = []
    for _, index, i, j in candidates[:_JUNCTION_TRIES]:
        flow, other = forward[index], backward[int(owner[j])]
        tail = int(local[j])
        joins.append(
            flow.lead
            + flow.points[: i + 1]
            + other.points[tail::-1]
            + list(reversed(other.lead))
        )
    return joins


def _finish(
    graph: StokesGraph, sector: Sector, last: complex
) -> typing.List[complex]:
    """Closing points from ``last`` toward ``sector``'s endpoint."""
    if sector.kind == "pole":
        z = sector.endpoint
        eps = graph.tolerances.pole_offset
        u = (last - z) / abs(last - z)
        return [z + eps * u, z + 0.5 * eps * u]
    return [2 * last]


def _kind(sector: Sector) -> EndpointKind:
    if sector.kind == "pole":
        return EndpointKind.POLE
    return EndpointKind.INFINITY


def audit_path(path: ContourPath) -> float:
    """
    Largest decrease of Re W between consecutive samples, relative to
    max(1, |W|).

    Zero for a path along which Re W never decreases.
    """
    w = path.actions
    if w.size < 2:
        return 0.0
    drops = -np.diff(w.real) / np.maximum(1.0, np.abs(w[:-1]))
    return float(max(0.0, np.max(drops)))


def _assemble(
    graph: StokesGraph,
    source: Sector,
    target: Sector,
    waypoints: typing.List[complex],
) -> typing.Optional[ContourPath]:
    tol = graph.tolerances
    start = waypoints[0]
    seed = recessive_root(graph.q, start, inward(source, start))
    try:
        path = track_branch(
            graph.q, waypoints, seed, (_kind(source), _kind(target)), tol
        )
        violation = audit_path(path)
    except BranchAmbiguous as err:
        logger.debug(
            "candidate %s -> %s rejected: %s", source.id, target.id, err
        )
        return None
    if violation > tol.audit_tol:
        logger.debug(
            "candidate %s -> %s not monotone (violation %.3e)",
            source.id,
            target.id,
            violation,
        )
        return None
    if violation > 0:
        logger.warning(
            "canonical path %s -> %s grazes the monotonicity bound (%.3e)",
            source.id,
            target.id,
            violation,
        )
    return path


def _plan(graph: StokesGraph, source: Sector, target: Sector) -> ContourPath:
    q = graph.q
    n = max(graph.tolerances.fan_size, 4)
    if source.id == target.id:
        point = _launches(graph, source, n)[0][0][0]
        seed = recessive_root(q, point, inward(source, point))
        return track_branch(
            q, [point, point], seed, (_kind(source),) * 2, graph.tolerances
        )

    def found(how: str, path: ContourPath) -> ContourPath:
        logger.debug(
            "canonical path %s -> %s found by %s", source.id, target.id, how
        )
        return path

    reasons = {}  # type: typing.Dict[str, int]
    forward = []  # type: typing.List[_Flow]
    backward = []  # type: typing.List[_Flow]
    for spread in (False, True):
        for flow in _fan(graph, source, n, spread, 1.0):
            forward.append(flow)
            if not flow.lands_in(target):
                reason = flow.reason
                if flow.reached is not None:
                    reason = f"landed in {flow.reached.id}"
                reasons[reason] = reasons.get(reason, 0) + 1
                continue
            waypoints = (
                flow.lead
                + flow.points
                + _finish(graph, target, flow.points[-1])
            )
            path = _assemble(graph, source, target, waypoints)
            if path is not None:
                return found("forward fan", path)

        # descend from the target, where the source solution dominates
        for flow in _fan(graph, target, n, spread, -1.0):
            backward.append(flow)
            if not flow.lands_in(source):
                continue
            waypoints = (
                list(reversed(_finish(graph, source, flow.points[-1])))
                + list(reversed(flow.points))
                + list(reversed(flow.lead))
            )
            path = _assemble(graph, source, target, waypoints)
            if path is not None:
                return found("backward fan", path)

    for waypoints in _junctions(graph, forward, backward):
        path = _assemble(graph, source, target, waypoints)
        if path is not None:
            return found("joining a forward and a backward flow", path)

    detail = ", ".join(
        f"{count} {label}" for label, count in sorted(reasons.items())
    )
    raise CanonicalPathNotFound(source.id, target.id, detail)


def plan_canonical_path(
    graph: StokesGraph, from_sector: str, to_sector: str
) -> ContourPath:
    """
    A canonical path from ``from_sector``'s endpoint to ``to_sector``'s.

    The path starts half a pole offset from a pole (sampled again at one
    offset) or at twice the truncation radius (sampled again at the radius),
    ends the same way at the target, and carries the branch p of the source
    solution, recessive at the source. Re int p never decreases along it.

    Raises
    ------
    CanonicalPathNotFound
        If no flow line joins the sectors canonically.
    """
    return graph.plan(from_sector, to_sector)
