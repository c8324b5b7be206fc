"""
Connection coefficients and the spectral problems built on them.

Every divergent sector k owns a fundamental solution

    Psi_k = g_k p**(-1/2) exp(W_k / hbar) chi_k,

recessive toward the sector's endpoint. Its normalisation is fixed at an
anchor, the sector's representative point: W_k is measured from the nearest
turning point joined to the anchor by a clean segment (or from the anchor
itself when none is), and g_k makes g_k p**(-1/2) equal to q~**(-1/4) there,
with q~**(-1/4) continued counterclockwise along the truncation circle from
the positive real axis for sectors at infinity. Quantisation conditions,
|R|, |T| and resonance positions do not depend on this choice.

The coefficient alpha_{i/j->k} is the limit of Psi_i / Psi_j at the endpoint
of sector k along canonical paths; its logarithm is carried throughout so
that large action exponents never overflow.

Classes
-------
FundamentalSolution, ConnectionCoefficient, SpectralResult,
ScatteringAmplitudes, ResonanceResult, CoulombPhase, ConnectionSolver

Functions
---------
alpha
    Connection coefficient on a traced graph.
chi_factor
    chi of sector i at the endpoint of sector k.
bound_states, barrier_amplitudes, resonances
    Problems on real potentials with a well between barriers.
coulomb_levels, coulomb_phase
    The radial Coulomb problem.
to_record
    JSON-ready result record.
"""

from __future__ import annotations

import cmath
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from exactwkb.chi import ChiValue, chi_ode, series_coefficients
from exactwkb.contour import (
    ContourPath,
    EndpointKind,
    loop_integral,
    make_loop,
    track_branch,
)
from exactwkb.errors import (
    BranchAmbiguous,
    CanonicalPathNotFound,
    ExactWKBError,
    GraphDegenerate,
    NoResonanceInWindow,
    NoRootInWindow,
    QuadratureNotConverged,
    ResonantDenominator,
    SeedDivergence,
)
from exactwkb.potential import (
    EffectiveQ,
    RationalPotential,
    build_effective_q,
    coulomb,
)
from exactwkb.settings import DEFAULT_TOLERANCES, Tolerances
from exactwkb.stokes import (
    Sector,
    StokesGraph,
    inward,
    recessive_root,
    trace_graph,
)

logger = logging.getLogger(__name__)

MODES = ("exact", "jwkb")
RESONANCE_METHODS = ("complex-root", "perturbative", "jwkb")
RESONANT_THRESHOLD = 1e-6
_FLUX_RADIUS = 10.0


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(
            f"mode must be one of {', '.join(MODES)}, got '{mode}'"
        )


def _logsum(
    logs: typing.Sequence[complex], coefficients: typing.Sequence[complex]
) -> complex:
    """log(sum c_k exp(l_k)) without overflow."""
    top = max(l.real for l in logs)
    total = sum(c * cmath.exp(l - top) for l, c in zip(logs, coefficients))
    if total == 0:
        return complex(-math.inf, 0.0)
    return cmath.log(total) + top


def _exp(log_value: complex) -> complex:
    if log_value.real > 700:
        return complex(math.inf, 0.0)
    return cmath.exp(log_value)


def _log_root_change(roots: np.ndarray) -> complex:
    """log p(end) - log p(start) continued along the sampled roots."""
    roots = np.asarray(roots, dtype=complex)
    phases = np.unwrap(np.angle(roots))
    modulus = math.log(abs(roots[-1]) / abs(roots[0]))
    return complex(modulus, phases[-1] - phases[0])


# -- results ------------------------------------------------------------------


@dataclass(frozen=True)
class FundamentalSolution:
    """
    Normalisation data of the solution recessive in ``sector``.

    Attributes
    ----------
    sector : Sector
    anchor : complex
        Where the normalisation is fixed.
    anchor_root : complex
        p at the anchor, recessive toward the endpoint.
    normalization : complex or None
        Turning point W is measured from.
    reference_action : complex
        W at the anchor.
    log_prefactor : complex
        log(g p**(-1/2)) at the anchor.
    """

    sector: Sector
    anchor: complex
    anchor_root: complex
    normalization: typing.Optional[complex]
    reference_action: complex
    log_prefactor: complex


@dataclass(frozen=True)
class ConnectionCoefficient:
    """
    alpha_{i/j->k} = lim Psi_i / Psi_j at the endpoint of sector k.

    ``value`` is ``exp(log_value)`` (infinite when it overflows).
    """

    i: str
    j: str
    k: str
    value: complex
    log_value: complex
    provenance: typing.Dict[str, typing.Any] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "i": self.i,
            "j": self.j,
            "k": self.k,
            "value": self.value,
            "log_value": self.log_value,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class SpectralResult:
    energy: complex
    residual: float
    method: str
    iterations: int = 0
    provenance: typing.Dict[str, typing.Any] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class ScatteringAmplitudes:
    """
    Reflection and transmission amplitudes for a wave incident from the left.

    The incoming solution is R Psi_2bar + T Psi_1 once each solution is
    scaled to unit flux, so the reflected wave carries -R. The phases of R
    and T follow the anchor normalisation of the module; their moduli are
    physical.
    """

    R: complex
    T: complex
    energy: float
    regime: str
    unitarity_defect: float
    method: str = "exact"
    provenance: typing.Dict[str, typing.Any] = field(default_factory=dict)

    @property
    def reflection(self) -> float:
        return abs(self.R) ** 2

    @property
    def transmission(self) -> float:
        return abs(self.T) ** 2

    def to_record(self) -> dict:
        return {
            "R": self.R,
            "T": self.T,
            "energy": self.energy,
            "regime": self.regime,
            "reflection": self.reflection,
            "transmission": self.transmission,
            "unitarity_defect": self.unitarity_defect,
            "method": self.method,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class ResonanceResult:
    """
    A resonance E0 - i Gamma / 2.

    ``width_ratio`` is Gamma over the height of the lower barrier top above
    E0; it should be small for the result to be meaningful.
    """

    E0: float
    Gamma: float
    method: str
    classical_period: typing.Optional[float] = None
    width_ratio: float = math.nan
    iterations: int = 0
    provenance: typing.Dict[str, typing.Any] = field(default_factory=dict)

    @property
    def energy(self) -> complex:
        return complex(self.E0, -0.5 * self.Gamma)

    def to_record(self) -> dict:
        return {
            "E0": self.E0,
            "Gamma": self.Gamma,
            "method": self.method,
            "classical_period": self.classical_period,
            "width_ratio": self.width_ratio,
            "iterations": self.iterations,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class CoulombPhase:
    S: complex
    phase: float
    unitarity_defect: float
    energy: float
    method: str
    provenance: typing.Dict[str, typing.Any] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "S": self.S,
            "phase": self.phase,
            "unitarity_defect": self.unitarity_defect,
            "energy": self.energy,
            "method": self.method,
            "provenance": self.provenance,
        }


def to_record(
    problem: str,
    params: typing.Mapping[str, typing.Any],
    value: typing.Any,
    residual: typing.Optional[float] = None,
    method: typing.Optional[str] = None,
    provenance: typing.Optional[typing.Mapping[str, typing.Any]] = None,
) -> dict:
    """
    The record ``{problem, params, value, residual, method, provenance}``.

    Missing ``residual``, ``method`` and ``provenance`` are taken from
    ``value`` when it carries them.
    """
    if residual is None:
        defect = getattr(value, "unitarity_defect", None)
        residual = getattr(value, "residual", defect)
    if method is None:
        method = getattr(value, "method", None)
    if provenance is None:
        provenance = getattr(value, "provenance", {})
    return {
        "problem": problem,
        "params": dict(params),
        "value": value,
        "residual": residual,
        "method": method,
        "provenance": dict(provenance),
    }


# -- fundamental solutions ----------------------------------------------------


def _centre(sector: Sector) -> complex:
    return sector.endpoint if sector.kind == "pole" else 0j


def _arc(
    centre: complex, start: complex, target: complex, forbidden: float
) -> typing.List[complex]:
    """
    Points on the circle through ``start`` about ``centre`` up to the
    direction of ``target``, never passing the ``forbidden`` angle.
    """
    radius = abs(start - centre)
    begin = cmath.phase(start - centre)
    a = (begin - forbidden) % (2 * math.pi)
    b = (cmath.phase(target - centre) - forbidden) % (2 * math.pi)
    sweep = b - a
    n = max(8, int(math.ceil(abs(sweep) / (math.pi / 64))))
    angles = begin + np.linspace(0.0, sweep, n + 1)
    points = [complex(z) for z in centre + radius * np.exp(1j * angles)]
    points[0] = start
    if abs(points[-1] - target) > 1e-14 * max(1.0, abs(target)):
        points.append(target)
    else:
        points[-1] = target
    return points


def _forbidden(sector: Sector) -> float:
    """The direction, seen from the centre, opposite the representative."""
    return cmath.phase(sector.representative - _centre(sector)) + math.pi


def _log_quartic_root(q: EffectiveQ, x: complex) -> complex:
    """log q~**(-1/4) at ``x``, continued ccw on |x| = const from x > 0."""
    radius = abs(x)
    theta = cmath.phase(x) % (2 * math.pi)
    n = max(16, int(math.ceil(theta / (math.pi / 256))))
    circle = radius * np.exp(1j * np.linspace(0.0, theta, n + 1))
    values = np.asarray(q.value(circle), dtype=complex)
    phases = np.unwrap(np.angle(values))
    return -0.25 * complex(math.log(abs(values[-1])), phases[-1])


def _normalization(
    graph: StokesGraph, anchor: complex, root: complex
) -> typing.Tuple[typing.Optional[complex], complex]:
    tol = graph.tolerances
    for tp in sorted(graph.turning_points, key=lambda t: abs(t - anchor)):
        if graph.crosses_cut(anchor, tp):
            continue
        try:
            segment = track_branch(
                graph.q,
                [anchor, tp],
                root,
                (EndpointKind.INTERIOR, EndpointKind.TURNING_POINT),
                tol,
            )
        except BranchAmbiguous:
            continue
        return tp, -segment.action
    return None, 0j


def fundamental_solution(
    graph: StokesGraph, sector_id: str
) -> FundamentalSolution:
    """The normalisation data of the solution recessive in ``sector_id``."""
    key = ("solution", sector_id)
    if key in graph.cache:
        return graph.cache[key]
    sector = graph.sector(sector_id)
    q = graph.q
    anchor = sector.representative
    root = recessive_root(q, anchor, inward(sector, anchor))
    normalization, reference = _normalization(graph, anchor, root)
    if sector.kind == "pole":
        log_prefactor = -0.5 * cmath.log(root)
    else:
        log_prefactor = _log_quartic_root(q, anchor)
    solution = FundamentalSolution(
        sector=sector,
        anchor=anchor,
        anchor_root=root,
        normalization=normalization,
        reference_action=reference,
        log_prefactor=log_prefactor,
    )
    graph.cache[key] = solution
    return solution


def _leg(
    graph: StokesGraph, solution: FundamentalSolution, target: complex
) -> ContourPath:
    """Arc about the sector's centre from the anchor, then a ray to target."""
    sector = solution.sector
    centre = _centre(sector)
    points = _arc(centre, solution.anchor, target, _forbidden(sector))
    reach = abs(solution.anchor - centre)
    inside = sector.kind == "pole" and abs(target - centre) < reach
    kinds = (
        EndpointKind.INTERIOR,
        EndpointKind.POLE if inside else EndpointKind.INTERIOR,
    )
    return track_branch(
        graph.q, points, solution.anchor_root, kinds, graph.tolerances
    )


@dataclass(frozen=True)
class _Side:
    """Psi_i continued to the endpoint of a target sector."""

    path: ContourPath
    action: complex
    log_h: complex
    chi: ChiValue


def _same_root(a: complex, b: complex) -> bool:
    return abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1e-300)


def _side(graph: StokesGraph, i: str, k: str, mode: str) -> _Side:
    key = ("side", i, k, mode)
    if key in graph.cache:
        return graph.cache[key]
    solution = fundamental_solution(graph, i)
    path = graph.plan(i, k)
    leg = _leg(graph, solution, path.start)
    if not _same_root(leg.end_root, path.seed):
        raise BranchAmbiguous(
            f"the anchor of {i} reaches the start of {i} -> {k} "
            "on the other branch"
        )
    action = solution.reference_action + leg.action + path.action
    log_h = solution.log_prefactor - 0.5 * (
        _log_root_change(leg.roots) + _log_root_change(path.roots)
    )
    if mode == "exact":
        chi = chi_ode(graph.q, path)
    else:
        chi = ChiValue(1 + 0j, 1, path, 0.0, "jwkb", 1 + 0j)
    side = _Side(path, action, log_h, chi)
    graph.cache[key] = side
    return side


def chi_factor(
    graph: StokesGraph, i: str, k: str, mode: str = "exact"
) -> ChiValue:
    """
    chi of the solution recessive in ``i`` at the endpoint of ``k``.

    Raises
    ------
    CanonicalPathNotFound
    """
    _check_mode(mode)
    if i == k:
        return ChiValue(1 + 0j, 1, None, 0.0, mode, 1 + 0j)
    return _side(graph, i, k, mode).chi


def _log_alpha(
    graph: StokesGraph, i: str, j: str, k: str, mode: str
) -> typing.Tuple[complex, typing.Dict[str, typing.Any]]:
    if k == j:
        raise ValueError(
            f"alpha_{{{i}/{j}->{k}}} diverges: Psi_{j} vanishes there"
        )
    if i == j:
        return 0j, {"mode": mode, "trivial": True}
    if k == i:
        return complex(-math.inf, 0.0), {"mode": mode, "trivial": True}
    first = _side(graph, i, k, mode)
    second = _side(graph, j, k, mode)
    x = first.path.end
    target = graph.sector(k)
    kind = EndpointKind.INFINITY
    if target.kind == "pole":
        kind = EndpointKind.POLE
    arc = track_branch(
        graph.q,
        _arc(_centre(target), second.path.end, x, _forbidden(target)),
        second.path.end_root,
        (kind, kind),
        graph.tolerances,
    )
    if not _same_root(arc.end_root, first.path.end_root):
        raise BranchAmbiguous(
            f"Psi_{i} and Psi_{j} reach {k} on different branches of sqrt(q)"
        )
    hbar = graph.q.hbar
    exponent = (first.action - second.action - arc.action) / hbar
    log_value = (
        cmath.log(first.chi.value)
        - cmath.log(second.chi.value)
        + exponent
        + first.log_h
        - second.log_h
        + 0.5 * _log_root_change(arc.roots)
    )
    provenance = {
        "mode": mode,
        "chi_i": first.chi.value,
        "chi_j": second.chi.value,
        "chi_error": first.chi.error_estimate + second.chi.error_estimate,
        "exponent": exponent,
        "normalization_i": fundamental_solution(graph, i).normalization,
        "normalization_j": fundamental_solution(graph, j).normalization,
    }
    return log_value, provenance


def alpha(
    graph: StokesGraph,
    i: str,
    j: str,
    k: str,
    E: typing.Optional[complex] = None,
    hbar: typing.Optional[float] = None,
    mode: str = "exact",
) -> ConnectionCoefficient:
    """
    alpha_{i/j->k}, the limit of Psi_i / Psi_j at the endpoint of sector k.

    Parameters
    ----------
    graph : StokesGraph
    i, j, k : str
        Sector ids.
    E, hbar : optional
        Checked against the graph's effective q when given.
    mode : str
        ``exact`` integrates chi; ``jwkb`` sets every chi to 1.

    Returns
    -------
    ConnectionCoefficient
        1 when ``i == j`` and 0 when ``k == i``.

    Raises
    ------
    ValueError
        If ``k == j`` or ``E``/``hbar`` disagree with the graph.
    CanonicalPathNotFound
    """
    _check_mode(mode)
    q = graph.q
    scale = 1e-12 * max(1.0, abs(q.energy))
    if E is not None and abs(complex(E) - q.energy) > scale:
        raise ValueError(f"graph was traced at E = {q.energy}, not {E}")
    if hbar is not None and abs(hbar - q.hbar) > 1e-14 * max(1.0, q.hbar):
        raise ValueError(f"graph was traced at hbar = {q.hbar}, not {hbar}")
    log_value, provenance = _log_alpha(graph, i, j, k, mode)
    return ConnectionCoefficient(
        i, j, k, _exp(log_value), log_value, provenance
    )


# -- solver -------------------------------------------------------------------


class ConnectionSolver:
    """
    Graphs and connection coefficients of one potential at fixed hbar.

    One graph is traced per energy and kept, oldest evicted first once
    ``max_graphs`` are held. Paths on a graph do not depend on which
    energies were visited before it.

    Parameters
    ----------
    potential : RationalPotential
    hbar : float
    mode : str
        ``exact`` or ``jwkb`` (every chi set to 1).
    langer : bool
        Include the Langer term in q~.
    tolerances : Tolerances, optional
    """

    max_graphs = 256

    def __init__(
        self,
        potential: RationalPotential,
        hbar: float,
        *,
        mode: str = "exact",
        langer: bool = True,
        tolerances: typing.Optional[Tolerances] = None,
    ):
        _check_mode(mode)
        if hbar <= 0:
            raise ValueError("connection problems need a positive hbar")
        self.potential = potential
        self.hbar = float(hbar)
        self.mode = mode
        self.langer = langer
        self.tolerances = tolerances or DEFAULT_TOLERANCES
        self._graphs = {}  # type: typing.Dict[complex, StokesGraph]

    def __repr__(self) -> str:
        return (
            f"ConnectionSolver({self.potential.label or 'potential'}, "
            f"hbar={self.hbar:g}, mode={self.mode})"
        )

    def q(self, E: complex) -> EffectiveQ:
        return build_effective_q(
            self.potential,
            E,
            self.hbar,
            langer=self.langer,
            tolerances=self.tolerances,
        )

    def graph(self, E: complex) -> StokesGraph:
        E = complex(E)
        if E in self._graphs:
            return self._graphs[E]
        graph = trace_graph(
            self.q(E), with_lines=False, tolerances=self.tolerances
        )
        if len(self._graphs) >= self.max_graphs:
            self._graphs.pop(next(iter(self._graphs)))
        self._graphs[E] = graph
        return graph

    def log_alpha(self, E: complex, i: str, j: str, k: str) -> complex:
        return _log_alpha(self.graph(E), i, j, k, self.mode)[0]

    def alpha(
        self, E: complex, i: str, j: str, k: str
    ) -> ConnectionCoefficient:
        return alpha(self.graph(E), i, j, k, mode=self.mode)

    def chi(self, E: complex, i: str, k: str) -> ChiValue:
        return chi_factor(self.graph(E), i, k, self.mode)


def check_barrier_band(
    potential: RationalPotential,
    E: complex,
    hbar: float,
    tolerances: typing.Optional[Tolerances] = None,
) -> None:
    """
    Refuse energies too close to a real barrier top.

    Raises
    ------
    GraphDegenerate
        If pi |E - V_top| / (hbar sqrt(2 |V''_top|)) is below
        ``tolerances.barrier_band`` for some real maximum of V.
    """
    tol = tolerances or DEFAULT_TOLERANCES
    if not potential.is_real():
        return
    for x, top in potential.real_maxima():
        curvature = complex(potential.derivatives(x)[2]).real
        if curvature >= 0:
            continue
        scale = hbar * math.sqrt(2 * abs(curvature))
        action = math.pi * abs(complex(E).real - top) / scale
        if action < tol.barrier_band:
            raise GraphDegenerate(
                f"E = {complex(E).real:.6g} lies within the band around "
                f"the barrier top V({x:.6g}) = {top:.6g} "
                f"(barrier action {action:.3g} < "
                f"{tol.barrier_band:g})"
            )


def _reference_sectors(graph: StokesGraph) -> typing.Tuple[str, str]:
    """An upper-half-plane sector and its mirror image."""
    poles = [
        s
        for s in graph.sectors.values()
        if s.kind == "pole" and s.endpoint.imag > 0
    ]
    if poles:
        upper = min(
            poles, key=lambda s: (s.endpoint.imag, abs(s.endpoint.real))
        )
    else:
        upper = graph.sector_at_infinity(0.5 * math.pi)
    return upper.id, graph.conjugate_sector(upper.id).id


def _binding_sectors(graph: StokesGraph) -> typing.Tuple[str, str]:
    """Sectors of the solutions decaying at -inf and +inf on the real axis."""
    left = graph.sector_at_infinity(math.pi)
    right = graph.sector_at_infinity(0.0)
    if left.id == right.id:
        raise GraphDegenerate("one sector holds both ends of the real axis")
    return left.id, right.id


def _scattering_sectors(graph: StokesGraph) -> typing.Dict[str, str]:
    """
    Quadrant sectors: ``1`` upper right, ``2`` upper left, ``2bar`` lower
    left, ``1bar`` lower right.
    """
    labels = {
        "1": graph.sector_at_infinity(0.25 * math.pi).id,
        "2": graph.sector_at_infinity(0.75 * math.pi).id,
        "2bar": graph.sector_at_infinity(1.25 * math.pi).id,
        "1bar": graph.sector_at_infinity(1.75 * math.pi).id,
    }
    if len(set(labels.values())) != 4:
        raise GraphDegenerate(
            f"no scattering layout at E = {graph.q.energy:.6g}: "
            f"sectors {labels}"
        )
    return labels


def _log_flux(graph: StokesGraph, sector_id: str, side: float) -> complex:
    """
    log |Psi|**2 of the sector's solution far out on the real axis (chi ~ 1).
    """
    key = ("flux", sector_id, side)
    if key in graph.cache:
        return graph.cache[key]
    solution = fundamental_solution(graph, sector_id)
    leg = _leg(graph, solution, side * _FLUX_RADIUS * graph.radius)
    log_psi = (
        solution.log_prefactor
        - 0.5 * _log_root_change(leg.roots)
        + (solution.reference_action + leg.action) / graph.q.hbar
    )
    graph.cache[key] = 2 * log_psi.real
    return graph.cache[key]


# -- bound states -------------------------------------------------------------


def _binding_window(
    potential: RationalPotential, window: typing.Sequence[float]
) -> typing.Optional[typing.Tuple[float, float]]:
    lo, hi = sorted(float(e) for e in window)
    ceiling = potential.asymptotic_value()
    if math.isfinite(abs(ceiling)):
        if lo >= ceiling.real:
            return None
        hi = min(hi, ceiling.real)
    return lo, hi


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, max(n, 2) + 2)[1:-1]


def _well(q: EffectiveQ) -> typing.Tuple[float, float]:
    """The deepest classically allowed interval between real turning points."""
    real = sorted(
        z.real
        for z, _ in q.turning_points
        if abs(z.imag) <= 1e-8 * max(1.0, abs(z))
    )

    def middle(ab: typing.Tuple[float, float]) -> float:
        return complex(q.value(0.5 * (ab[0] + ab[1]))).real

    pairs = [ab for ab in zip(real, real[1:]) if middle(ab) < 0]
    if not pairs:
        raise NoRootInWindow(
            f"no classically allowed well at E = {q.energy:.6g}"
        )
    return min(pairs, key=middle)


def _loop_phase(q: EffectiveQ, tol: Tolerances) -> float:
    """|closed integral of sqrt(q~) around the well| / hbar."""
    a, b = _well(q)
    loop = make_loop(q, [complex(a), complex(b)], tolerances=tol)
    return abs(loop_integral(q, loop)) / q.hbar


def _well_levels(
    potential: RationalPotential,
    hbar: float,
    lo: float,
    hi: float,
    langer: bool,
    tol: Tolerances,
) -> typing.List[SpectralResult]:
    """Roots of |loop integral| / hbar = (2k + 1) pi in [lo, hi]."""

    def phase(E: float) -> float:
        q = build_effective_q(potential, E, hbar, langer, tol)
        return _loop_phase(q, tol)

    samples = []
    for E in _grid(lo, hi, tol.scan_points):
        try:
            samples.append((float(E), phase(float(E))))
        except ExactWKBError as err:
            logger.debug("loop quantisation skips E = %.6g: %s", E, err)
    if not samples:
        raise NoRootInWindow(
            f"no turning-point loop could be built in [{lo:g}, {hi:g}]"
        )

    levels = []
    for (ea, pa), (eb, pb) in zip(samples, samples[1:]):
        low, high = sorted((pa, pb))
        first = math.ceil((low / math.pi - 1) / 2)
        last = math.floor((high / math.pi - 1) / 2)
        for k in range(max(first, 0), last + 1):
            target = (2 * k + 1) * math.pi
            if not low <= target <= high:
                continue
            root, info = optimize.brentq(
                lambda e: phase(e) - target,
                ea,
                eb,
                xtol=1e-14,
                rtol=4 * np.finfo(float).eps,
                full_output=True,
            )
            residual = abs(phase(root) - target)
            levels.append(
                SpectralResult(
                    complex(root),
                    residual,
                    "jwkb",
                    info.iterations,
                    {"k": k, "langer": langer},
                )
            )
    return _merge(levels, tol)


def _merge(
    results: typing.List[SpectralResult], tol: Tolerances
) -> typing.List[SpectralResult]:
    merged = []  # type: typing.List[SpectralResult]
    for result in sorted(results, key=lambda r: r.energy.real):
        if merged and abs(result.energy - merged[-1].energy) <= tol.root_merge:
            continue
        merged.append(result)
    return merged


def bound_states(
    potential: RationalPotential,
    hbar: float,
    E_window: typing.Sequence[float],
    mode: str = "exact",
    *,
    tolerances: typing.Optional[Tolerances] = None,
    langer: bool = True,
    solver: typing.Optional[ConnectionSolver] = None,
) -> typing.List[SpectralResult]:
    """
    Bound-state energies in a window.

    In exact mode a level is an energy at which the solutions decaying at
    the two ends of the real axis are proportional, i.e. where

        rho(E) = alpha_{left/right -> u} / alpha_{left/right -> u*} = 1

    for an upper-half-plane sector u and its mirror u*. rho is unimodular
    for real E; its phase is scanned on ``scan_points`` energies, each
    crossing of a multiple of 2 pi is bracketed and refined with Brent's
    method. In jwkb mode the levels solve |closed integral of sqrt(q)| =
    (2k + 1) pi hbar around the well, without the Langer term.

    Parameters
    ----------
    potential : RationalPotential
    hbar : float
    E_window : (float, float)
        Clipped to energies below the value of V at infinity.
    mode : str
        ``exact`` or ``jwkb``.

    Returns
    -------
    list of SpectralResult
        Sorted by energy; empty when the window lies above the binding range.

    Raises
    ------
    NoRootInWindow
        If no energy of the scan could be evaluated.
    """
    _check_mode(mode)
    tol = tolerances or (solver.tolerances if solver else DEFAULT_TOLERANCES)
    window = _binding_window(potential, E_window)
    if window is None:
        logger.info("window %s lies above the binding range", tuple(E_window))
        return []
    lo, hi = window
    if mode == "jwkb":
        return _well_levels(potential, hbar, lo, hi, False, tol)

    solver = solver or ConnectionSolver(
        potential, hbar, langer=langer, tolerances=tol
    )

    def log_rho(E: float) -> complex:
        graph = solver.graph(E)
        left, right = _binding_sectors(graph)
        up, down = _reference_sectors(graph)
        return solver.log_alpha(E, left, right, up) - solver.log_alpha(
            E, left, right, down
        )

    samples = []
    for E in _grid(lo, hi, tol.scan_points):
        try:
            samples.append((float(E), log_rho(float(E)).imag))
        except ExactWKBError as err:
            logger.debug("bound-state scan skips E = %.6g: %s", E, err)
    if not samples:
        raise NoRootInWindow(
            f"no energy in [{lo:g}, {hi:g}] could be evaluated"
        )
    energies = [e for e, _ in samples]
    phases = np.unwrap([p for _, p in samples])

    levels = []
    for a in range(len(samples) - 1):
        ea, eb = energies[a], energies[a + 1]
        pa, pb = phases[a], phases[a + 1]
        if abs(pb - pa) >= math.pi:
            logger.warning(
                "phase of rho moves by %.3g between E = %.6g and %.6g; "
                "increase scan_points",
                abs(pb - pa),
                ea,
                eb,
            )
            continue
        low, high = sorted((pa, pb))
        first = math.ceil(low / (2 * math.pi))
        last = math.floor(high / (2 * math.pi))
        for n in range(first, last + 1):
            target = 2 * math.pi * n

            def offset(E: float) -> float:
                return math.remainder(log_rho(E).imag - target, 2 * math.pi)

            try:
                root, info = optimize.brentq(
                    offset,
                    ea,
                    eb,
                    xtol=1e-14,
                    rtol=4 * np.finfo(float).eps,
                    full_output=True,
                )
                rho = _exp(log_rho(root))
            except (ValueError, ExactWKBError) as err:
                logger.warning(
                    "level near E = %.6g not refined: %s", 0.5 * (ea + eb), err
                )
                continue
            residual = abs(rho.imag) / abs(rho)
            levels.append(
                SpectralResult(
                    complex(root),
                    residual,
                    "exact-condition",
                    info.iterations,
                    {"rho": rho, "phase_index": n},
                )
            )
    logger.info("found %d bound states in [%g, %g]", len(levels), lo, hi)
    return _merge(levels, tol)


# -- scattering ---------------------------------------------------------------


def _regime(potential: RationalPotential, E: float) -> str:
    tops = [top for _, top in potential.real_maxima()]
    return "tunneling" if tops and E < max(tops) else "over-barrier"


def _reference_pairs(
    graph: StokesGraph, labels: typing.Mapping[str, str]
) -> typing.List[typing.Tuple[str, str]]:
    """Sector pairs the scattering solutions are matched at, best first."""
    up, down = _reference_sectors(graph)
    used = {labels["1"], labels["2"], labels["2bar"]}
    candidates = [up, down, labels["1bar"]]
    pairs = [(up, down)]
    pairs += [
        (a, b)
        for a in candidates
        for b in candidates
        if a != b and (a, b) != (up, down)
    ]
    return [(a, b) for a, b in pairs if a not in used and b not in used]


def barrier_amplitudes(
    potential: RationalPotential,
    hbar: float,
    E: float,
    mode: str = "exact",
    *,
    tolerances: typing.Optional[Tolerances] = None,
    langer: bool = True,
    solver: typing.Optional[ConnectionSolver] = None,
) -> ScatteringAmplitudes:
    """
    Reflection and transmission amplitudes of a wave incident from the left.

    With 1 the upper-right, 2 the upper-left and 2bar the lower-left sector,
    the solution recessive in 2 is b Psi_1 + a Psi_2bar, where matching at a
    pair of reference sectors (3, 3bar) gives

        a = (alpha_{2/1->3} - alpha_{2/1->3bar})
            / (alpha_{2bar/1->3} - alpha_{2bar/1->3bar}),
        b = alpha_{2/1->3} - a alpha_{2bar/1->3}.

    R = a and T = b up to the flux weights of the three solutions on the
    real axis, so that in ``jwkb`` mode R = i below the barrier top. The
    reflected wave e**(-ikx) of a unit incoming e**(ikx) carries -R. The
    reference pair is the pole pair nearest the real axis when it exists;
    other pairs are tried when no canonical path joins it.

    Raises
    ------
    GraphDegenerate
        Near a barrier top, or when the energy has no scattering layout.
    ResonantDenominator
        When the denominator of ``a`` is below 1e-6 of its terms; the
        partial amplitudes are attached.
    CanonicalPathNotFound
        If no reference pair is reachable.
    """
    _check_mode(mode)
    E = float(E)
    tol = tolerances or (solver.tolerances if solver else DEFAULT_TOLERANCES)
    check_barrier_band(potential, E, hbar, tol)
    solver = solver or ConnectionSolver(
        potential, hbar, mode=mode, langer=langer, tolerances=tol
    )
    graph = solver.graph(E)
    labels = _scattering_sectors(graph)
    one, two, two_bar = labels["1"], labels["2"], labels["2bar"]

    failure = None  # type: typing.Optional[CanonicalPathNotFound]
    for up, down in _reference_pairs(graph, labels):
        try:
            logs = {
                "2/1->3": _log_alpha(graph, two, one, up, mode)[0],
                "2/1->3bar": _log_alpha(graph, two, one, down, mode)[0],
                "2bar/1->3": _log_alpha(graph, two_bar, one, up, mode)[0],
                "2bar/1->3bar": _log_alpha(graph, two_bar, one, down, mode)[0],
            }
        except CanonicalPathNotFound as err:
            logger.debug("reference pair (%s, %s) unusable: %s", up, down, err)
            failure = err
            continue
        break
    else:
        assert failure is not None
        raise failure

    numerator = _logsum([logs["2/1->3"], logs["2/1->3bar"]], [1, -1])
    denominator = _logsum([logs["2bar/1->3"], logs["2bar/1->3bar"]], [1, -1])
    scale = max(logs["2bar/1->3"].real, logs["2bar/1->3bar"].real)
    if denominator.real - scale < math.log(RESONANT_THRESHOLD):
        raise ResonantDenominator(
            f"scattering denominator at E = {E:.6g} is "
            f"{math.exp(denominator.real - scale):.3e} of its terms",
            amplitudes={key: _exp(value) for key, value in logs.items()},
        )
    log_a = numerator - denominator
    log_b = _logsum([logs["2/1->3"], log_a + logs["2bar/1->3"]], [1, -1])

    left, right = -1.0, 1.0
    flux_in = _log_flux(graph, two, left)
    R = _exp(log_a + 0.5 * (_log_flux(graph, two_bar, left) - flux_in))
    T = _exp(log_b + 0.5 * (_log_flux(graph, one, right) - flux_in))
    defect = abs(abs(R) ** 2 + abs(T) ** 2 - 1.0)
    regime = _regime(potential, E)
    logger.info(
        "E = %.6g (%s, %s): |R|^2 = %.6e, |T|^2 = %.6e",
        E,
        regime,
        mode,
        abs(R) ** 2,
        abs(T) ** 2,
    )
    return ScatteringAmplitudes(
        R=R,
        T=T,
        energy=E,
        regime=regime,
        unitarity_defect=defect,
        method=mode,
        provenance={
            "sectors": dict(labels),
            "reference": [up, down],
            "log_alpha": logs,
            "hbar": hbar,
        },
    )


# -- resonances ---------------------------------------------------------------


@dataclass(frozen=True)
class _Barriers:
    """Barrier actions on both sides of a well and the well's period."""

    well: typing.Tuple[float, float]
    theta_left: float
    theta_right: float
    period: float
    top: float


def _endpoint_ratio(
    q: EffectiveQ, a: float, b: float
) -> typing.Callable[[float], float]:
    """q~(x) / ((x - a) (b - x)) with its limits at simple turning points."""
    span = b - a
    at_a = complex(q.derivatives(a)[1]).real / span
    at_b = -complex(q.derivatives(b)[1]).real / span

    def ratio(x: float) -> float:
        d = (x - a) * (b - x)
        if d <= 1e-14 * span * span:
            return at_a if x - a < b - x else at_b
        return complex(q.value(x)).real / d

    return ratio


def _quad_alg(
    func: typing.Callable[[float], float], a: float, b: float, power: float
) -> float:
    value, error = integrate.quad(
        func, a, b, weight="alg", wvar=(power, power), limit=200
    )
    if not math.isfinite(value) or error > 1e-8 * max(1.0, abs(value)):
        raise QuadratureNotConverged(
            f"turning-point quadrature on [{a:.6g}, {b:.6g}] "
            f"reached error {error:.3e}"
        )
    return value


def _barrier_action(q: EffectiveQ, a: float, b: float) -> float:
    """int_a^b sqrt(q~) dx over a classically forbidden interval."""
    ratio = _endpoint_ratio(q, a, b)
    return _quad_alg(lambda x: math.sqrt(max(ratio(x), 0.0)), a, b, 0.5)


def _well_period(q: EffectiveQ, a: float, b: float) -> float:
    """int_a^b dx / sqrt(-q~), the classical period at unit hbar**2 scale."""
    ratio = _endpoint_ratio(q, a, b)
    return _quad_alg(
        lambda x: 1.0 / math.sqrt(max(-ratio(x), 1e-300)), a, b, -0.5
    )


def _barriers(q: EffectiveQ) -> _Barriers:
    a, b = _well(q)
    real = sorted(
        z.real
        for z, _ in q.turning_points
        if abs(z.imag) <= 1e-8 * max(1.0, abs(z))
    )
    outer_left = [x for x in real if x < a - 1e-12]
    outer_right = [x for x in real if x > b + 1e-12]
    if not outer_left or not outer_right:
        raise NoResonanceInWindow(
            f"the well [{a:.6g}, {b:.6g}] at E = {q.energy.real:.6g} is not "
            "enclosed by two barriers"
        )
    c, d = outer_left[-1], outer_right[0]
    tops = [
        top for x, top in q.base.real_maxima() if c < x < a or b < x < d
    ]
    return _Barriers(
        well=(a, b),
        theta_left=_barrier_action(q, c, a),
        theta_right=_barrier_action(q, b, d),
        period=_well_period(q, a, b),
        top=min(tops) if tops else math.nan,
    )


def _gamow_width(barriers: _Barriers, hbar: float) -> float:
    return hbar / barriers.period * (
        math.exp(-2 * barriers.theta_left / hbar)
        + math.exp(-2 * barriers.theta_right / hbar)
    )


def _resonance_function(solver: ConnectionSolver, E: complex) -> complex:
    """
    1 - alpha_{2bar/1->3bar} / alpha_{2bar/1->3}; zero when the solutions
    outgoing to the right and to the left coincide.
    """
    graph = solver.graph(E)
    labels = _scattering_sectors(graph)
    up, down = _reference_sectors(graph)
    one, two_bar = labels["1"], labels["2bar"]
    log_down = solver.log_alpha(E, two_bar, one, down)
    log_up = solver.log_alpha(E, two_bar, one, up)
    return 1.0 - _exp(log_down - log_up)


def _chi_phase(solver: ConnectionSolver, E: float) -> float:
    """Phase of chi_{1->3bar} chi_{2bar->3} / (chi_{1->3} chi_{2bar->3bar})."""
    graph = solver.graph(E)
    labels = _scattering_sectors(graph)
    up, down = _reference_sectors(graph)
    one, two_bar = labels["1"], labels["2bar"]
    ratio = (
        solver.chi(E, one, down).value
        * solver.chi(E, two_bar, up).value
        / (solver.chi(E, one, up).value * solver.chi(E, two_bar, down).value)
    )
    return cmath.phase(ratio)


def _phase_seed(
    solver: ConnectionSolver, E_bs: float, period: float
) -> typing.Tuple[float, float]:
    """
    Shift the loop-quantised energy by the chi phase of the resonance
    condition, linearised with d(loop phase)/dE = period / hbar.

    The sign of the shift is the one giving the smaller |D| on the real
    axis; the shift is then re-evaluated once at the shifted energy.
    Returns the seed and |D| there.
    """
    slope = period / solver.hbar
    shift = _chi_phase(solver, E_bs) / slope
    candidates = []
    for sign in (1.0, -1.0):
        E = E_bs + sign * shift
        candidates.append((abs(_resonance_function(solver, E)), sign))
    _, sign = min(candidates)
    E1 = E_bs + sign * shift
    E2 = E_bs + sign * _chi_phase(solver, E1) / slope
    return E2, abs(_resonance_function(solver, E2))


def _perturbative_width(
    solver: ConnectionSolver, E0: float, barriers: _Barriers
) -> typing.Tuple[float, typing.Dict[str, typing.Any]]:
    graph = solver.graph(E0)
    labels = _scattering_sectors(graph)
    up, down = _reference_sectors(graph)
    across = solver.chi(E0, up, down).value
    right = across / abs(solver.chi(E0, labels["1"], up).value) ** 2
    left = across / abs(solver.chi(E0, labels["2"], up).value) ** 2
    hbar = solver.hbar
    width = hbar / barriers.period * (
        right * math.exp(-2 * barriers.theta_right / hbar)
        + left * math.exp(-2 * barriers.theta_left / hbar)
    )
    return width.real, {
        "chi_across": across,
        "weight_right": right,
        "weight_left": left,
        "imaginary_part": width.imag,
    }


def _secant(
    func: typing.Callable[[complex], complex],
    x0: complex,
    x1: complex,
    tol: Tolerances,
    radius: float,
) -> typing.Tuple[complex, complex, int]:
    f0, f1 = func(x0), func(x1)
    step_tol = 1e-3 * math.sqrt(tol.secant_tol)
    for iteration in range(1, tol.secant_max_iter + 1):
        if f1 == f0:
            raise SeedDivergence(f"secant stalled at E = {x1:.10g}")
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if abs(x2 - x0) > radius:
            raise SeedDivergence(
                f"secant left the neighbourhood of its seed: E = {x2:.6g}"
            )
        x0, f0 = x1, f1
        x1, f1 = x2, func(x2)
        logger.debug(
            "secant %d: E = %.12g, |D| = %.3e", iteration, x1, abs(f1)
        )
        small_step = abs(x1 - x0) <= step_tol * max(1.0, abs(x1))
        if abs(f1) <= tol.secant_tol or small_step:
            return x1, f1, iteration
    raise SeedDivergence(
        f"secant did not converge in {tol.secant_max_iter} iterations "
        f"(|D| = {abs(f1):.3e})"
    )


def resonances(
    potential: RationalPotential,
    hbar: float,
    E0_window: typing.Sequence[float],
    method: str = "complex-root",
    *,
    tolerances: typing.Optional[Tolerances] = None,
    langer: bool = True,
    solver: typing.Optional[ConnectionSolver] = None,
) -> typing.List[ResonanceResult]:
    """
    Quasi-bound levels E0 - i Gamma / 2 of a well between two barriers.

    Seeds are the loop-quantised levels of the well in ``E0_window``.

    ``complex-root``
        Complex secant on D(E) = 1 - alpha_{2bar/1->3bar} / alpha_{2bar/1->3}
        from the phase-corrected seed and the seed lowered by half the
        Gamow width.
    ``perturbative``
        Gamma = (hbar / T) (w_r exp(-2 theta_r / hbar) + w_l exp(-2
        theta_l / hbar)) at the phase-corrected seed, with weights
        w = chi_{3->3bar} / |chi_{k->3}|**2 and T the classical period.
    ``jwkb``
        The same with unit weights, the Gamow width, on q without the
        Langer term.

    Raises
    ------
    NoResonanceInWindow
    SeedDivergence
    """
    if method not in RESONANCE_METHODS:
        raise ValueError(
            f"method must be one of {', '.join(RESONANCE_METHODS)}, "
            f"got '{method}'"
        )
    tol = tolerances or (solver.tolerances if solver else DEFAULT_TOLERANCES)
    lo, hi = sorted(float(e) for e in E0_window)
    use_langer = langer and method != "jwkb"
    try:
        seeds = _well_levels(potential, hbar, lo, hi, use_langer, tol)
    except NoRootInWindow as err:
        raise NoResonanceInWindow(str(err))
    if not seeds:
        raise NoResonanceInWindow(f"no quasi-bound level in [{lo:g}, {hi:g}]")

    results = []
    for seed in seeds:
        E_bs = seed.energy.real
        try:
            check_barrier_band(potential, E_bs, hbar, tol)
        except GraphDegenerate as err:
            logger.warning("skipping the level near %.6g: %s", E_bs, err)
            continue
        q = build_effective_q(potential, E_bs, hbar, use_langer, tol)
        barriers = _barriers(q)
        gamow = _gamow_width(barriers, hbar)
        provenance = {
            "k": seed.provenance["k"],
            "seed": E_bs,
            "theta_left": barriers.theta_left,
            "theta_right": barriers.theta_right,
        }  # type: typing.Dict[str, typing.Any]
        if method == "jwkb":
            results.append(
                ResonanceResult(
                    E_bs,
                    gamow,
                    method,
                    classical_period=barriers.period,
                    width_ratio=gamow / (barriers.top - E_bs),
                    iterations=seed.iterations,
                    provenance=provenance,
                )
            )
            continue

        solver = solver or ConnectionSolver(
            potential, hbar, langer=langer, tolerances=tol
        )
        E0, residual = _phase_seed(solver, E_bs, barriers.period)
        provenance["phase_seed"] = E0
        provenance["seed_residual"] = residual
        if method == "perturbative":
            barriers = _barriers(
                build_effective_q(potential, E0, hbar, use_langer, tol)
            )
            Gamma, extra = _perturbative_width(solver, E0, barriers)
            provenance.update(extra)
            iterations = 0
        else:
            radius = max(0.25 * (hi - lo), 50 * gamow)
            root, value, iterations = _secant(
                lambda E: _resonance_function(solver, E),
                complex(E0),
                complex(E0, -0.5 * gamow),
                tol,
                radius,
            )
            E0, Gamma = root.real, -2.0 * root.imag
            provenance["residual"] = abs(value)
            if Gamma <= 0:
                raise SeedDivergence(
                    f"secant converged to E = {root:.10g}, "
                    "not below the real axis"
                )
        logger.info(
            "resonance E0 = %.10g, Gamma = %.6e (%s)", E0, Gamma, method
        )
        results.append(
            ResonanceResult(
                E0,
                Gamma,
                method,
                classical_period=barriers.period,
                width_ratio=Gamma / (barriers.top - E0),
                iterations=iterations,
                provenance=provenance,
            )
        )
    if not results:
        raise NoResonanceInWindow(
            f"every level in [{lo:g}, {hi:g}] was refused"
        )
    return results


# -- Coulomb ------------------------------------------------------------------


def _coulomb_floor(alpha: float, l: int, hbar: float, langer: bool) -> float:
    """Energy at which the two turning points of the radial problem merge."""
    barrier = (l + 0.5) ** 2 if langer else l * (l + 1)
    if barrier == 0:
        return -math.inf
    return -(alpha**2) / (4 * hbar**2 * barrier)


def _radial_loop_phase(q: EffectiveQ, tol: Tolerances) -> float:
    enclosed = [z for z, _ in q.turning_points]
    enclosed += [pole.location for pole in q.singularities if pole.order % 2]
    loop = make_loop(q, enclosed, tolerances=tol)
    return abs(loop_integral(q, loop)) / q.hbar


def coulomb_levels(
    alpha: float,
    l: int,
    hbar: float,
    k_max: int,
    *,
    tolerances: typing.Optional[Tolerances] = None,
    langer: bool = True,
    check_chi: bool = False,
) -> typing.List[SpectralResult]:
    """
    Radial Coulomb levels from the loop quantisation condition.

    A level sits where |closed integral of sqrt(q~)| = (2k + 1) pi hbar.

    The loop encloses both turning points (and the origin when the Langer
    term is omitted and the origin is a branch point). With the Langer term
    the condition reproduces E = -alpha**2 / (4 hbar**2 (k + l + 1)**2)
    exactly: the chi factors of the two left sectors at the origin are
    complex conjugate and their phases cancel. ``check_chi`` integrates
    both and records the sum of their phases as ``chi_phase_sum``.

    Raises
    ------
    QuadratureNotConverged
    NonRationalInput
        For alpha <= 0 or l < 0.
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    tol = tolerances or DEFAULT_TOLERANCES
    potential = coulomb(alpha, l, hbar)

    def phase(E: float) -> float:
        q = build_effective_q(potential, E, hbar, langer, tol)
        return _radial_loop_phase(q, tol)

    floor = _coulomb_floor(alpha, l, hbar, langer)
    if math.isfinite(floor):
        lower = floor * (1 - 1e-3)
    else:
        lower = -100 * alpha**2 / (4 * hbar**2)
    levels = []
    for k in range(k_max + 1):
        target = (2 * k + 1) * math.pi
        a = lower
        if phase(a) >= target:
            raise QuadratureNotConverged(
                f"loop phase at E = {a:.6g} already exceeds {target:.6g}"
            )
        b = a
        for _ in range(80):
            b = 0.25 * b
            if phase(b) > target:
                break
            a = b
        else:
            raise QuadratureNotConverged(f"no bracket for the level k = {k}")
        root, info = optimize.brentq(
            lambda e: phase(e) - target,
            a,
            b,
            xtol=1e-15,
            rtol=4 * np.finfo(float).eps,
            full_output=True,
        )
        provenance = {
            "k": k,
            "n": k + l + 1,
            "langer": langer,
        }  # type: typing.Dict[str, typing.Any]
        if check_chi:
            provenance["chi_phase_sum"] = _coulomb_chi_phase_sum(
                potential, root, hbar, tol
            )
        levels.append(
            SpectralResult(
                complex(root),
                abs(phase(root) - target),
                "exact-condition" if langer else "jwkb",
                info.iterations,
                provenance,
            )
        )
        lower = root
    return levels


def _coulomb_chi_phase_sum(
    potential: RationalPotential, E: float, hbar: float, tol: Tolerances
) -> float:
    q = build_effective_q(potential, E, hbar, True, tol)
    graph = trace_graph(q, with_lines=False, tolerances=tol)
    origin = graph.sector_at_pole(0j).id
    upper = graph.sector_at_infinity(0.75 * math.pi).id
    lower = graph.sector_at_infinity(1.25 * math.pi).id
    first = chi_factor(graph, upper, origin).value
    second = chi_factor(graph, lower, origin).value
    return cmath.phase(first) + cmath.phase(second)


def _ray_omega_integral(
    q: EffectiveQ, radius: float, angle: float, tol: Tolerances
) -> complex:
    """
    int omega from infinity to the origin along a ray.

    The branch is the one recessive at infinity.
    """
    u = cmath.exp(1j * angle)
    offset = tol.pole_offset
    radial = np.geomspace(radius, offset, 400)
    points = (
        [2 * radius * u]
        + [complex(r * u) for r in radial]
        + [0.5 * offset * u]
    )
    seed = recessive_root(q, points[0], u)
    path = track_branch(
        q, points, seed, (EndpointKind.INFINITY, EndpointKind.POLE), tol
    )
    return series_coefficients(q, path, 1).I[1]


def coulomb_phase(
    alpha: float,
    l: int,
    hbar: float,
    E: float,
    mode: str = "exact",
    *,
    tolerances: typing.Optional[Tolerances] = None,
) -> CoulombPhase:
    """
    The Coulomb scattering matrix S_l = chi_{lower->0} / chi_{upper->0}.

    Above threshold infinity splits into the upper and lower half planes.
    The phase is arg(S_l) / 2. In jwkb mode it is hbar / 2 times the
    imaginary part of the first chi integral, int omega taken from infinity
    to the origin along the ray at 45 degrees.

    Raises
    ------
    ValueError
        If E <= 0.
    QuadratureNotConverged
    """
    _check_mode(mode)
    if E <= 0:
        raise ValueError("the Coulomb phase needs E > 0")
    tol = tolerances or DEFAULT_TOLERANCES
    potential = coulomb(alpha, l, hbar)
    q = build_effective_q(potential, E, hbar, True, tol)
    if mode == "jwkb":
        first = _ray_omega_integral(
            q, tol.infinity_radius, 0.25 * math.pi, tol
        )
        phase = 0.5 * hbar * first.imag
        S = cmath.exp(2j * phase)
        provenance = {
            "omega_integral": first
        }  # type: typing.Dict[str, typing.Any]
    else:
        graph = trace_graph(q, with_lines=False, tolerances=tol)
        origin = graph.sector_at_pole(0j).id
        upper = graph.sector_at_infinity(0.5 * math.pi).id
        lower = graph.sector_at_infinity(1.5 * math.pi).id
        chi_upper = chi_factor(graph, upper, origin)
        chi_lower = chi_factor(graph, lower, origin)
        S = chi_lower.value / chi_upper.value
        phase = 0.5 * cmath.phase(S)
        provenance = {
            "chi_upper": chi_upper.value,
            "chi_lower": chi_lower.value,
            "sectors": [upper, lower, origin],
        }
    return CoulombPhase(
        S=S,
        phase=phase,
        unitarity_defect=abs(abs(S) - 1.0),
        energy=float(E),
        method=mode,
        provenance=provenance,
    )
