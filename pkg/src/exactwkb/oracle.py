"""
Brute-force real-axis solutions used to cross-check the connection solvers.

Nothing here touches the Stokes graph, the chi integrator or the action
quadrature. The Schroedinger equation hbar**2 psi'' = (V - E) psi is
discretised on a uniform mesh and marched with the Numerov three-term
recurrence written for phi = w psi,

    phi[i + 1] + phi[i - 1] = c[i] phi[i],    c = 12 / w - 10,
    w = 1 + h**2 (E - V) / (12 hbar**2).

Classes
-------
GridSolution
    A wavefunction sampled on the oracle mesh.
BreitWignerFit
    Result of :func:`resonance_fit`.

Functions
---------
numerov_bound_states
    Shooting from both walls, matched at the bottom of the well.
bound_state
    The normalised eigenfunction at a given energy.
transmission, scattering_state, scan_transmission
    Plane-wave matching for potentials that decay at both ends.
resonance_fit
    Breit-Wigner fit of a transmission peak.
coulomb_exact_levels
    Closed-form radial Coulomb levels.
"""

from __future__ import annotations

import cmath
import concurrent.futures
import functools
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from exactwkb.errors import GridTooCoarse, NonDecayingPotential, NoPeakFound
from exactwkb.potential import RationalPotential
from exactwkb.settings import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

ENERGY_XTOL = 1e-10
GRID_TOL = 1e-8
UNITARITY_TOL = 1e-8
MIN_POINTS = 1000
DOMAIN_MARGIN = 1.2

_HUGE = 1e150
_TINY = 1e-150


@dataclass(frozen=True)
class GridSolution:
    """
    Wavefunction samples on a uniform real-axis mesh.

    Attributes
    ----------
    x_min, x_max : float
        Mesh ends.
    values : numpy.ndarray
        psi at the ``len(values)`` mesh points, real for bound states and
        complex for scattering states.
    boundary : str
        ``"dirichlet"`` (psi vanishes at both ends) or ``"outgoing"`` (a pure
        right-moving wave leaves through ``x_max``).
    energy : float
    """

    x_min: float
    x_max: float
    values: np.ndarray = field(repr=False)
    boundary: str
    energy: float

    def __post_init__(self) -> None:
        if len(self.values) < MIN_POINTS:
            raise ValueError(
                f"oracle meshes need at least {MIN_POINTS} points, "
                f"got {len(self.values)}"
            )
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, len(self.values))

    @property
    def n(self) -> int:
        return len(self.values)

    def to_csv_payload(self) -> dict:
        cast = complex if np.iscomplexobj(self.values) else float
        rows = [[float(x), cast(v)] for x, v in zip(self.grid, self.values)]
        return {"header": ["x", "psi"], "rows": rows}

    def to_record(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "n": self.n,
            "boundary": self.boundary,
            "energy": self.energy,
        }


@dataclass(frozen=True)
class BreitWignerFit:
    """
    Least-squares fit of the Breit-Wigner line shape
    ``peak * (Gamma/2)**2 / ((E - E0)**2 + (Gamma/2)**2)``.

    Attributes
    ----------
    E0, Gamma : float
        Resonance position and full width.
    peak : float
        Fitted maximum of |T|**2.
    residual : float
        RMS deviation of the fitted points, relative to ``peak``.
    points : int
        Samples entering the fit.
    """

    E0: float
    Gamma: float
    peak: float
    residual: float
    points: int

    def __iter__(self) -> typing.Iterator[float]:
        return iter((self.E0, self.Gamma))

    def to_record(self) -> dict:
        return {
            "E0": self.E0,
            "Gamma": self.Gamma,
            "peak": self.peak,
            "residual": self.residual,
            "points": self.points,
        }


# -- mesh ---------------------------------------------------------------------


@dataclass(frozen=True)
class _Mesh:
    x: np.ndarray
    potential: np.ndarray
    hbar: float

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def weights(self, energy: float) -> np.ndarray:
        scale = self.h**2 / (12.0 * self.hbar**2)
        return 1.0 + scale * (energy - self.potential)

    def coefficients(self, energy: float) -> np.ndarray:
        return 12.0 / self.weights(energy) - 10.0

    @functools.cached_property
    def match(self) -> int:
        inner = int(np.argmin(self.potential))
        return min(max(inner, 2), len(self.x) - 3)


def _mesh(
    potential: RationalPotential, hbar: float, n_grid: int, domain: float
) -> _Mesh:
    if n_grid < MIN_POINTS:
        raise ValueError(f"n_grid must be at least {MIN_POINTS}, got {n_grid}")
    if hbar <= 0:
        raise ValueError(f"hbar must be positive, got {hbar}")
    if not potential.is_real():
        raise ValueError(
            "the oracle needs a potential that is real on the real axis"
        )
    for pole, _ in potential.poles:
        if abs(pole.imag) <= 1e-12 and abs(pole.real) <= domain:
            raise ValueError(f"potential has a real pole at {pole.real:.6g}")
    x = np.linspace(-domain, domain, n_grid)
    return _Mesh(x, np.asarray(potential(x)).real, float(hbar))


def _march(
    c: typing.Sequence[typing.Any],
    start: typing.Any,
    step: typing.Any,
    real: bool = False,
) -> typing.Tuple[typing.List[typing.Any], int]:
    """
    Run the recurrence over ``len(c)`` nodes.

    Real marches also count sign changes and scale the samples down whenever
    they grow past ``1e150``; signs and ratios are unchanged.
    """
    values = [start, step]
    changes = 0
    prev, cur = start, step
    sign = 0 if not real or step == 0 else (1 if step > 0 else -1)
    for i in range(1, len(c) - 1):
        nxt = c[i] * cur - prev
        if real:
            if nxt != 0:
                here = 1 if nxt > 0 else -1
                if sign and here != sign:
                    changes += 1
                sign = here
            if abs(nxt) > _HUGE:
                values = [v * _TINY for v in values]
                cur *= _TINY
                nxt *= _TINY
        values.append(nxt)
        prev, cur = cur, nxt
    return values, changes


# -- bound states -------------------------------------------------------------


def _count(mesh: _Mesh, energy: float) -> int:
    """Sign changes of the solution launched from the left wall."""
    c = mesh.coefficients(energy).tolist()
    _, changes = _march(c, 0.0, 1.0, real=True)
    return changes


def _mismatch(mesh: _Mesh, energy: float) -> float:
    """
    Normalised Casoratian of the left and right solutions at the match node.

    It vanishes exactly where the two solutions are proportional, i.e. where
    their log-derivatives agree.
    """
    c = mesh.coefficients(energy).tolist()
    m, last = mesh.match, len(c) - 1
    left, _ = _march(c[: m + 2], 0.0, 1.0, real=True)
    right, _ = _march(c[::-1][: last - m + 1], 0.0, 1.0, real=True)
    l0, l1 = left[m], left[m + 1]
    r0, r1 = right[last - m], right[last - m - 1]
    return (l0 * r1 - l1 * r0) / (math.hypot(l0, l1) * math.hypot(r0, r1))


def _refine_level(mesh: _Mesh, lo: float, hi: float, k: int) -> float:
    """Energy of the level with ``k`` levels below it, inside ``(lo, hi)``."""
    a, b = lo, hi
    na, nb = _count(mesh, a), _count(mesh, b)
    while not (na == k and nb == k + 1) and b - a > ENERGY_XTOL:
        mid = 0.5 * (a + b)
        n_mid = _count(mesh, mid)
        if n_mid <= k:
            a, na = mid, n_mid
        else:
            b, nb = mid, n_mid
    if b - a <= ENERGY_XTOL:
        return 0.5 * (a + b)

    fa, fb = _mismatch(mesh, a), _mismatch(mesh, b)
    if fa * fb > 0:
        logger.debug(
            "matching function keeps its sign on [%.12g, %.12g]", a, b
        )
        while b - a > ENERGY_XTOL:
            mid = 0.5 * (a + b)
            if _count(mesh, mid) <= k:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)
    root = optimize.brentq(
        functools.partial(_mismatch, mesh), a, b, xtol=ENERGY_XTOL, rtol=1e-15
    )
    return float(root)


def _map(
    func: typing.Callable[[typing.Any], typing.Any],
    items: typing.Sequence[typing.Any],
    jobs: int,
) -> typing.List[typing.Any]:
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _check_domain(mesh: _Mesh, energy: float) -> None:
    allowed = mesh.x[mesh.potential < energy]
    if allowed.size == 0:
        return
    reach = float(np.max(np.abs(allowed)))
    if DOMAIN_MARGIN * reach > mesh.x[-1]:
        raise GridTooCoarse(
            f"classically allowed region reaches |x| = {reach:.4g} at "
            f"E = {energy:.6g}; oracle_domain {mesh.x[-1]:g} leaves less than "
            f"{DOMAIN_MARGIN - 1:.0%} margin"
        )


def _levels(
    mesh: _Mesh, lo: float, hi: float, jobs: int
) -> typing.List[float]:
    n_lo, n_hi = _count(mesh, lo), _count(mesh, hi)
    refine = functools.partial(_refine_level, mesh, lo, hi)
    return sorted(_map(refine, list(range(n_lo, n_hi)), jobs))


def _binding_window(
    potential: RationalPotential,
    mesh: _Mesh,
    E_window: typing.Tuple[float, float],
) -> typing.Optional[typing.Tuple[float, float]]:
    lo, hi = (float(e) for e in E_window)
    if not lo < hi:
        raise ValueError(f"empty energy window ({lo}, {hi})")
    limit = potential.asymptotic_value()
    if cmath.isfinite(limit):
        hi = min(hi, limit.real)
    lo = max(lo, float(np.min(mesh.potential)))
    if hi <= lo:
        return None
    return lo, hi


def numerov_bound_states(
    potential: RationalPotential,
    hbar: float,
    E_window: typing.Tuple[float, float],
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
    check_grid: bool = True,
) -> typing.List[float]:
    """
    Bound-state energies in ``E_window`` by Numerov shooting.

    Solutions vanishing at the two walls of ``[-oracle_domain,
    oracle_domain]`` are marched toward the bottom of the well and matched
    there. Node counting brackets every level, the matching condition
    refines it to 1e-10.

    Parameters
    ----------
    potential : RationalPotential
        Real and pole-free on the mesh.
    hbar : float
    E_window : (float, float)
        Clipped from above by the value of V at infinity.
    n_grid : int, optional
        Mesh points; ``tolerances.oracle_points`` by default.
    jobs : int
        Worker processes refining levels in parallel.
    check_grid : bool
        Repeat on a mesh with twice the points and compare.

    Returns
    -------
    list of float
        Ascending energies, from the finer mesh when ``check_grid`` is set.

    Raises
    ------
    GridTooCoarse
        If doubling the mesh moves any level by more than 1e-8, changes the
        number of levels, or the allowed region nearly fills the domain.
    """
    n_grid = n_grid or tolerances.oracle_points
    mesh = _mesh(potential, hbar, n_grid, tolerances.oracle_domain)
    window = _binding_window(potential, mesh, E_window)
    if window is None:
        logger.info("window %s holds no binding energies", tuple(E_window))
        return []
    lo, hi = window
    _check_domain(mesh, hi)

    levels = _levels(mesh, lo, hi, jobs)
    logger.debug("n = %d: %d levels %s", n_grid, len(levels), levels)
    if not check_grid:
        return levels

    fine = _mesh(potential, hbar, 2 * n_grid - 1, tolerances.oracle_domain)
    refined = _levels(fine, lo, hi, jobs)
    if len(refined) != len(levels):
        raise GridTooCoarse(
            f"doubling the mesh changed the level count "
            f"from {len(levels)} to {len(refined)}"
        )
    shift = max((abs(a - b) for a, b in zip(levels, refined)), default=0.0)
    if shift > GRID_TOL:
        raise GridTooCoarse(
            f"doubling the mesh moved a level by {shift:.3g} > {GRID_TOL:g}; "
            f"raise oracle_points above {n_grid}"
        )
    logger.info(
        "oracle found %d levels in [%g, %g] (grid shift %.2g)",
        len(refined), lo, hi, shift,
    )
    return refined


def bound_state(
    potential: RationalPotential,
    hbar: float,
    energy: float,
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> GridSolution:
    """
    The eigenfunction at ``energy``, normalised to unit probability.

    The left and right solutions are joined at the match node, so the result
    is only meaningful at an energy returned by :func:`numerov_bound_states`.
    """
    n_grid = n_grid or tolerances.oracle_points
    mesh = _mesh(potential, hbar, n_grid, tolerances.oracle_domain)
    w = mesh.weights(energy)
    c = (12.0 / w - 10.0).tolist()
    m, last = mesh.match, len(c) - 1
    left, _ = _march(c[: m + 1], 0.0, 1.0, real=True)
    right, _ = _march(c[::-1][: last - m + 1], 0.0, 1.0, real=True)
    right = right[::-1]
    scaled = np.asarray(right) * (left[-1] / right[0])
    phi = np.concatenate([np.asarray(left[:-1]), scaled])
    psi = phi / w
    norm = math.sqrt(integrate.trapezoid(psi**2, mesh.x))
    psi = psi / norm
    if psi[m] < 0:
        psi = -psi
    return GridSolution(
        float(mesh.x[0]), float(mesh.x[-1]), psi, "dirichlet", float(energy)
    )


# -- scattering ---------------------------------------------------------------


def _check_decay(potential: RationalPotential) -> None:
    numerator = np.asarray(potential.numerator)
    if np.all(numerator == 0):
        return
    excess = len(potential.numerator) - len(potential.denominator)
    if excess > -2:
        raise NonDecayingPotential(
            f"V ~ x**{excess} at infinity; plane-wave matching needs decay "
            "faster than 1/|x|"
        )


def _scatter(
    mesh: _Mesh, energy: float
) -> typing.Tuple[complex, complex, np.ndarray]:
    """
    March a wave leaving through the right wall back to the left wall.

    Near each wall the discrete plane waves exp(+-i theta j), with
    2 cos(theta) = c at the wall node, solve the recurrence exactly, so the
    flux Im(conj(phi[j]) phi[j + 1]) is carried across the mesh without loss.
    """
    w = mesh.weights(energy)
    c = 12.0 / w - 10.0
    if abs(c[0]) >= 2 or abs(c[-1]) >= 2:
        raise ValueError(
            f"E = {energy:.6g} is not above the potential at both walls"
        )
    theta_left, theta_right = math.acos(c[0] / 2), math.acos(c[-1] / 2)

    backward, _ = _march(
        c[::-1].tolist(), 1 + 0j, cmath.exp(-1j * theta_right)
    )
    phi = np.asarray(backward[::-1], dtype=complex)

    incoming = (phi[1] - phi[0] * cmath.exp(-1j * theta_left)) / (
        2j * math.sin(theta_left)
    )
    reflected = phi[0] - incoming
    flux_ratio = math.sin(theta_right) / math.sin(theta_left)

    # amplitudes of exp(+-i k x) referred to x = 0 rather than the walls
    half_width = mesh.x[-1]
    k_left, k_right = theta_left / mesh.h, theta_right / mesh.h
    R = reflected / incoming * cmath.exp(-2j * k_left * half_width)
    T = (
        math.sqrt(flux_ratio)
        / incoming
        * cmath.exp(-1j * (k_left + k_right) * half_width)
    )
    # psi = phi / w, with the incident wave of unit height at the left wall
    return complex(R), complex(T), phi * (w[0] / w) / incoming


def transmission(
    potential: RationalPotential,
    hbar: float,
    E: float,
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    incident: str = "left",
) -> typing.Tuple[complex, complex]:
    """
    Reflection and transmission amplitudes at energy ``E``.

    A purely outgoing wave is marched from the far wall back to the near
    one and split into incident and reflected parts there.

    Parameters
    ----------
    potential : RationalPotential
        Real, pole-free on the domain and decaying faster than 1/|x|.
    hbar, E : float
        ``E`` must exceed the potential at both ends of the domain.
    n_grid : int, optional
        Mesh points; ``tolerances.oracle_points`` by default.
    incident : {"left", "right"}
        Side the incoming wave arrives from.

    Returns
    -------
    (complex, complex)
        ``(R, T)`` with ``|R|**2 + |T|**2 = 1``.

    Raises
    ------
    NonDecayingPotential
        If V does not fall off fast enough at infinity.
    GridTooCoarse
        If the unitarity self-check fails by more than 1e-8.
    """
    if incident not in ("left", "right"):
        raise ValueError(
            f"incident must be 'left' or 'right', got {incident!r}"
        )
    _check_decay(potential)
    mesh = _mesh(
        potential,
        hbar,
        n_grid or tolerances.oracle_points,
        tolerances.oracle_domain,
    )
    if incident == "right":
        mesh = _Mesh(-mesh.x[::-1], mesh.potential[::-1], mesh.hbar)
    R, T, _ = _scatter(mesh, float(E))

    defect = abs(abs(R) ** 2 + abs(T) ** 2 - 1.0)
    if defect > UNITARITY_TOL:
        raise GridTooCoarse(
            f"oracle transmission at E = {E:.6g} "
            f"violates unitarity by {defect:.3g}"
        )
    return R, T


def scattering_state(
    potential: RationalPotential,
    hbar: float,
    E: float,
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> GridSolution:
    """Scattering wavefunction with unit incident amplitude from the left."""
    _check_decay(potential)
    mesh = _mesh(
        potential,
        hbar,
        n_grid or tolerances.oracle_points,
        tolerances.oracle_domain,
    )
    _, _, psi = _scatter(mesh, float(E))
    return GridSolution(
        float(mesh.x[0]), float(mesh.x[-1]), psi, "outgoing", float(E)
    )


def _transmission_row(
    potential: RationalPotential,
    hbar: float,
    n_grid: int,
    tolerances: Tolerances,
    E: float,
) -> typing.Tuple[float, float, float]:
    _, T = transmission(potential, hbar, E, n_grid, tolerances=tolerances)
    return float(E), abs(T) ** 2, cmath.phase(T)


def scan_transmission(
    potential: RationalPotential,
    hbar: float,
    energies: typing.Iterable[float],
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    jobs: int = 1,
) -> typing.List[typing.Tuple[float, float, float]]:
    """
    ``(E, |T|**2, arg T)`` rows over ``energies``.

    With ``jobs > 1`` the energies are spread over worker processes.
    """
    row = functools.partial(
        _transmission_row,
        potential,
        hbar,
        n_grid or tolerances.oracle_points,
        tolerances,
    )
    return _map(row, [float(E) for E in energies], jobs)


def _breit_wigner(
    u: np.ndarray, u0: float, gamma: float, peak: float
) -> np.ndarray:
    half = 0.25 * gamma**2
    return peak * half / ((u - u0) ** 2 + half)


def _top_decade(probabilities: np.ndarray, peak: int) -> slice:
    threshold = 0.1 * probabilities[peak]
    first = peak
    while first > 0 and probabilities[first - 1] >= threshold:
        first -= 1
    last = peak
    top = len(probabilities) - 1
    while last < top and probabilities[last + 1] >= threshold:
        last += 1
    return slice(first, last + 1)


def resonance_fit(
    potential: RationalPotential,
    hbar: float,
    E_scan_window: typing.Tuple[float, float],
    n_grid: typing.Optional[int] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    scan_points: int = 201,
    max_zoom: int = 12,
    min_points: int = 7,
    jobs: int = 1,
) -> BreitWignerFit:
    """
    Locate the |T(E)|**2 peak in a window and fit a Breit-Wigner line to it.

    The scan zooms onto the neighbours of its maximum until at least
    ``min_points`` samples lie within a decade of the peak; those samples
    are fitted by least squares.

    Raises
    ------
    NoPeakFound
        If the first scan peaks at an end of the window, or no zoom level
        resolves the peak.
    """
    lo, hi = (float(e) for e in E_scan_window)
    if not lo < hi:
        raise ValueError(f"empty energy window ({lo}, {hi})")
    if scan_points < 5:
        raise ValueError("scan_points must be at least 5")
    n_grid = n_grid or tolerances.oracle_points

    for zoom in range(max_zoom + 1):
        energies = np.linspace(lo, hi, scan_points)
        rows = scan_transmission(
            potential, hbar, energies, n_grid, tolerances=tolerances, jobs=jobs
        )
        probabilities = np.array([p for _, p, _ in rows])
        peak = int(np.argmax(probabilities))
        at_edge = peak in (0, scan_points - 1)
        if at_edge and zoom == 0:
            raise NoPeakFound(
                "|T|**2 is largest at the window edge "
                f"E = {energies[peak]:.6g}"
            )
        top = _top_decade(probabilities, peak)
        if not at_edge and top.stop - top.start >= min_points:
            return _fit_peak(energies[top], probabilities[top], energies[peak])
        if at_edge:
            half = 0.5 * (hi - lo)
            lo, hi = energies[peak] - half, energies[peak] + half
        else:
            lo, hi = energies[peak - 1], energies[peak + 1]
        logger.debug(
            "zoom %d: peak %.3g near E = %.12g",
            zoom, probabilities[peak], energies[peak],
        )

    raise NoPeakFound(
        f"peak near E = {0.5 * (lo + hi):.12g} "
        f"unresolved after {max_zoom} zooms"
    )


def _fit_peak(
    energies: np.ndarray, probabilities: np.ndarray, center: float
) -> BreitWignerFit:
    scale = float(energies[1] - energies[0])
    u = (energies - center) / scale
    above = u[probabilities >= 0.5 * probabilities.max()]
    width = max(float(above.max() - above.min()), 1.0)
    try:
        (u0, gamma, peak), _ = optimize.curve_fit(
            _breit_wigner,
            u,
            probabilities,
            p0=(0.0, width, probabilities.max()),
        )
    except (RuntimeError, optimize.OptimizeWarning) as err:
        raise NoPeakFound(f"Breit-Wigner fit failed: {err}") from err
    model = _breit_wigner(u, u0, gamma, peak)
    rms = np.sqrt(np.mean((model - probabilities) ** 2))
    residual = float(rms / abs(peak))
    fit = BreitWignerFit(
        E0=center + u0 * scale,
        Gamma=abs(gamma) * scale,
        peak=float(peak),
        residual=residual,
        points=len(u),
    )
    logger.info(
        "Breit-Wigner fit E0 = %.12g, Gamma = %.4g (residual %.2g)",
        fit.E0, fit.Gamma, fit.residual,
    )
    return fit


# -- Coulomb ------------------------------------------------------------------


def coulomb_exact_levels(
    alpha: float, l: int, hbar: float, n_max: int
) -> typing.List[float]:
    """
    E_n = -alpha**2 / (4 hbar**2 n**2) for n = l + 1, ..., n_max.

    The hydrogen-like spectrum of hbar**2 psi'' = (V - E) psi, i.e. mass 1/2.

    Examples
    --------
    >>> coulomb_exact_levels(2.0, 0, 1.0, 3)
    [-1.0, -0.25, -0.1111111111111111]
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if l < 0:
        raise ValueError(f"l must be non-negative, got {l}")
    return [
        -(alpha**2) / (4 * hbar**2 * n**2) for n in range(l + 1, n_max + 1)
    ]
