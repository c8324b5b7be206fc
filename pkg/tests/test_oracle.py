import math

import numpy as np
import pytest
from scipy import integrate, optimize

from exactwkb.errors import GridTooCoarse, NonDecayingPotential, NoPeakFound
from exactwkb.oracle import (
    BreitWignerFit,
    GridSolution,
    bound_state,
    coulomb_exact_levels,
    numerov_bound_states,
    resonance_fit,
    scan_transmission,
    scattering_state,
    transmission,
)
from exactwkb.potential import (
    RationalPotential,
    coulomb,
    double_hump,
    harmonic,
)
from exactwkb.settings import DEFAULT_TOLERANCES

FLAT = RationalPotential((0.0,), label="flat")
# 1 / (1 + x**2)**2, a single barrier of height 1
BUMP = RationalPotential((1.0,), (1.0, 0.0, 2.0, 0.0, 1.0), label="bump")
# (x + 1/2) / (x**4 + 1), decaying and without mirror symmetry
LOPSIDED = RationalPotential((0.5, 1.0), (1.0, 0.0, 0.0, 0.0, 1.0))


def bohr_sommerfeld(hbar, k):
    """Level k of the double-hump well above threshold, to leading order."""
    V = double_hump()

    def action(E):
        y = ((1 - 2 * E) - math.sqrt(1 - 8 * E)) / (2 * E)
        edge = math.sqrt(y)
        value, _ = integrate.quad(
            lambda x: math.sqrt(max(E - V(x).real, 0.0)), 0.0, edge
        )
        return 2 * value - math.pi * hbar * (k + 0.5)

    return optimize.brentq(action, 1e-4, 0.12)


def test_harmonic_levels():
    levels = numerov_bound_states(
        harmonic(), 1.0, (0.0, 4.0), n_grid=4000, check_grid=False
    )
    assert levels == pytest.approx([1.0, 3.0], abs=1e-6)


@pytest.mark.slow
def test_harmonic_levels_pass_grid_check():
    levels = numerov_bound_states(harmonic(), 1.0, (0.0, 6.0))
    assert levels == pytest.approx([1.0, 3.0, 5.0], abs=1e-8)


def test_window_above_threshold_is_empty():
    assert numerov_bound_states(double_hump(), 0.1, (0.05, 0.5)) == []


def test_empty_window_rejected():
    with pytest.raises(ValueError, match="empty"):
        numerov_bound_states(harmonic(), 1.0, (4.0, 0.0))


def test_domain_too_small_for_level():
    tol = DEFAULT_TOLERANCES.replace(oracle_domain=3.0)
    with pytest.raises(GridTooCoarse, match="margin"):
        numerov_bound_states(
            harmonic(), 1.0, (0.0, 8.0), n_grid=2000, tolerances=tol
        )


def test_mesh_needs_enough_points():
    with pytest.raises(ValueError, match="n_grid"):
        numerov_bound_states(harmonic(), 1.0, (0.0, 4.0), n_grid=500)


def test_real_pole_rejected():
    with pytest.raises(ValueError, match="real pole"):
        numerov_bound_states(
            RationalPotential((-1.0,), (0.0, 1.0)), 1.0, (-1.0, 0.0)
        )


def test_ground_state_is_gaussian():
    state = bound_state(harmonic(), 1.0, 1.0, n_grid=4001)
    x = state.grid
    assert state.n == 4001
    assert integrate.trapezoid(state.values**2, x) == pytest.approx(1.0)
    exact = math.pi**-0.25 * np.exp(-0.5 * x**2)
    assert np.max(np.abs(state.values - exact)) < 1e-4

    payload = state.to_csv_payload()
    assert payload["header"] == ["x", "psi"]
    assert len(payload["rows"]) == state.n
    assert state.to_record()["boundary"] == "dirichlet"


def test_grid_solution_needs_enough_points():
    with pytest.raises(ValueError):
        GridSolution(-1.0, 1.0, np.zeros(10), "dirichlet", 0.0)


def test_free_motion_is_transparent():
    R, T = transmission(FLAT, 0.1, 0.05, n_grid=4000)
    assert abs(R) < 1e-8
    assert T == pytest.approx(1.0, abs=1e-8)


def test_far_above_the_barriers():
    _, T = transmission(double_hump(), 0.1, 1.0, n_grid=8000)
    assert abs(T) ** 2 >= 0.99


@pytest.mark.parametrize("E", [0.3, 0.7, 1.5])
def test_unitarity(E):
    R, T = transmission(BUMP, 0.1, E, n_grid=4000)
    assert abs(R) ** 2 + abs(T) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_transmission_grows_through_a_single_barrier():
    rows = scan_transmission(BUMP, 0.1, [0.2, 0.4, 0.6, 0.8], n_grid=4000)
    probabilities = [p for _, p, _ in rows]
    assert probabilities == sorted(probabilities)
    assert [E for E, _, _ in rows] == [0.2, 0.4, 0.6, 0.8]


def test_reciprocity():
    R_left, T_left = transmission(LOPSIDED, 0.2, 0.4, n_grid=6000)
    R_right, T_right = transmission(
        LOPSIDED, 0.2, 0.4, n_grid=6000, incident="right"
    )
    assert abs(T_left) == pytest.approx(abs(T_right), rel=1e-8)
    assert abs(R_left) == pytest.approx(abs(R_right), rel=1e-8)


def test_incident_side_validated():
    with pytest.raises(ValueError, match="incident"):
        transmission(BUMP, 0.1, 0.5, n_grid=2000, incident="above")


@pytest.mark.parametrize(
    "potential",
    [harmonic(), coulomb(2.0, 0, 1.0)],
    ids=["harmonic", "coulomb"],
)
def test_plane_waves_need_decay(potential):
    with pytest.raises(NonDecayingPotential):
        transmission(potential, 0.1, 0.5)


def test_scattering_state_has_unit_incoming_wave():
    state = scattering_state(FLAT, 0.1, 0.05, n_grid=4000)
    assert state.boundary == "outgoing"
    assert np.allclose(np.abs(state.values), 1.0, atol=1e-8)


def test_monotone_scan_has_no_peak():
    with pytest.raises(NoPeakFound, match="edge"):
        resonance_fit(BUMP, 0.1, (0.2, 0.6), n_grid=2000, scan_points=21)


@pytest.mark.slow
def test_resonance_peak_is_lorentzian():
    E_bs = bohr_sommerfeld(0.1, 4)
    fit = resonance_fit(double_hump(), 0.1, (E_bs - 0.01, E_bs + 0.01))
    E0, Gamma = fit
    assert isinstance(fit, BreitWignerFit)
    # symmetric barriers transmit fully on resonance
    assert fit.peak == pytest.approx(1.0, rel=0.05)
    assert abs(E0 - E_bs) < 5e-3
    assert 0 < Gamma < 1e-4
    assert fit.points >= 7


@pytest.mark.slow
def test_width_grows_with_hbar():
    widths = []
    for hbar in (0.1, 0.105):
        E_bs = bohr_sommerfeld(hbar, 4)
        fit = resonance_fit(double_hump(), hbar, (E_bs - 0.01, E_bs + 0.01))
        widths.append(fit.Gamma)
    assert widths[0] < widths[1]


def test_coulomb_exact_levels():
    assert coulomb_exact_levels(2.0, 0, 1.0, 3) == pytest.approx(
        [-1.0, -0.25, -1.0 / 9.0]
    )
    assert coulomb_exact_levels(2.0, 1, 1.0, 2) == pytest.approx([-0.25])


@pytest.mark.parametrize("alpha, hbar", [(1.0, 0.5), (3.0, 2.0), (0.5, 1.0)])
def test_coulomb_levels_scale(alpha, hbar):
    scaled = [
        E * (2 * hbar / alpha) ** 2
        for E in coulomb_exact_levels(alpha, 0, hbar, 4)
    ]
    assert scaled == pytest.approx([-1.0, -0.25, -1.0 / 9.0, -1.0 / 16.0])


@pytest.mark.parametrize("alpha, l", [(0.0, 0), (1.0, -1)])
def test_coulomb_arguments_validated(alpha, l):
    with pytest.raises(ValueError):
        coulomb_exact_levels(alpha, l, 1.0, 3)


def test_parallel_refinement_matches_serial():
    serial = numerov_bound_states(
        harmonic(), 1.0, (0.0, 6.0), n_grid=2000, check_grid=False
    )
    parallel = numerov_bound_states(
        harmonic(), 1.0, (0.0, 6.0), n_grid=2000, check_grid=False, jobs=2
    )
    assert parallel == serial
