import math

import pytest

from exactwkb.connection import (
    ConnectionSolver,
    ResonanceResult,
    ScatteringAmplitudes,
    SpectralResult,
    _barriers,
    _gamow_width,
    barrier_amplitudes,
    bound_states,
    check_barrier_band,
    coulomb_levels,
    coulomb_phase,
    resonances,
    to_record,
)
from exactwkb.errors import GraphDegenerate
from exactwkb.oracle import numerov_bound_states, resonance_fit, transmission
from exactwkb.potential import double_hump


SCATTERING_ENERGIES = [0.01, 0.03, 0.05, 0.07, 0.09, 0.16, 0.2, 0.3, 0.5, 1.0]


@pytest.fixture(scope="module")
def hump():
    return double_hump()


@pytest.fixture(scope="module")
def tunneling(hump):
    solver = ConnectionSolver(hump, 0.1)
    graph = solver.graph(0.05)
    ids = {
        "1": graph.sector_at_infinity(0.25 * math.pi).id,
        "2": graph.sector_at_infinity(0.75 * math.pi).id,
        "2bar": graph.sector_at_infinity(1.25 * math.pi).id,
        "1bar": graph.sector_at_infinity(1.75 * math.pi).id,
        "3": graph.sector_at_pole(1j).id,
        "3bar": graph.sector_at_pole(-1j).id,
    }
    return solver, ids


def test_window_above_threshold_has_no_levels(hump):
    assert bound_states(hump, 0.5, (0.1, 0.5)) == []


@pytest.mark.parametrize("mode", ["wkb", "EXACT", ""])
def test_unknown_mode(hump, mode):
    with pytest.raises(ValueError, match="mode"):
        bound_states(hump, 0.5, (-1.0, 0.0), mode=mode)


def test_solver_needs_positive_hbar(hump):
    with pytest.raises(ValueError, match="hbar"):
        ConnectionSolver(hump, 0.0)
    assert "hbar=0.5" in repr(ConnectionSolver(hump, 0.5))


def test_unknown_resonance_method(hump):
    with pytest.raises(ValueError, match="method"):
        resonances(hump, 0.1, (0.01, 0.05), method="fit")


def test_barrier_top_is_refused(hump):
    # pi |E - 1/8| / (hbar sqrt(3/8)) = 0.26 < 1
    with pytest.raises(GraphDegenerate, match="barrier"):
        barrier_amplitudes(hump, 0.1, 0.12)
    check_barrier_band(hump, 0.05, 0.1)


def test_coulomb_arguments_validated():
    with pytest.raises(ValueError, match="E > 0"):
        coulomb_phase(2.0, 0, 1.0, -0.1)
    with pytest.raises(ValueError, match="k_max"):
        coulomb_levels(2.0, 0, 1.0, -1)


def test_record_takes_fields_from_value():
    level = SpectralResult(complex(-0.3), 1e-12, "exact-condition", 7)
    record = to_record("bound-states", {"hbar": 0.5}, level)
    assert record["residual"] == 1e-12
    assert record["method"] == "exact-condition"
    assert record["provenance"] == {}

    amplitudes = ScatteringAmplitudes(0.6, 0.8j, 0.05, "tunneling", 2e-16)
    record = to_record("scattering", {}, amplitudes, method="override")
    assert record["residual"] == 2e-16
    assert record["method"] == "override"
    assert amplitudes.reflection + amplitudes.transmission == pytest.approx(1)


def test_resonance_energy_lies_below_the_axis():
    result = ResonanceResult(0.03, 2e-8, "complex-root")
    assert result.energy == complex(0.03, -1e-8)
    assert math.isnan(result.width_ratio)


def test_coulomb_levels():
    levels = coulomb_levels(2.0, 0, 1.0, 2)
    assert [r.energy.real for r in levels] == pytest.approx(
        [-1.0, -0.25, -1.0 / 9.0], rel=1e-9
    )
    assert [r.provenance["n"] for r in levels] == [1, 2, 3]
    assert all(r.residual < 1e-9 for r in levels)


def test_coulomb_levels_with_angular_momentum():
    (level,) = coulomb_levels(2.0, 1, 1.0, 0)
    assert level.energy.real == pytest.approx(-0.25, rel=1e-9)
    assert level.provenance["n"] == 2


@pytest.mark.slow
def test_coulomb_chi_phases_cancel():
    (level,) = coulomb_levels(2.0, 0, 1.0, 0, check_chi=True)
    assert level.provenance["chi_phase_sum"] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.slow
def test_bound_states_match_oracle(hump):
    exact = bound_states(hump, 0.5, (-1.0, 0.0))
    reference = numerov_bound_states(hump, 0.5, (-1.0, 0.0))
    assert len(exact) == len(reference) >= 1
    for level, expected in zip(exact, reference):
        assert level.energy.real == pytest.approx(expected, abs=1e-6)
        assert level.method == "exact-condition"

    approximate = bound_states(hump, 0.5, (-1.0, 0.0), mode="jwkb")
    assert len(approximate) == len(reference)
    for level, expected in zip(approximate, reference):
        assert level.energy.real == pytest.approx(expected, abs=0.1)


@pytest.mark.slow
def test_tunneling_matches_oracle(hump):
    amplitudes = barrier_amplitudes(hump, 0.1, 0.05)
    assert amplitudes.regime == "tunneling"
    assert amplitudes.unitarity_defect < 1e-6
    _, T = transmission(hump, 0.1, 0.05)
    assert amplitudes.transmission == pytest.approx(abs(T) ** 2, rel=1e-3)


@pytest.mark.slow
def test_over_barrier_scattering(hump):
    amplitudes = barrier_amplitudes(hump, 0.1, 0.2)
    assert amplitudes.regime == "over-barrier"
    assert amplitudes.unitarity_defect < 1e-6
    assert amplitudes.transmission > 0.5


@pytest.mark.slow
def test_resonance_methods_agree(hump):
    (root,) = resonances(hump, 0.1, (0.005, 0.08))
    (perturbative,) = resonances(hump, 0.1, (0.005, 0.08), "perturbative")
    (gamow,) = resonances(hump, 0.1, (0.005, 0.08), "jwkb")
    assert root.Gamma > 0
    assert root.width_ratio < 1e-3
    assert root.provenance["k"] == 4
    assert perturbative.E0 == pytest.approx(root.E0, abs=1e-6)
    assert perturbative.Gamma == pytest.approx(root.Gamma, rel=0.05)
    assert gamow.E0 == pytest.approx(root.E0, abs=5e-3)

    fit = resonance_fit(hump, 0.1, (root.E0 - 1e-3, root.E0 + 1e-3))
    assert fit.E0 == pytest.approx(root.E0, abs=1e-6)
    assert fit.Gamma == pytest.approx(root.Gamma, rel=0.1)


@pytest.mark.slow
def test_coulomb_scattering_is_unitary():
    result = coulomb_phase(2.0, 0, 1.0, 0.5)
    assert result.unitarity_defect < 1e-6
    assert abs(result.S) == pytest.approx(1.0, abs=1e-6)
    approximate = coulomb_phase(2.0, 0, 1.0, 0.5, mode="jwkb")
    assert abs(approximate.S) == pytest.approx(1.0)


@pytest.mark.slow
@pytest.mark.parametrize("outer, mirror", [("1", "1bar"), ("2", "2bar")])
def test_quartet_identity(tunneling, outer, mirror):
    solver, ids = tunneling
    E = 0.05

    def alpha(i, j, k):
        return solver.alpha(E, ids[i], ids[j], ids[k]).value

    left = alpha(outer, mirror, "3")
    terms = [
        alpha(outer, mirror, "3bar"),
        alpha(outer, "3bar", mirror) * alpha("3bar", mirror, "3"),
    ]
    scale = max(abs(left), *(abs(t) for t in terms))
    assert abs(left - sum(terms)) <= 1e-7 * scale


@pytest.mark.slow
@pytest.mark.parametrize(
    "i, j, k", [("1", "3bar", "3"), ("2", "2bar", "3"), ("1", "1bar", "3bar")]
)
def test_reciprocal_identity(tunneling, i, j, k):
    solver, ids = tunneling
    forward = solver.alpha(0.05, ids[i], ids[j], ids[k]).value
    backward = solver.alpha(0.05, ids[j], ids[i], ids[k]).value
    assert forward * backward == pytest.approx(1.0, rel=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize(
    "outer, mirror, side",
    [("1", "1bar", "theta_right"), ("2", "2bar", "theta_left")],
)
def test_chi_moduli_differ_by_the_barrier_factor(
    tunneling, outer, mirror, side
):
    solver, ids = tunneling
    E, hbar = 0.05, 0.1
    theta = getattr(_barriers(solver.q(E)), side)
    across = solver.chi(E, ids["3"], ids["3bar"]).value
    assert across.imag == pytest.approx(0.0, abs=1e-7)

    difference = (
        abs(solver.chi(E, ids[mirror], ids["3"]).value) ** 2
        - abs(solver.chi(E, ids[outer], ids["3"]).value) ** 2
    )
    expected = across.real * math.exp(-2 * theta / hbar)
    assert difference == pytest.approx(expected, rel=1e-3, abs=1e-12)


@pytest.mark.slow
def test_paths_do_not_depend_on_earlier_energies(hump):
    scanned = ConnectionSolver(hump, 0.1)
    for E in (0.03, 0.04):
        scanned.log_alpha(E, "I1", "I2", "P1")
    fresh = ConnectionSolver(hump, 0.1)
    assert scanned.log_alpha(0.05, "I1", "I2", "P1") == fresh.log_alpha(
        0.05, "I1", "I2", "P1"
    )


@pytest.mark.slow
def test_chi_is_conjugation_symmetric(hump):
    solver = ConnectionSolver(hump, 0.5)
    upper = solver.chi(-0.5, "I1", "P1").value
    lower = solver.chi(-0.5, "I1", "P0").value
    assert lower == pytest.approx(upper.conjugate(), abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("E", [0.015, 0.09])
def test_jwkb_reflection_is_i_below_the_top(hump, E):
    amplitudes = barrier_amplitudes(hump, 0.1, E, mode="jwkb")
    assert abs(amplitudes.R - 1j) <= 4 * abs(amplitudes.T) + 1e-9


@pytest.mark.slow
@pytest.mark.parametrize("E", SCATTERING_ENERGIES)
def test_scattering_is_unitary(hump, E):
    amplitudes = barrier_amplitudes(hump, 0.1, E)
    assert amplitudes.unitarity_defect < 1e-6
    expected = "tunneling" if E < 0.125 else "over-barrier"
    assert amplitudes.regime == expected


@pytest.mark.slow
@pytest.mark.parametrize("E", [0.2, 0.5])
def test_over_barrier_matches_oracle(hump, E):
    amplitudes = barrier_amplitudes(hump, 0.1, E)
    R, T = transmission(hump, 0.1, E)
    assert abs(amplitudes.R) == pytest.approx(abs(R), rel=1e-3, abs=1e-8)
    assert amplitudes.transmission == pytest.approx(abs(T) ** 2, rel=1e-4)
    approximate = barrier_amplitudes(hump, 0.1, E, mode="jwkb")
    assert abs(approximate.T) <= 1 + 1e-9


@pytest.mark.slow
def test_jwkb_level_error_is_second_order(hump):
    errors = []
    for hbar in (0.3, 0.15):
        # the window holds the ground level only
        window = (-1.0, -1.0 + 1.5 * math.sqrt(3) * hbar)
        exact = bound_states(hump, hbar, window)[0]
        approximate = bound_states(hump, hbar, window, mode="jwkb")[0]
        errors.append(abs(approximate.energy.real - exact.energy.real))
    assert 3.0 <= errors[0] / errors[1] <= 5.0


@pytest.mark.slow
def test_width_follows_the_barrier_action(hump):
    windows = {0.10: (0.005, 0.08), 0.12: (0.003, 0.09)}
    measured, predicted = [], []
    for hbar, window in windows.items():
        found = resonances(hump, hbar, window)
        root = min(found, key=lambda r: abs(r.E0 - 0.05))
        barriers = _barriers(ConnectionSolver(hump, hbar).q(root.E0))
        expected = math.log(_gamow_width(barriers, hbar))
        assert math.log(root.Gamma) == pytest.approx(expected, rel=0.1)
        measured.append(math.log(root.Gamma))
        predicted.append(expected)

    run = 1 / 0.10 - 1 / 0.12
    slope = (measured[0] - measured[1]) / run
    assert slope == pytest.approx((predicted[0] - predicted[1]) / run, rel=0.1)
