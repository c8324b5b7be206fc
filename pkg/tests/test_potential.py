import json
import math
import pathlib
from tempfile import TemporaryDirectory

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exactwkb.errors import NonRationalInput
from exactwkb.potential import (
    BUILTIN_POTENTIALS,
    RationalPotential,
    build_effective_q,
    classify_singularities,
    coulomb,
    double_hump,
    find_turning_points,
    harmonic,
    load_potential,
    polynomial_roots,
)

from . import strategies as x_st


def test_multiple_roots_are_clustered():
    # (x - 1)**2 (x + 2)
    roots = polynomial_roots((2.0, -3.0, 0.0, 1.0))
    assert [m for _, m in roots] == [1, 2]
    assert roots[0][0] == pytest.approx(-2.0, abs=1e-10)
    assert roots[1][0] == pytest.approx(1.0, abs=1e-7)


@given(x_st.separated_roots())
def test_separated_roots_recovered(expected):
    coefficients = np.polynomial.polynomial.polyfromroots(expected)
    roots = polynomial_roots(coefficients)
    assert [m for _, m in roots] == [1] * len(expected)
    assert np.allclose([z for z, _ in roots], expected, atol=1e-8)


def test_constant_has_no_roots():
    assert polynomial_roots((3.0,)) == []


def test_double_hump_shape():
    V = double_hump()
    assert [m for _, m in V.poles] == [2, 2]
    assert np.allclose([z for z, _ in V.poles], [-1j, 1j], atol=1e-7)
    maxima = V.real_maxima()
    assert len(maxima) == 2
    for (x, top), sign in zip(maxima, (-1, 1)):
        assert x == pytest.approx(sign * math.sqrt(3.0), rel=1e-8)
        assert top == pytest.approx(0.125, rel=1e-10)
    assert V(0.0) == pytest.approx(-1.0)
    assert V.asymptotic_value() == 0
    assert V.is_real()


def test_turning_points_without_langer_term():
    q = build_effective_q(double_hump(), -0.5, 0.5, langer=False)
    assert q.langer_poles == ()
    points = sorted(
        (z for z, _ in find_turning_points(q)), key=lambda z: (z.imag, z.real)
    )
    # x**2 solves y**2 + 4 y - 1 = 0
    real = math.sqrt(math.sqrt(5.0) - 2.0)
    imag = math.sqrt(math.sqrt(5.0) + 2.0)
    expected = [-1j * imag, -real, real, 1j * imag]
    assert np.allclose(points, expected, atol=1e-8)


def test_langer_term_moves_turning_points():
    bare = build_effective_q(double_hump(), -0.5, 0.5, langer=False)
    lifted = build_effective_q(double_hump(), -0.5, 0.5)
    assert len(lifted.langer_poles) == 2

    def well_edge(q):
        return max(z.real for z, _ in q.turning_points if abs(z.imag) < 1e-9)

    # V scaled by 1 + hbar**2 / 2 once the Langer term is added
    assert well_edge(bare) == pytest.approx(0.48587, abs=1e-4)
    assert well_edge(lifted) == pytest.approx(0.52551, abs=1e-4)


def test_coulomb_turning_points_solve_quadratic():
    q = build_effective_q(coulomb(2.0, 0, 1.0), -1.0, 1.0)
    # -E r**2 - alpha r + hbar**2 / 4 = 0
    expected = [1.0 - math.sqrt(0.75), 1.0 + math.sqrt(0.75)]
    found = sorted(z.real for z, _ in q.turning_points)
    assert found == pytest.approx(expected, rel=1e-10)
    info = classify_singularities(q)
    assert [s.order for s in info] == [2]
    assert abs(info.entries[0].location) < 1e-12
    assert info.infinity_order == 0
    assert info.infinity_coefficient == pytest.approx(1.0)
    assert info.infinity_divergent


def test_coulomb_at_threshold_decays_like_inverse_r():
    q = build_effective_q(coulomb(2.0, 0, 1.0), 0.0, 1.0)
    assert q.singularities.infinity_order == -1


@given(st.floats(min_value=-3.0, max_value=3.0), x_st.hbars())
def test_cleared_form_matches_direct_sum(x, hbar):
    q = build_effective_q(double_hump(), -0.3, hbar)
    assert complex(q.value(x)) == pytest.approx(
        complex(q.direct(x)), rel=1e-9, abs=1e-12
    )


def test_common_roots_are_cancelled():
    # (x - 1) (x + 2) / ((x - 1) (x**2 + 1))
    V = RationalPotential((-2.0, 1.0, 1.0), (-1.0, 1.0, -1.0, 1.0))
    assert len(V.numerator) == 2
    assert len(V.denominator) == 3
    assert sorted(z.imag for z, _ in V.poles) == pytest.approx([-1.0, 1.0])
    x = 0.4 + 0.3j
    assert complex(V(x)) == pytest.approx((x + 2) / (x * x + 1), rel=1e-12)


@pytest.mark.parametrize("offset", [1e-3, 1e-5, 1e-7])
def test_value_keeps_precision_next_to_a_double_pole(offset):
    hbar, E = 0.1, 0.05
    q = build_effective_q(double_hump(), E, hbar)
    x = 1j + offset * np.exp(0.3j)
    up, down = (x - 1j) ** 2, (x + 1j) ** 2
    exact = (x * x - 1) / (up * down) - E + 0.25 * hbar**2 * (
        1 / up + 1 / down
    )
    assert complex(q.value(x)) == pytest.approx(exact, rel=1e-12)
    assert q.derivatives(x)[0] == pytest.approx(exact, rel=1e-12)


def test_derivatives_match_finite_differences():
    q = build_effective_q(double_hump(), -0.4 + 0.1j, 0.3)
    x, h, k = 0.7 + 0.2j, 1e-5, 1e-4
    value, slope, curvature = q.derivatives(x)
    assert value == pytest.approx(q.value(x))
    assert slope == pytest.approx(
        (q.value(x + h) - q.value(x - h)) / (2 * h), rel=1e-6
    )
    assert curvature == pytest.approx(
        (q.value(x + k) - 2 * q.value(x) + q.value(x - k)) / k**2, rel=1e-5
    )


def test_negative_hbar_rejected():
    with pytest.raises(ValueError, match="hbar"):
        build_effective_q(harmonic(), 1.0, -0.1)


@pytest.mark.parametrize(
    "alpha, l", [(0.0, 0), (-1.0, 0), (1.0, -1)], ids=["zero", "neg", "l"]
)
def test_coulomb_parameters_validated(alpha, l):
    with pytest.raises(NonRationalInput):
        coulomb(alpha, l)


def test_builtin_registry():
    assert {"double-hump", "coulomb", "harmonic"} <= set(BUILTIN_POTENTIALS)
    assert load_potential("harmonic") == harmonic()
    assert load_potential("coulomb", alpha=1.0, l=1).numerator == (2.0, -1.0)


def test_json_literal_and_file():
    V = load_potential('{"num": [[-1, 0], 0, 1], "den": [1, 0, 2, 0, 1]}')
    assert V.numerator == double_hump().numerator
    assert V.denominator == double_hump().denominator

    with TemporaryDirectory() as folder:
        path = pathlib.Path(folder) / "well.json"
        with open(path, "w") as fout:
            json.dump(double_hump().to_json(), fout)
        loaded = load_potential(str(path))
    assert loaded.label == "well"
    assert loaded.numerator == double_hump().numerator


@pytest.mark.parametrize(
    "spec",
    ["not-a-potential", '{"den": [1]}', '{"num": 3}', '{"num": [[1, 2, 3]]}'],
)
def test_bad_potential_specs(spec):
    with pytest.raises(NonRationalInput):
        load_potential(spec)
