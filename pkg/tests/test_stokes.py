import json
import math

import numpy as np
import pytest

from exactwkb.contour import EndpointKind
from exactwkb.emission import dumps
from exactwkb.errors import CanonicalPathNotFound, NonGenericGraph
from exactwkb.potential import (
    build_effective_q,
    coulomb,
    double_hump,
    harmonic,
)
from exactwkb.stokes import (
    Cut,
    asymptotic_directions,
    audit_path,
    plan_canonical_path,
    stokes_directions,
    trace_graph,
)


@pytest.fixture(scope="module")
def bound_q():
    return build_effective_q(double_hump(), -0.5, 0.5)


@pytest.fixture(scope="module")
def bound_graph(bound_q):
    return trace_graph(bound_q)


def test_three_lines_leave_a_simple_turning_point():
    q = build_effective_q(harmonic(), 1.0, 1.0)
    angles = stokes_directions(q, 1.0)
    assert angles == pytest.approx([math.pi / 3, math.pi, 5 * math.pi / 3])


def test_asymptotic_directions_of_constant_tail(bound_q):
    assert asymptotic_directions(bound_q) == pytest.approx(
        [0.5 * math.pi, 1.5 * math.pi]
    )


def test_harmonic_tail_has_four_directions():
    q = build_effective_q(harmonic(), 1.0, 1.0)
    # q ~ x**2: W ~ x**2 / 2 is imaginary on the diagonals
    assert asymptotic_directions(q) == pytest.approx(
        [0.25 * math.pi, 0.75 * math.pi, 1.25 * math.pi, 1.75 * math.pi]
    )


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (-1 + 1j, 1 + 1j, True),
        (-1 - 1j, 1 - 1j, False),
        (1 + 1j, 1 + 2j, False),
        (-1 + 0.5j, 1 + 0.5j, True),
    ],
)
def test_cut_crossing(a, b, expected):
    assert Cut(0j, 1j).crosses(a, b) is expected


def test_double_hump_sectors(bound_q):
    graph = trace_graph(bound_q, with_lines=False)
    assert sorted(graph.sectors) == ["I0", "I1", "P0", "P1"]
    assert graph.lines == []
    assert graph.sector("P0").endpoint == pytest.approx(-1j, abs=1e-7)
    assert graph.sector("P1").endpoint == pytest.approx(1j, abs=1e-7)
    assert graph.conjugate_sector("P0").id == "P1"
    assert graph.sector_at_infinity(0.0).id == "I1"
    assert graph.sector_at_infinity(math.pi).id == "I0"
    assert graph.conjugate_sector("I0").id == "I0"
    # cuts run away from the real axis
    assert sorted(cut.exit_angle for cut in graph.cuts) == pytest.approx(
        [0.5 * math.pi, 1.5 * math.pi]
    )


def test_sector_sign_makes_solution_recessive(bound_q):
    graph = trace_graph(bound_q, with_lines=False)
    for sector in graph.sectors.values():
        principal = np.sqrt(complex(bound_q(sector.representative)))
        if sector.kind == "infinity":
            toward = sector.endpoint
        else:
            toward = sector.endpoint - sector.representative
        assert sector.sigma * (principal * toward).real < 0


def test_unknown_sector(bound_q):
    graph = trace_graph(bound_q, with_lines=False)
    with pytest.raises(KeyError, match="P7"):
        graph.sector("P7")
    with pytest.raises(KeyError):
        graph.sector_at_pole(5.0)


def test_coulomb_cut_splits_infinity():
    q = build_effective_q(coulomb(2.0, 0, 1.0), -1.0, 1.0)
    graph = trace_graph(q, with_lines=False)
    assert sorted(graph.sectors) == ["I0", "I1", "I2", "P0"]
    assert graph.sector_at_pole(0j).id == "P0"
    assert graph.cuts[0].exit_angle == pytest.approx(math.pi)


def test_double_turning_point_is_not_generic():
    q = build_effective_q(harmonic(), 0.0, 1.0)
    with pytest.raises(NonGenericGraph, match="multiple"):
        trace_graph(q)


@pytest.mark.slow
def test_traced_lines(bound_graph):
    assert len(bound_graph.turning_points) == 4
    assert len(bound_graph.lines) == 3 * len(bound_graph.turning_points)
    for line in bound_graph.lines:
        assert line.terminal.kind in ("pole", "infinity", "turning-point")
        assert line.drift() < 1e-6
    bounding = {
        k
        for sector in bound_graph.sectors.values()
        for k in sector.bounding_lines
    }
    assert bounding


@pytest.mark.slow
def test_graph_record_is_serialisable(bound_graph):
    record = json.loads(dumps(bound_graph.to_record()))
    assert sorted(record["sectors"]) == ["I0", "I1", "P0", "P1"]
    assert len(record["lines"]) == len(bound_graph.lines)
    assert record["hbar"] == 0.5

    payload = bound_graph.to_csv_payload()
    assert payload["header"] == ["line", "x", "W"]
    assert {row[0] for row in payload["rows"]} == set(
        range(len(bound_graph.lines))
    )


@pytest.mark.slow
def test_well_ends_do_not_communicate(bound_graph):
    # a solution decaying at both ends of the real axis is a bound state,
    # so below threshold no canonical path crosses the well
    assert not bound_graph.communicates("I1", "I0")
    with pytest.raises(CanonicalPathNotFound, match="I1 -> I0"):
        plan_canonical_path(bound_graph, "I1", "I0")


@pytest.mark.slow
def test_canonical_path_to_a_pole(bound_graph):
    path = plan_canonical_path(bound_graph, "I1", "P1")
    assert path.endpoint_kinds == (EndpointKind.INFINITY, EndpointKind.POLE)
    assert bound_graph.sector_of(path.start).id == "I1"
    assert abs(path.end - 1j) < 2 * bound_graph.tolerances.pole_offset
    assert audit_path(path) <= bound_graph.tolerances.audit_tol
    # planned paths are cached per graph
    assert bound_graph.plan("I1", "P1") is path
    assert ("I1", "P1") in bound_graph.planned_paths


@pytest.mark.slow
def test_graph_is_symmetric_under_conjugation(bound_graph):
    for line in bound_graph.lines:
        mirror = np.conj(line.polyline[:-1])
        mirror = mirror[:: max(1, len(mirror) // 200)]
        gaps = [
            np.max(
                np.min(np.abs(mirror[:, None] - other.polyline[None, :]), 1)
            )
            for other in bound_graph.lines
            if abs(other.origin - line.origin.conjugate()) < 1e-9
        ]
        assert min(gaps) <= 1e-6


def _real_count(points):
    return sum(abs(z.imag) <= 1e-8 * max(1.0, abs(z)) for z in points)


@pytest.mark.slow
@pytest.mark.parametrize("E, real_turning_points", [(0.05, 4), (0.5, 0)])
def test_scattering_layout(E, real_turning_points):
    q = build_effective_q(double_hump(), E, 0.1)
    graph = trace_graph(q, with_lines=False)
    assert sorted(graph.sectors) == ["I0", "I1", "I2", "I3", "P0", "P1"]
    assert len(graph.turning_points) == 4
    assert _real_count(graph.turning_points) == real_turning_points
    assert graph.sector_at_pole(1j).id == "P1"
    right, left = (
        graph.sector_at_infinity(0.25 * math.pi).id,
        graph.sector_at_infinity(0.75 * math.pi).id,
    )
    lower_left, lower_right = (
        graph.sector_at_infinity(1.25 * math.pi).id,
        graph.sector_at_infinity(1.75 * math.pi).id,
    )
    assert graph.communicates(left, lower_left)
    assert graph.communicates(right, lower_right)
    for outer in (right, left, lower_left, lower_right):
        assert graph.communicates(outer, "P1")


@pytest.mark.slow
def test_planning_does_not_depend_on_order():
    q = build_effective_q(double_hump(), 0.05, 0.1)
    first = trace_graph(q, with_lines=False)
    second = trace_graph(q, with_lines=False)
    left = first.sector_at_infinity(0.75 * math.pi).id
    right = first.sector_at_infinity(0.25 * math.pi).id
    first.plan(right, "P1")
    path = first.plan(left, "P1")
    again = second.plan(left, "P1")
    assert np.array_equal(path.points, again.points)
