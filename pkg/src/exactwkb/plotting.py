"""
Figures of Stokes graphs.

Only the object-oriented matplotlib API is used, so no pyplot state or
interactive backend is involved; :func:`exactwkb.emission.emit_svg` saves
the figure.
"""

from __future__ import annotations

import logging
import math
import typing

from matplotlib.figure import Figure

from exactwkb.stokes import StokesGraph

logger = logging.getLogger(__name__)

LINE_COLOR = "tab:blue"
CUT_COLOR = "0.55"
TURNING_COLOR = "tab:red"
POLE_COLOR = "black"


def _key(z: complex) -> typing.Tuple[float, float]:
    return (round(z.real, 12), round(z.imag, 12))


def graph_figure(
    graph: StokesGraph,
    extent: typing.Optional[float] = None,
    title: typing.Optional[str] = None,
) -> Figure:
    """
    Draw turning points, poles, Stokes lines, cuts and sector labels.

    Sector labels carry the sign sigma of their fundamental solution.
    Elements are added in the order of their turning-point coordinates so
    the SVG output is stable across runs.

    Parameters
    ----------
    graph : StokesGraph
    extent : float, optional
        Half-width of the square view; by default three times the largest
        finite singular point, at least 2.
    title : str, optional
    """
    points = list(graph.q.singular_points)
    if extent is None:
        reach = max((abs(z) for z in points), default=1.0)
        extent = max(2.0, 3.0 * reach)

    figure = Figure(figsize=(5.0, 5.0))
    ax = figure.add_subplot()

    order = sorted(
        range(len(graph.lines)), key=lambda i: _key(graph.lines[i].origin)
    )
    for index in order:
        polyline = graph.lines[index].polyline
        ax.plot(polyline.real, polyline.imag, color=LINE_COLOR, linewidth=1.0)

    for cut in sorted(graph.cuts, key=lambda c: _key(c.origin)):
        end = cut.origin + 2 * extent * cut.direction
        ax.plot(
            [cut.origin.real, end.real],
            [cut.origin.imag, end.imag],
            color=CUT_COLOR,
            linestyle="--",
            linewidth=0.8,
        )

    turning = sorted(graph.turning_points, key=_key)
    ax.scatter(
        [z.real for z in turning],
        [z.imag for z in turning],
        color=TURNING_COLOR,
        marker="o",
        zorder=3,
        label="turning points",
    )
    poles = sorted((s.location for s in graph.q.singularities), key=_key)
    if poles:
        ax.scatter(
            [z.real for z in poles],
            [z.imag for z in poles],
            color=POLE_COLOR,
            marker="x",
            zorder=3,
            label="poles",
        )

    for sector in sorted(graph.sectors.values(), key=lambda s: s.id):
        if sector.kind == "infinity":
            angle = sector.mid_angle
            spot = 0.85 * extent * complex(math.cos(angle), math.sin(angle))
        else:
            spot = sector.endpoint + 0.08 * extent * (1 + 1j)
        sign = "+" if sector.sigma > 0 else "-"
        ax.annotate(
            f"{sector.id} ({sign})",
            (spot.real, spot.imag),
            ha="center",
            va="center",
            fontsize=8,
        )

    ax.set_xlim(-extent, extent)
    ax.set_ylim(-extent, extent)
    ax.set_aspect("equal")
    ax.set_xlabel("Re x")
    ax.set_ylabel("Im x")
    ax.grid(True, linewidth=0.3)
    if title is None:
        energy = graph.q.energy
        shown = f"{energy.real:.6g}" if energy.imag == 0 else f"{energy:.6g}"
        title = f"E = {shown}, hbar = {graph.q.hbar:.6g}"
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=7)
    logger.debug(
        "drew %d lines, %d turning points and %d sectors",
        len(graph.lines), len(turning), len(graph.sectors),
    )
    return figure

