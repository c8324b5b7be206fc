import pathlib
from tempfile import TemporaryDirectory

from matplotlib.figure import Figure

from exactwkb.emission import autoemit_config
from exactwkb.plotting import graph_figure
from exactwkb.potential import build_effective_q, double_hump
from exactwkb.stokes import trace_graph


def _graph():
    q = build_effective_q(double_hump(), -0.5, 0.5)
    return trace_graph(q, with_lines=False)


def test_figure_shows_sectors_and_singular_points():
    figure = graph_figure(_graph())
    assert isinstance(figure, Figure)
    (ax,) = figure.axes
    assert ax.get_title() == "E = -0.5, hbar = 0.5"
    labels = sorted(text.get_text() for text in ax.texts)
    assert [label.split()[0] for label in labels] == ["I0", "I1", "P0", "P1"]
    assert ax.get_xlim() == ax.get_ylim()
    _, legend = ax.get_legend_handles_labels()
    assert legend == ["turning points", "poles"]


def test_custom_extent_and_title():
    figure = graph_figure(_graph(), extent=5.0, title="well")
    (ax,) = figure.axes
    assert ax.get_xlim() == (-5.0, 5.0)
    assert ax.get_title() == "well"


def test_svg_emission_is_stable():
    graph = _graph()
    with TemporaryDirectory() as folder:
        first = autoemit_config(
            pathlib.Path(folder) / "a.svg", graph_figure(graph)
        )
        second = autoemit_config(
            pathlib.Path(folder) / "b.svg", graph_figure(graph)
        )
        assert first.read_text() == second.read_text()
