"""
exactwkb - Fundamental solutions of the one-dimensional Schroedinger equation.

For a rational potential V the equation hbar**2 psi'' = (V - E) psi is
solved through its exact-WKB fundamental solutions: the Stokes graph of
q = V - E (with the Langer term at simple and double poles) fixes a
recessive solution per sector. Connection coefficients between those
solutions give bound states, tunnelling amplitudes, resonance widths and
Coulomb levels. A brute-force real-axis oracle checks every result
independently.

Quick Start
-----------
>>> from exactwkb import double_hump, bound_states, barrier_amplitudes
>>> V = double_hump()
>>> [level.energy.real for level in bound_states(V, 0.5, (-1.0, 0.0))]
[...]
>>> barrier_amplitudes(V, 0.1, 0.05).unitarity_defect < 1e-6
True

Tolerances
----------
Thresholds live on :class:`Tolerances`. They resolve from ``--tol``
overrides, a run file and ``EXACTWKB_*`` environment variables, in that
order by default. Pass ``order`` to change the precedence:

>>> from exactwkb import CFG, CLI, ENV, resolve_tolerances
>>> tol = resolve_tolerances("run.ini", order=(ENV > CFG) > CLI)
"""
from exactwkb.connection import (
    ConnectionSolver,
    alpha,
    barrier_amplitudes,
    bound_states,
    chi_factor,
    coulomb_levels,
    coulomb_phase,
    resonances,
)
from exactwkb.errors import ExactWKBError
from exactwkb.parse import CFG, CLI, ENV
from exactwkb.potential import (
    RationalPotential,
    build_effective_q,
    coulomb,
    double_hump,
    harmonic,
    load_potential,
)
from exactwkb.settings import Tolerances, emit_tolerances, resolve_tolerances
from exactwkb.stokes import trace_graph
from exactwkb._version import __version__

__author__ = """William Christopher Fong"""
__email__ = "willfong@mit.edu"


__all__ = [
    "RationalPotential",
    "build_effective_q",
    "load_potential",
    "double_hump",
    "coulomb",
    "harmonic",
    "trace_graph",
    "ConnectionSolver",
    "alpha",
    "chi_factor",
    "bound_states",
    "barrier_amplitudes",
    "resonances",
    "coulomb_levels",
    "coulomb_phase",
    "Tolerances",
    "resolve_tolerances",
    "emit_tolerances",
    "ExactWKBError",
    "ENV",
    "CFG",
    "CLI",
]
