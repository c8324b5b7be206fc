"""
Exception hierarchy for the exact-WKB pipeline.

Every failure the numerical pipeline can report derives from
:class:`ExactWKBError` so that callers (and the command line front end) can
separate solver failures from programming errors.

Classes
-------
ExactWKBError
    Base class of all pipeline failures.
NonRationalInput, RootFindingFailed
    Raised while building potentials and their singularity data.
BranchAmbiguous, QuadratureNotConverged, BranchNotClosed
    Raised by contour discretisation and action quadrature.
NonGenericGraph, TracingStalled, CanonicalPathNotFound
    Raised while assembling Stokes graphs and planning paths.
EvaluationAtSingularity, StiffnessFailure, NonCanonicalPath
    Raised by chi-factor evaluation.
NoRootInWindow, GraphDegenerate, ResonantDenominator, NoResonanceInWindow,
SeedDivergence
    Raised by the connection solvers.
GridTooCoarse, NonDecayingPotential, NoPeakFound
    Raised by the brute-force oracle.
"""

from __future__ import annotations

import typing


class ExactWKBError(Exception):
    """
    Base class for every failure raised by the exact-WKB pipeline.

    Examples
    --------
    >>> try:
    ...     solve()
    ... except ExactWKBError as err:
    ...     print(type(err).__name__, err)
    """

    pass


class NonRationalInput(ExactWKBError, ValueError):
    """
    Raised when potential coefficients do not describe a reduced rational
    function.

    Examples
    --------
    >>> RationalPotential(numerator=(1.0,), denominator=(0.0,))
    Traceback (most recent call last):
    ...
    NonRationalInput: denominator is the zero polynomial

    Notes
    -----
    Non-finite coefficients and numerator/denominator pairs sharing a root
    are rejected as well.
    """

    pass


class RootFindingFailed(ExactWKBError):
    """
    Raised when polished polynomial roots do not meet the residual threshold.
    """

    pass


class BranchAmbiguous(ExactWKBError):
    """
    Raised when refining a path cannot make the tracked square root
    continuous.

    This happens when a path runs (almost) through a turning point: the
    square root changes sign over an arbitrarily short step and no amount of
    subdivision separates the two branches.
    """

    pass


class QuadratureNotConverged(ExactWKBError):
    """
    Raised when an adaptive quadrature misses its error target.

    Examples
    --------
    >>> # omega is not integrable at r = 0 once the Langer term is dropped
    >>> endpoint_omega_integral(q_without_langer, 0.0, 1.0)
    Traceback (most recent call last):
    ...
    QuadratureNotConverged: ...
    """

    pass


class BranchNotClosed(ExactWKBError):
    """
    Raised when a loop encloses an odd number of branch points, so the
    square root does not return to its starting value.
    """

    pass


class NonGenericGraph(ExactWKBError):
    """
    Raised when turning points are multiple or nearly colliding.

    Simple-turning-point Stokes geometry needs every root of q to be simple
    and separated from the others by at least ten clearances.
    """

    pass


class TracingStalled(ExactWKBError):
    """
    Raised when a Stokes line stepper stops making progress.

    Attributes
    ----------
    location : complex
        Where the stepper stalled.
    """

    def __init__(self, message: str, location: complex):
        super().__init__(f"{message} (at {location:.6g})")
        self.location = location


class CanonicalPathNotFound(ExactWKBError):
    """
    Raised when no canonical path joins two sectors.

    Attributes
    ----------
    source, target : str
        The requested sector ids.

    Examples
    --------
    >>> graph.plan("I0", "I1")
    Traceback (most recent call last):
    ...
    CanonicalPathNotFound: no canonical path I0 -> I1
    """

    def __init__(self, source: str, target: str, detail: str = ""):
        message = f"no canonical path {source} -> {target}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.source = source
        self.target = target


class EvaluationAtSingularity(ExactWKBError, ValueError):
    """
    Raised when a local quantity is requested at a pole or turning point.
    """

    pass


class StiffnessFailure(ExactWKBError):
    """
    Raised when the chi integrator cannot complete a path.

    A smaller Planck constant makes the decaying mode of the chi equation
    stiffer; shortening the path or loosening the tolerance usually helps.
    """

    pass


class NonCanonicalPath(ExactWKBError):
    """
    Raised when sigma * Re W fails to increase monotonically along a path.
    """

    pass


class NoRootInWindow(ExactWKBError):
    """
    Raised when a quantization function has no sign change in the window.
    """

    pass


class GraphDegenerate(ExactWKBError):
    """
    Raised for energies inside the band around a barrier top where turning
    points coalesce.
    """

    pass


class ResonantDenominator(ExactWKBError):
    """
    Raised when the scattering denominator nearly vanishes.

    Attributes
    ----------
    amplitudes : Any
        The amplitudes computed before the check, for inspection.
    """

    def __init__(self, message: str, amplitudes: typing.Any = None):
        super().__init__(message)
        self.amplitudes = amplitudes


class NoResonanceInWindow(ExactWKBError):
    """
    Raised when no quasi-bound level falls inside the requested window.
    """

    pass


class SeedDivergence(ExactWKBError):
    """
    Raised when the complex secant iteration leaves its neighbourhood or
    exhausts its iteration limit.
    """

    pass


class GridTooCoarse(ExactWKBError):
    """
    Raised when doubling the oracle grid moves an energy by more than the
    convergence tolerance.
    """

    pass


class NonDecayingPotential(ExactWKBError):
    """
    Raised when the potential does not vanish fast enough at the ends of the
    oracle domain for plane-wave matching.
    """

    pass


class NoPeakFound(ExactWKBError):
    """
    Raised when a transmission scan has no interior maximum to fit.
    """

    pass
