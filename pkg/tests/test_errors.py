import inspect

import pytest
from hypothesis import given
from hypothesis import strategies as st

from exactwkb import errors, parse
from exactwkb.potential import RationalPotential
from exactwkb.settings import InvalidSetting

PIPELINE_ERRORS = [
    cls
    for _, cls in inspect.getmembers(errors, inspect.isclass)
    if issubclass(cls, Exception) and cls.__module__ == errors.__name__
]


@pytest.mark.parametrize("cls", PIPELINE_ERRORS, ids=lambda c: c.__name__)
def test_every_error_derives_from_base(cls):
    assert issubclass(cls, errors.ExactWKBError)
    assert cls.__doc__


def test_configuration_errors_stay_outside_the_pipeline():
    assert issubclass(InvalidSetting, ValueError)
    assert not issubclass(InvalidSetting, errors.ExactWKBError)
    assert not issubclass(parse.InvalidOrdering, errors.ExactWKBError)


def test_canonical_path_error_carries_sectors():
    err = errors.CanonicalPathNotFound("I0", "P1", "3 fans exhausted")
    assert (err.source, err.target) == ("I0", "P1")
    assert str(err) == "no canonical path I0 -> P1: 3 fans exhausted"


def test_tracing_stalled_carries_location():
    err = errors.TracingStalled("step collapsed", 1 + 2j)
    assert err.location == 1 + 2j
    assert "step collapsed" in str(err)


def test_resonant_denominator_keeps_amplitudes():
    err = errors.ResonantDenominator("denominator 1e-9", {"a": 1.0})
    assert err.amplitudes == {"a": 1.0}


def test_zero_denominator_rejected():
    with pytest.raises(errors.NonRationalInput, match="zero polynomial"):
        RationalPotential((1.0,), (0.0,))


def test_shared_root_cancelled():
    # (x - 1) / (x - 1)
    V = RationalPotential((-1.0, 1.0), (-1.0, 1.0))
    assert V.poles == []
    assert complex(V(0.3)) == pytest.approx(1.0)


@given(st.sampled_from([float("nan"), float("inf"), -float("inf")]))
def test_non_finite_coefficients_rejected(bad):
    with pytest.raises(errors.NonRationalInput):
        RationalPotential((1.0, bad), (1.0,))


@given(st.sampled_from([parse.ENV, parse.CLI, parse.CFG]))
def test_against_logically_unsound_order(order):
    with pytest.raises(parse.InvalidOrdering):
        _ = order > order
    with pytest.raises(parse.InvalidOrdering):
        _ = order < order
