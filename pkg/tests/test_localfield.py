import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epsmode.localfield import ROUTES, emission_enhancement, local_field_factor


@pytest.mark.parametrize("eps", [1.0, 1.5, 2.0, 4.0, 12.0])
def test_routes_agree(eps):
    closed = local_field_factor(eps).factor
    assert closed == pytest.approx(3 * eps / (2 * eps + 1), rel=1e-15)
    for route in ROUTES:
        assert abs(local_field_factor(eps, route).factor - closed) <= 1e-12


def test_known_values():
    assert local_field_factor(1.0).factor == 1.0
    assert local_field_factor(4.0).factor == pytest.approx(4 / 3)
    assert emission_enhancement(2.0) == pytest.approx(2.0364675298, rel=1e-10)
    assert emission_enhancement(4.0) == pytest.approx(32 / 9, rel=1e-14)


def test_k_route_switches_to_linear_solve():
    assert local_field_factor(1.5, "fixed-point-K").method == "iteration"
    assert local_field_factor(4.0, "fixed-point-K").method.startswith("linear solve")
    assert local_field_factor(2.4, "fixed-point-K").method.startswith("linear solve")
    assert local_field_factor(12.0, "fixed-point-G").iterations > 1


def test_validation():
    with pytest.raises(ValueError):
        local_field_factor(0.5)
    with pytest.raises(ValueError):
        local_field_factor(2.0, "other")
    with pytest.raises(ValueError):
        emission_enhancement(0.9)


@settings(max_examples=50, deadline=None)
@given(eps=st.floats(1.0, 100.0))
def test_factor_bounds_and_monotone(eps):
    r = local_field_factor(eps)
    assert 1.0 <= r.factor < 1.5
    assert local_field_factor(eps + 0.5).factor > r.factor
    assert r.emission_factor == pytest.approx(emission_enhancement(eps), rel=1e-14)
    assert abs(local_field_factor(eps, "fixed-point-G").factor - r.factor) <= 1e-12
