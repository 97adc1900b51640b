import math

import numpy as np
import pytest

from lorentz_transport.errors import DimensionMismatchError
from lorentz_transport.spacetime import (CausalClass, Event, MinkowskiSpacetime, TangentVector, causal_classify,
                                         check_splitting, h_norm, lorentz_distance, metric_inner,
                                         sample_future_causal_vectors, tau)


@pytest.mark.parametrize("components, expected", [((1.0, 0.0), -1.0), ((0.0, 1.0), 1.0), ((1.0, 1.0), 0.0)])
def test_metric_inner(model, origin, components, expected):
    v = TangentVector(origin, components)
    assert metric_inner(model, v, v) == expected


@pytest.mark.parametrize("y, expected", [
    ((2.0, 1.0), CausalClass.CHRONOLOGICAL),
    ((1.0, 1.0), CausalClass.NULL_CAUSAL),
    ((0.0, 1.0), CausalClass.UNRELATED),
    ((-2.0, 0.0), CausalClass.UNRELATED),
    ((0.0, 0.0), CausalClass.EQUAL),
])
def test_causal_classify(model, origin, y, expected):
    assert causal_classify(model, origin, Event(y)) is expected


def test_classify_tolerates_rounding_on_the_cone(model, origin):
    assert causal_classify(model, origin, Event((1.0, 1.0 - 1e-14))) is CausalClass.NULL_CAUSAL


def test_lorentz_distance(model, origin):
    assert lorentz_distance(model, origin, Event((2.0, 1.0))) == pytest.approx(math.sqrt(3.0))
    assert lorentz_distance(model, origin, Event((1.0, 1.0))) == 0.0
    assert lorentz_distance(model, origin, Event((0.0, 1.0))) == 0.0


def test_reverse_triangle_inequality(model):
    x, z, y = Event((0.0, 0.0)), Event((1.0, 0.4)), Event((3.0, 0.5))
    assert lorentz_distance(model, x, y) >= lorentz_distance(model, x, z) + lorentz_distance(model, z, y)


def test_tau_and_h_norm():
    model = MinkowskiSpacetime(2)
    assert tau(model, Event((3.0, 1.0, -2.0))) == 6.0
    assert h_norm(MinkowskiSpacetime(1), TangentVector(Event((0.0, 0.0)), (3.0, 4.0))) == 5.0
    assert model.tau_differential(Event((0.0, 0.0, 0.0))).components == (2.0, 0.0, 0.0)


def test_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        Event((1.0,))
    with pytest.raises(DimensionMismatchError):
        tau(MinkowskiSpacetime(2), Event((0.0, 0.0)))
    with pytest.raises(DimensionMismatchError):
        TangentVector(Event((0.0, 0.0)), (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        Event((math.nan, 0.0))


def test_tau_scale_must_satisfy_splitting_bound():
    with pytest.raises(ValueError):
        MinkowskiSpacetime(1, tau_scale=1.5)
    assert MinkowskiSpacetime(1, tau_scale=3.0).tau_label == "3.0t"
    assert MinkowskiSpacetime(1).tau_label == "2t"


def test_future_cone_membership(model, origin):
    assert model.is_future_causal(TangentVector(origin, (1.0, 1.0)))
    assert not model.is_future_causal(TangentVector(origin, (-1.0, 0.0)))
    assert not model.is_future_causal(TangentVector(origin, (0.0, 0.0)))
    assert model.is_future_timelike(TangentVector(origin, (2.0, 1.0)))
    assert not model.is_future_timelike(TangentVector(origin, (1.0, 1.0)))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("tau_scale", [2.0, 5.0])
def test_splitting_bound_holds_on_samples(n, tau_scale):
    model = MinkowskiSpacetime(n, tau_scale)
    base = Event((0.0,) * (n + 1))
    vectors = sample_future_causal_vectors(np.random.default_rng(n), model, base, 500)
    assert len(vectors) == 500
    assert all(model.is_future_causal(v) for v in vectors)
    result = check_splitting(model, vectors)
    assert result.passed
    assert result.samples == 500


def test_geometry_tables(model, origin):
    assert np.array_equal(model.metric_tensor(origin), np.diag([-1.0, 1.0]))
    assert not model.christoffel(origin).any()
    assert model.h_distance(origin, Event((3.0, 4.0))) == 5.0


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 3])
def test_splitting_bound_on_ten_thousand_samples(n):
    model = MinkowskiSpacetime(n)
    vectors = sample_future_causal_vectors(np.random.default_rng(100 + n), model, Event((0.0,) * (n + 1)), 10_000)
    result = check_splitting(model, vectors, tolerance=1e-12)
    assert result.passed
    assert result.samples == 10_000
