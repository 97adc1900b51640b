import math

import numpy as np
import pytest

from lorentz_transport.cost import ExtendedCost, assemble_cost_matrix, cost_c1, cost_c2, dc2_dx
from lorentz_transport.errors import NotChronologicalError
from lorentz_transport.spacetime import CausalClass, Event, MinkowskiSpacetime


def test_costs_on_examples(model, origin):
    assert cost_c2(model, origin, Event((2.0, 0.0))) == 4.0
    assert cost_c1(model, origin, Event((2.0, 1.0))).value == pytest.approx(4.0 - math.sqrt(3.0))
    assert cost_c2(model, origin, Event((1.0, 1.0))).value == pytest.approx(4.0)
    assert cost_c2(model, origin, origin) == 0.0


@pytest.mark.parametrize("y", [(0.0, 1.0), (-1.0, 0.0), (1.0, 3.0)])
def test_cost_is_infinite_outside_the_causal_future(model, origin, y):
    assert cost_c2(model, origin, Event(y)).is_plus_inf
    assert cost_c1(model, origin, Event(y)).is_plus_inf


def test_extended_cost_is_non_negative():
    with pytest.raises(ValueError):
        ExtendedCost.finite(-1.0)
    with pytest.raises(ValueError):
        ExtendedCost.minus_inf()


def test_c1_splitting_lower_bound(model, origin):
    # c1(x, y) >= max(d(x, y), |y - x|_h) on J+
    for y in (Event((2.0, 1.0)), Event((1.0, 1.0)), Event((5.0, -3.0))):
        c1 = cost_c1(model, origin, y).value
        assert c1 >= model.lorentz_distance(origin, y) - 1e-12
        assert c1 >= model.h_distance(origin, y) - 1e-12


def test_dc2_dx_on_the_time_axis(model, origin):
    assert dc2_dx(model, origin, Event((2.0, 0.0))).components == pytest.approx((-4.0, 0.0))


def test_dc2_dx_closed_form(model, origin):
    gradient = dc2_dx(model, origin, Event((2.0, 1.0))).components
    c1 = 4.0 - math.sqrt(3.0)
    assert gradient[1] == pytest.approx(-2.0 * c1 / math.sqrt(3.0))
    assert gradient[0] == pytest.approx(2.0 * c1 * (-2.0 + 2.0 / math.sqrt(3.0)))


@pytest.mark.parametrize("y", [(2.0, 1.0), (3.0, -0.5), (1.5, 1.2)])
def test_dc2_dx_matches_finite_differences(model, y):
    x = np.array([0.2, 0.1])
    y = Event(y)
    h = 1e-6
    numeric = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        plus = cost_c2(model, Event(tuple(x + e)), y).value
        minus = cost_c2(model, Event(tuple(x - e)), y).value
        numeric.append((plus - minus) / (2 * h))
    assert dc2_dx(model, Event(tuple(x)), y).components == pytest.approx(numeric, rel=1e-5)


@pytest.mark.parametrize("y", [(1.0, 1.0 - 1e-14), (1.0, 1.0), (0.0, 0.0), (0.0, 1.0)])
def test_dc2_dx_only_on_chronological_pairs(model, origin, y):
    with pytest.raises(NotChronologicalError) as info:
        dc2_dx(model, origin, Event(y))
    assert info.value.causal_class is not CausalClass.CHRONOLOGICAL


def test_assemble_all_spacelike(model):
    xs = [Event((0.0, 0.0)), Event((0.0, 1.0))]
    ys = [Event((0.0, 5.0)), Event((0.5, -5.0))]
    matrix = assemble_cost_matrix(model, xs, ys)
    assert matrix.all_infinite
    assert matrix.infinite_count == 4
    assert np.all(np.isinf(matrix.as_float_array()))


def test_assemble_same_points_has_zero_diagonal(model):
    points = [Event((0.0, 0.0)), Event((1.0, 0.2)), Event((2.5, -0.3))]
    matrix = assemble_cost_matrix(model, points, points)
    assert all(matrix[i, i] == 0.0 for i in range(3))
    assert matrix[1, 0].is_plus_inf
    assert matrix[0, 1].is_finite


def test_assemble_with_worker_threads_matches_serial(model):
    rng = np.random.default_rng(5)
    xs = [Event((0.0, float(v))) for v in rng.uniform(-1, 1, 6)]
    ys = [Event((1.0, float(v))) for v in rng.uniform(-1, 1, 7)]
    serial = assemble_cost_matrix(model, xs, ys)
    threaded = assemble_cost_matrix(model, xs, ys, workers=3)
    assert np.array_equal(serial.admissible, threaded.admissible)
    assert np.array_equal(serial.finite_values, threaded.finite_values)


def test_cost_matrix_csv(model, tmp_path):
    xs = [Event((0.0, 0.0)), Event((0.0, 0.9))]
    ys = [Event((1.0, 0.1)), Event((1.0, -0.9))]
    matrix = assemble_cost_matrix(model, xs, ys)
    path = tmp_path / "costs.csv"
    matrix.to_csv(str(path))
    values, admissible = matrix.read_csv_values(str(path))
    assert np.array_equal(admissible, matrix.admissible)
    assert np.array_equal(values[admissible], matrix.finite_values[admissible])


def test_assemble_needs_points(model):
    with pytest.raises(ValueError):
        assemble_cost_matrix(model, [], [Event((1.0, 0.0))])


def sample_pairs(rng, n, count, spread=3.0):
    return rng.uniform(-spread, spread, size=(count, n + 1)), rng.uniform(-spread, spread, size=(count, n + 1))


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 3])
def test_cost_matches_the_closed_form_on_random_pairs(n):
    model = MinkowskiSpacetime(n)
    xs, ys = sample_pairs(np.random.default_rng(n), n, 10_000)
    for x, y in zip(xs, ys):
        dt, dx = y[0] - x[0], float(np.linalg.norm(y[1:] - x[1:]))
        if abs(dt - dx) < 1e-9:
            continue
        cost = cost_c2(model, Event(tuple(x)), Event(tuple(y)))
        if dt > dx:
            expected = (2.0 * dt - math.sqrt(dt * dt - dx * dx)) ** 2
            assert cost.is_finite
            assert abs(cost.value - expected) <= 1e-12 * max(1.0, expected)
        else:
            assert cost.is_plus_inf


def chronological_pairs(rng, n, count):
    for _ in range(count):
        x = rng.uniform(-1.0, 1.0, size=n + 1)
        dt = rng.uniform(0.5, 3.0)
        direction = rng.normal(size=n)
        offset = dt * rng.uniform(0.0, 0.8) * direction / np.linalg.norm(direction)
        yield Event(tuple(x)), Event(tuple(x + np.concatenate(([dt], offset))))


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 3])
def test_dc2_dx_matches_finite_differences_on_samples(n):
    model = MinkowskiSpacetime(n)
    h = 1e-6
    for x, y in chronological_pairs(np.random.default_rng(10 + n), n, 1000):
        numeric = np.zeros(n + 1)
        for k in range(n + 1):
            e = np.zeros(n + 1)
            e[k] = h
            plus = cost_c2(model, Event(tuple(x.as_array() + e)), y).value
            minus = cost_c2(model, Event(tuple(x.as_array() - e)), y).value
            numeric[k] = (plus - minus) / (2 * h)
        analytic = dc2_dx(model, x, y).as_array()
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * (1.0 + np.linalg.norm(analytic))
