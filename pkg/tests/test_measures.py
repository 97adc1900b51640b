import json
from fractions import Fraction

import numpy as np
import pytest
from scipy import sparse

from lorentz_transport.cost import assemble_cost_matrix
from lorentz_transport.errors import InvalidMeasureError, PartialMapError
from lorentz_transport.measures import (Coupling, DiscreteMeasure, Instance, generate_instance, marginals,
                                        product_coupling, pushforward, support_intersects)
from lorentz_transport.spacetime import CausalClass, Event


def two_points(t=0.0):
    return Event((t, 0.0)), Event((t, 1.0))


def test_marginals_of_product_coupling():
    mu = DiscreteMeasure.uniform(two_points(0.0))
    nu = DiscreteMeasure.uniform(two_points(3.0))
    assert marginals(product_coupling(mu, nu)) == ((0.5, 0.5), (0.5, 0.5))


def test_marginals_of_diagonal_plan():
    mu = DiscreteMeasure(two_points(0.0), (0.3, 0.7))
    nu = DiscreteMeasure(two_points(3.0), (0.3, 0.7))
    rows, cols = marginals(Coupling(mu, nu, sparse.diags([0.3, 0.7]).tocsr()))
    assert rows == pytest.approx((0.3, 0.7))
    assert cols == pytest.approx((0.3, 0.7))


def test_coupling_rejects_wrong_marginals():
    mu = DiscreteMeasure(two_points(0.0), (0.3, 0.7))
    nu = DiscreteMeasure.uniform(two_points(3.0))
    with pytest.raises(InvalidMeasureError):
        Coupling(mu, nu, sparse.diags([0.3, 0.7]).tocsr())
    with pytest.raises(InvalidMeasureError):
        Coupling(mu, nu, sparse.csr_matrix(np.ones((3, 2)) / 6))


@pytest.mark.parametrize("weights", [(0.5, 0.6), (1.0, 0.0), (1.5, -0.5)])
def test_measure_weights_are_validated(weights):
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure(two_points(), weights)


def test_measure_needs_points():
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure((), ())


def test_repeated_points_are_merged():
    x, y = two_points()
    mu = DiscreteMeasure((x, y, x), (0.25, 0.5, 0.25))
    assert mu.points == (x, y)
    assert mu.weights == (0.5, 0.5)


def test_pushforward_identity_and_constant():
    mu = DiscreteMeasure(two_points(), (0.4, 0.6))
    x, y = mu.points
    identity = pushforward(mu, {x: x, y: y})
    assert identity.points == mu.points and identity.weights == mu.weights
    image = Event((5.0, 0.0))
    constant = pushforward(mu, {x: image, y: image})
    assert constant.points == (image,)
    assert constant.weights == pytest.approx((1.0,))


def test_pushforward_merges_preimages():
    a, b, c = Event((0.0, 0.0)), Event((0.0, 1.0)), Event((0.0, 2.0))
    mu = DiscreteMeasure((a, b, c), (0.2, 0.2, 0.6))
    y, z = Event((4.0, 0.0)), Event((4.0, 1.0))
    image = pushforward(mu, {a: y, b: z, c: y})
    assert image.weights[image.index_of(y)] == pytest.approx(0.8)
    assert image.weights[image.index_of(z)] == pytest.approx(0.2)


def test_pushforward_needs_total_assignment():
    mu = DiscreteMeasure.uniform(two_points())
    with pytest.raises(PartialMapError) as info:
        pushforward(mu, {mu.points[0]: Event((1.0, 0.0))})
    assert info.value.missing == (1,)


@pytest.mark.parametrize("n", [1, 2])
def test_slices_instance_is_chronological_and_disjoint(n):
    model, mu, nu = generate_instance(1, n, (6, 7), "slices", slab_time=3.0, radius=1.0)
    assert (mu.size, nu.size) == (6, 7)
    assert all(model.causal_classify(x, y) is CausalClass.CHRONOLOGICAL for x in mu.points for y in nu.points)
    assert min(model.lorentz_distance(x, y) for x in mu.points for y in nu.points) > 0.0
    assert not support_intersects(mu, nu)


def test_slices_needs_slab_time_above_diameter():
    with pytest.raises(ValueError):
        generate_instance(1, 1, (3, 3), "slices", slab_time=2.0, radius=1.0)


def test_infeasible_instance_has_no_admissible_arcs():
    model, mu, nu = generate_instance(4, 1, (5, 5), "infeasible")
    assert assemble_cost_matrix(model, mu.points, nu.points).all_infinite


def test_marginal_instance_has_spacelike_pairs():
    model, mu, nu = generate_instance(2, 1, (4, 4), "marginal")
    classes = {model.causal_classify(x, y) for x in mu.points for y in nu.points}
    assert CausalClass.UNRELATED in classes
    assert CausalClass.CHRONOLOGICAL in classes


def test_generation_is_deterministic_per_seed():
    first = generate_instance(9, 2, (4, 5), "slices", weights="random-dyadic")
    second = generate_instance(9, 2, (4, 5), "slices", weights="random-dyadic")
    other = generate_instance(10, 2, (4, 5), "slices", weights="random-dyadic")
    assert first[1].points == second[1].points and first[2].weights == second[2].weights
    assert first[1].points != other[1].points


def test_random_dyadic_weights_are_exact():
    _, mu, nu = generate_instance(3, 1, (7, 5), weights="random-dyadic")
    for measure in (mu, nu):
        assert sum(measure.weights) == 1.0
        assert all((w * 2 ** 10).is_integer() for w in measure.weights)


@pytest.mark.parametrize("sizes", [(1, 1), (7, 5), (20, 20), (3, 1000)])
def test_default_weights_sum_to_one_exactly(sizes):
    _, mu, nu = generate_instance(4, 1, sizes)
    for measure in (mu, nu):
        assert sum(Fraction(w) for w in measure.weights) == 1
        assert max(measure.weights) - min(measure.weights) <= 2.0 ** -52
        assert all(abs(w * measure.size - 1.0) <= 1e-15 for w in measure.weights)


def test_default_weights_keep_the_geometry_of_uniform_weights():
    dyadic = generate_instance(8, 2, (6, 6))
    uniform = generate_instance(8, 2, (6, 6), weights="uniform")
    assert dyadic[1].points == uniform[1].points and dyadic[2].points == uniform[2].points


@pytest.mark.parametrize("sizes, profile", [((0, 3), "slices"), ((2, 2), "wormhole")])
def test_generator_arguments_are_validated(sizes, profile):
    with pytest.raises(ValueError):
        generate_instance(0, 1, sizes, profile)


def test_instance_file_round_trip_is_bit_exact(tmp_path):
    model, mu, nu = generate_instance(12, 2, (5, 4), "slices")
    path = tmp_path / "instance.json"
    Instance(model, mu, nu, 12, "slices").write(str(path))
    data = json.loads(path.read_text())
    assert data["tau"] == "2t" and data["dimension"] == 3
    loaded = Instance.read(str(path))
    assert loaded.mu.points == mu.points and loaded.mu.weights == mu.weights
    assert loaded.nu.points == nu.points and loaded.nu.weights == nu.weights
    assert loaded.seed == 12 and loaded.model.dimension == 3
