from typing import NamedTuple

import numpy as np
import pytest

from lorentz_transport import (CostMatrix, DiscreteMeasure, Event, MinkowskiSpacetime, PotentialPair, SolveResult,
                               assemble_cost_matrix, build_pi_solution, central_pi_solution, generate_instance, solve)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale sweeps over many seeds")


class SolvedInstance(NamedTuple):
    model: MinkowskiSpacetime
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    matrix: CostMatrix
    result: SolveResult
    potentials: PotentialPair
    central: PotentialPair


def solved_instance(seed: int, sizes=(5, 5), profile: str = "slices", n: int = 1) -> SolvedInstance:
    model, mu, nu = generate_instance(seed, n, sizes, profile)
    matrix = assemble_cost_matrix(model, mu.points, nu.points)
    result = solve(matrix, mu, nu)
    support = result.support()
    return SolvedInstance(model, mu, nu, matrix, result, build_pi_solution(support, matrix),
                          central_pi_solution(support, matrix))


@pytest.fixture
def model():
    return MinkowskiSpacetime(1)


@pytest.fixture
def origin():
    return Event((0.0, 0.0))


@pytest.fixture
def make_matrix(model):
    """CostMatrix from a table of values; np.inf marks a forbidden pair."""

    def make(values):
        values = np.asarray(values, dtype=float)
        rows, cols = values.shape
        sources = tuple(Event((0.0, float(i))) for i in range(rows))
        targets = tuple(Event((10.0, float(j))) for j in range(cols))
        admissible = np.isfinite(values)
        return CostMatrix(model, sources, targets, np.where(admissible, values, 0.0), admissible)

    return make


@pytest.fixture
def uniform_measures():
    def make(rows: int, cols: int):
        mu = DiscreteMeasure.uniform([Event((0.0, float(i))) for i in range(rows)])
        nu = DiscreteMeasure.uniform([Event((10.0, float(j))) for j in range(cols)])
        return mu, nu

    return make


@pytest.fixture(scope="session")
def slices():
    return solved_instance(3)


@pytest.fixture(scope="session")
def slices_2d():
    return solved_instance(11, sizes=(4, 4), n=2)
