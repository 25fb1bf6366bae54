import math

import numpy as np
import pytest

from conftest import as_solution, make_instance, random_instance
from lensvrp.errors import DegenerateCount, TooFewRoutes
from lensvrp.model import Route, compute_schedule
from lensvrp.neighborhood import (
    ENDING_DEPOT,
    SelectorConfig,
    create_neighborhood,
    is_tight,
    point_route_distance,
    rbp_probabilities,
    route_distance,
    successor_node,
)


def _schedule(inst, ids):
    return compute_schedule(inst, Route(tuple(ids)))


class TestTightness:
    def test_threshold_inclusive(self):
        inst = make_instance(
            [(1, 0, 1, 1, 0, 0, 50), (2, 0, 2, 1, 0, 0, 50.001)], horizon=(0, 1000)
        )
        config = SelectorConfig()
        assert is_tight(inst, inst.customer(1), config)
        assert not is_tight(inst, inst.customer(2), config)


class TestSuccessorNode:
    def test_first_arrival_after_midpoint(self):
        # arrivals at 10 and 30; midpoint 20 -> second visit is the successor
        inst = make_instance(
            [
                (1, 0, 10, 1, 0, 0, 100),
                (2, 0, 30, 1, 0, 0, 100),
                (3, 50, 0, 1, 0, 15, 25),
            ],
            horizon=(0, 1000),
        )
        route = Route((1, 2))
        sched = _schedule(inst, [1, 2])
        assert successor_node(inst, sched, route, inst.customer(3)) == 1

    def test_all_arrivals_before_midpoint(self):
        inst = make_instance(
            [(1, 0, 10, 1, 0, 0, 100), (2, 50, 0, 1, 0, 500, 600)], horizon=(0, 1000)
        )
        route = Route((1,))
        sched = _schedule(inst, [1])
        assert successor_node(inst, sched, route, inst.customer(2)) == ENDING_DEPOT


class TestPointRouteDistance:
    def test_tight_uses_successor(self):
        inst = make_instance(
            [
                (1, 0, 10, 1, 0, 0, 1000),
                (2, 0, 30, 1, 0, 0, 1000),
                (3, 50, 30, 1, 0, 15, 25),  # tight: length 10 <= 50
            ],
            horizon=(0, 1000),
        )
        config = SelectorConfig()
        route = Route((1, 2))
        sched = _schedule(inst, [1, 2])
        d = point_route_distance(inst, inst.customer(3), route, sched, config)
        assert d == pytest.approx(50.0)  # distance to customer 2 at (0, 30)

    def test_tight_falls_back_to_depot(self):
        inst = make_instance(
            [(1, 0, 10, 1, 0, 0, 1000), (2, 3, 4, 1, 0, 500, 510)], horizon=(0, 1000)
        )
        config = SelectorConfig()
        d = point_route_distance(
            inst, inst.customer(2), Route((1,)), _schedule(inst, [1]), config
        )
        assert d == pytest.approx(5.0)  # depot at origin

    def test_loose_uses_centroid(self):
        inst = make_instance(
            [
                (1, 0, 0, 1, 0, 0, 1000),
                (2, 4, 0, 1, 0, 0, 1000),
                (3, 2, 3, 1, 0, 0, 1000),  # loose window
            ],
            horizon=(0, 1000),
        )
        config = SelectorConfig()
        d = point_route_distance(
            inst, inst.customer(3), Route((1, 2)), _schedule(inst, [1, 2]), config
        )
        assert d == pytest.approx(3.0)  # centroid (2, 0)

    def test_route_distance_is_min_over_members(self):
        inst = make_instance(
            [
                (1, 0, 0, 1, 0, 0, 1000),
                (2, 100, 100, 1, 0, 0, 1000),
                (3, 1, 0, 1, 0, 0, 1000),
            ],
            horizon=(0, 1000),
        )
        config = SelectorConfig()
        r_i = Route((1, 2))
        r_j = Route((3,))
        d = route_distance(inst, r_i, r_j, _schedule(inst, [3]), config)
        assert d == pytest.approx(1.0)


class TestRbpProbabilities:
    def test_hand_example_three(self):
        p = rbp_probabilities(3, 2.0)
        assert p == pytest.approx([0.8, 0.2, 0.0])

    def test_hand_example_four_linear(self):
        p = rbp_probabilities(4, 1.0)
        assert p == pytest.approx([0.5, 1 / 3, 1 / 6, 0.0])

    def test_properties_over_grid(self):
        for count in range(2, 11):
            for exponent in (0.5, 1.0, 2.0, 4.0, 10.0):
                p = rbp_probabilities(count, exponent)
                assert p.sum() == pytest.approx(1.0, abs=1e-12)
                assert all(a >= b for a, b in zip(p, p[1:]))
                assert p[-1] == 0.0
                assert all(v >= 0 for v in p)

    def test_degenerate(self):
        with pytest.raises(DegenerateCount):
            rbp_probabilities(1, 4.0)


class TestCreateNeighborhood:
    def _solution(self, rng, inst, routes):
        return as_solution(routes)

    def test_structure(self):
        rng = np.random.default_rng(0)
        inst = random_instance(rng, 12, 6)
        routes = [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12]]
        sol = as_solution(routes)
        config = SelectorConfig(n2=4)
        nb = create_neighborhood(sol, inst, config, rng)
        assert len(nb.ordered_members) == 5
        assert nb.ordered_members[0] == nb.anchor
        assert nb.members == frozenset(nb.ordered_members)
        assert len(set(nb.ordered_members)) == 5

    def test_too_few_routes(self):
        rng = np.random.default_rng(0)
        inst = random_instance(rng, 8, 4)
        sol = as_solution([[1, 2], [3, 4], [5, 6], [7, 8]])
        with pytest.raises(TooFewRoutes):
            create_neighborhood(sol, inst, SelectorConfig(n2=4), rng)

    def test_exact_fit_uses_all_routes(self):
        rng = np.random.default_rng(1)
        inst = random_instance(rng, 4, 2)
        sol = as_solution([[1, 2], [3, 4]])
        nb = create_neighborhood(sol, inst, SelectorConfig(n2=1), rng)
        assert nb.members == {0, 1}

    def test_empty_routes_excluded(self):
        rng = np.random.default_rng(2)
        inst = random_instance(rng, 10, 6)
        sol = as_solution([[1, 2], [], [3, 4], [5, 6], [], [7, 8], [9, 10]])
        for _ in range(20):
            nb = create_neighborhood(sol, inst, SelectorConfig(n2=3), rng)
            assert 1 not in nb.members and 4 not in nb.members

    def test_closest_route_picked_most_often(self):
        # anchor forced by placing only its route near others; with loose
        # windows distance is to centroids, so ranks are geometric.
        inst = make_instance(
            [
                (1, 0, 0, 1, 0, 0, 1000),
                (2, 1, 0, 1, 0, 0, 1000),
                (3, 10, 0, 1, 0, 0, 1000),
                (4, 100, 0, 1, 0, 0, 1000),
                (5, 200, 0, 1, 0, 0, 1000),
            ],
            fleet_size=5,
            horizon=(0, 1000),
        )
        sol = as_solution([[1], [2], [3], [4], [5]])
        config = SelectorConfig(n2=1, rank_exponent=4.0)
        rng = np.random.default_rng(3)
        counts = {}
        trials = 2000
        for _ in range(trials):
            nb = create_neighborhood(sol, inst, config, rng)
            if nb.anchor == 0:
                other = nb.ordered_members[1]
                counts[other] = counts.get(other, 0) + 1
        total = sum(counts.values())
        # rank 1 (route of customer 2) should dominate: (4-1)^4 / sum = 81/98
        assert counts.get(1, 0) / total == pytest.approx(81 / 98, abs=0.05)
        # last rank (route of customer 5) has zero probability
        assert counts.get(4, 0) == 0

    def test_deterministic_given_seed(self):
        inst = random_instance(np.random.default_rng(4), 12, 6)
        sol = as_solution([[1, 2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12]])
        config = SelectorConfig()
        a = create_neighborhood(sol, inst, config, np.random.default_rng(77))
        b = create_neighborhood(sol, inst, config, np.random.default_rng(77))
        assert a == b
