import math
import sys

import numpy as np
import pytest

from conftest import (
    as_solution,
    brute_force_optimum,
    make_instance,
    random_instance,
    reference_feasible,
    reference_route_cost,
)
from lensvrp.errors import ExternalFailure, WarmStartInfeasible
from lensvrp.model import Route, Solution, check_feasibility, solution_cost
from lensvrp.neighborhood import Neighborhood
from lensvrp.repair import (
    RepairConfig,
    SubProblem,
    build_initial_solution,
    external_repair,
    extract_subproblem,
    improvement,
    repair,
)


class TestImprovement:
    def test_positive(self):
        assert improvement(10.0, 7.5) == 2.5

    def test_clamped(self):
        assert improvement(10.0, 12.0) == 0.0

    def test_zero(self):
        assert improvement(10.0, 10.0) == 0.0


class TestExtractSubproblem:
    def test_routes_and_fleet(self):
        rng = np.random.default_rng(0)
        inst = random_instance(rng, 8, 4)
        sol = as_solution([[1, 2], [3, 4], [5, 6], [7, 8]])
        nb = Neighborhood(2, frozenset({2, 0, 3}), (2, 0, 3))
        sub, warm = extract_subproblem(inst, sol, nb)
        assert sub.fleet_size == 3
        assert [tuple(r) for r in warm] == [(5, 6), (1, 2), (7, 8)]
        assert sorted(c.id for c in sub.instance.customers) == [1, 2, 5, 6, 7, 8]
        assert sub.instance.capacity == inst.capacity
        assert sub.instance.horizon == inst.horizon

    def test_warm_start_cost_preserved(self):
        rng = np.random.default_rng(1)
        inst = random_instance(rng, 6, 3)
        sol = as_solution([[1, 2], [3, 4], [5, 6]])
        nb = Neighborhood(0, frozenset({0, 1}), (0, 1))
        sub, warm = extract_subproblem(inst, sol, nb)
        got = sum(reference_route_cost(sub.instance, list(r)) for r in warm)
        want = reference_route_cost(inst, [1, 2]) + reference_route_cost(inst, [3, 4])
        assert got == pytest.approx(want, abs=1e-12)


def _feasible_subproblem(rng, n, fleet):
    """Random sub-problem with a feasible warm start, found by retry."""
    while True:
        inst = random_instance(rng, n, fleet)
        sol = build_trivial(inst, fleet)
        if sol is not None:
            return SubProblem(inst, fleet), sol


def build_trivial(inst, fleet):
    """Greedy sequential warm start, or None when it fails."""
    ids = sorted(inst.customers, key=lambda c: c.window.earliest)
    routes = [[] for _ in range(fleet)]
    for c in ids:
        placed = False
        for r in routes:
            cand = r + [c.id]
            if reference_feasible_route(inst, cand):
                r.append(c.id)
                placed = True
                break
        if not placed:
            return None
    return [Route(tuple(r)) for r in routes]


def reference_feasible_route(inst, route):
    if sum(inst.customer(cid).demand for cid in route) > inst.capacity + 1e-9:
        return False
    t = inst.horizon.earliest
    prev = inst.depot_location
    for cid in route:
        c = inst.customer(cid)
        t += math.hypot(prev.x - c.location.x, prev.y - c.location.y)
        t = max(t, c.window.earliest)
        if t > c.window.latest + 1e-9:
            return False
        t += c.service_duration
        prev = c.location
    t += math.hypot(prev.x - inst.depot_location.x, prev.y - inst.depot_location.y)
    return t <= inst.horizon.latest + 1e-9


class TestRepair:
    def test_never_worse_and_feasible(self):
        rng = np.random.default_rng(42)
        config = RepairConfig()
        for _ in range(60):
            sub, warm = _feasible_subproblem(rng, int(rng.integers(3, 8)), 3)
            warm_cost = sum(reference_route_cost(sub.instance, list(r)) for r in warm)
            out = repair(sub, warm, config, rng)
            out_cost = sum(reference_route_cost(sub.instance, list(r)) for r in out)
            assert out_cost <= warm_cost + 1e-9
            assert reference_feasible(sub.instance, [list(r) for r in out])
            assert len([r for r in out if len(r) > 0]) <= sub.fleet_size

    def test_identity_when_no_gain(self):
        # one customer: the only feasible tour is out-and-back
        inst = make_instance([(1, 0, 5, 1, 0, 0, 100)], fleet_size=1)
        sub = SubProblem(inst, 1)
        warm = [Route((1,))]
        out = repair(sub, warm, RepairConfig(), np.random.default_rng(0))
        assert [tuple(r) for r in out] == [(1,)]

    def test_infeasible_warm_start_rejected(self):
        inst = make_instance([(1, 0, 5, 200, 0, 0, 100)], fleet_size=1, capacity=10)
        sub = SubProblem(inst, 1)
        with pytest.raises(WarmStartInfeasible):
            repair(sub, [Route((1,))], RepairConfig(), np.random.default_rng(0))

    def test_close_to_optimum_on_small_instances(self):
        rng = np.random.default_rng(7)
        config = RepairConfig()
        gaps = []
        for _ in range(25):
            sub, warm = _feasible_subproblem(rng, 5, 2)
            best = brute_force_optimum(sub.instance)
            out = repair(sub, warm, config, rng)
            cost = sum(reference_route_cost(sub.instance, list(r)) for r in out)
            assert cost >= best - 1e-9
            gaps.append(cost / best - 1.0 if best > 0 else 0.0)
        assert sum(gaps) / len(gaps) < 0.05


class TestExternalRepair:
    def test_cat_identity_adapter(self):
        rng = np.random.default_rng(3)
        sub, warm = _feasible_subproblem(rng, 5, 2)
        out = external_repair(sub, warm, "cat")
        assert [tuple(r) for r in out] == [tuple(r) for r in warm]

    def test_failing_command(self):
        rng = np.random.default_rng(4)
        sub, warm = _feasible_subproblem(rng, 4, 2)
        with pytest.raises(ExternalFailure):
            external_repair(sub, warm, f"{sys.executable} -c 'import sys; sys.exit(5)'")

    def test_garbage_output(self):
        rng = np.random.default_rng(5)
        sub, warm = _feasible_subproblem(rng, 4, 2)
        with pytest.raises(ExternalFailure):
            external_repair(
                sub, warm, f"{sys.executable} -c 'print(\"not route lines\")'"
            )

    def test_infeasible_output_falls_back(self):
        rng = np.random.default_rng(6)
        sub, warm = _feasible_subproblem(rng, 4, 2)
        # echoes a single bogus route claiming to visit only customer 1
        out = external_repair(sub, warm, f"{sys.executable} -c 'print(1)'")
        assert [tuple(r) for r in out] == [tuple(r) for r in warm]


class TestBuildInitialSolution:
    def test_feasible_on_random_instances(self):
        rng = np.random.default_rng(8)
        config = RepairConfig()
        built = 0
        for _ in range(30):
            inst = random_instance(rng, 8, 5)
            try:
                sol = build_initial_solution(inst, config, rng)
            except Exception:
                continue
            assert check_feasibility(inst, sol).feasible
            built += 1
        assert built >= 20
