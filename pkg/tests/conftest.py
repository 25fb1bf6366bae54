"""Shared builders and independent brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

from lensvrp.model import Customer, Instance, Location, Route, Solution, TimeWindow

EPS = 1e-9


def make_instance(
    customers: Sequence[Tuple],
    fleet_size: int = 5,
    capacity: float = 100.0,
    horizon: Tuple[float, float] = (0.0, 1000.0),
    depot: Tuple[float, float] = (0.0, 0.0),
    name: str = "test",
) -> Instance:
    """Customers as (id, x, y, demand, service, earliest, latest) tuples."""
    return Instance(
        name,
        Location(*depot),
        TimeWindow(*horizon),
        fleet_size,
        capacity,
        tuple(
            Customer(cid, Location(x, y), q, tau, TimeWindow(e, l))
            for cid, x, y, q, tau, e, l in customers
        ),
    )


def random_instance(
    rng: np.random.Generator,
    n: int,
    fleet_size: int,
    tight: bool = False,
) -> Instance:
    """Small random instance; windows may or may not be jointly satisfiable."""
    horizon_end = 400.0
    customers = []
    for cid in range(1, n + 1):
        x, y = rng.uniform(0, 100, size=2)
        demand = float(rng.integers(1, 20))
        service = float(rng.integers(0, 10))
        if tight:
            start = float(rng.uniform(0, horizon_end * 0.7))
            length = float(rng.uniform(20, 120))
        else:
            start = float(rng.uniform(0, horizon_end * 0.3))
            length = float(rng.uniform(100, horizon_end))
        customers.append(
            (cid, float(x), float(y), demand, service, start, min(start + length, horizon_end))
        )
    capacity = float(rng.integers(30, 80))
    return make_instance(
        customers,
        fleet_size=fleet_size,
        capacity=capacity,
        horizon=(0.0, horizon_end),
        depot=(50.0, 50.0),
    )


def ref_dist(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Plain sqrt(dx² + dy²); same rounding behaviour as the library."""
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy)


def reference_route_cost(instance: Instance, order: Sequence[int]) -> float:
    """Edge-sum cost recomputation, independent of the library's schedule code."""
    if not order:
        return 0.0
    pts = {0: (instance.depot_location.x, instance.depot_location.y)}
    for c in instance.customers:
        pts[c.id] = (c.location.x, c.location.y)
    path = [0] + list(order) + [0]
    return sum(
        ref_dist(pts[a], pts[b]) for a, b in zip(path, path[1:])
    )


def reference_feasible(instance: Instance, routes: Sequence[Sequence[int]]) -> bool:
    """Independent feasibility verdict: coverage, fleet, capacity, windows."""
    visited = [cid for r in routes for cid in r]
    if sorted(visited) != sorted(c.id for c in instance.customers):
        return False
    if sum(1 for r in routes if r) > instance.fleet_size:
        return False
    by_id = {c.id: c for c in instance.customers}
    for r in routes:
        if not r:
            continue
        if sum(by_id[cid].demand for cid in r) > instance.capacity + EPS:
            return False
        t = instance.horizon.earliest
        prev = (instance.depot_location.x, instance.depot_location.y)
        for cid in r:
            c = by_id[cid]
            t += ref_dist(prev, (c.location.x, c.location.y))
            t = max(t, c.window.earliest)
            if t > c.window.latest + EPS:
                return False
            t += c.service_duration
            prev = (c.location.x, c.location.y)
        t += ref_dist(prev, (instance.depot_location.x, instance.depot_location.y))
        if t > instance.horizon.latest + EPS:
            return False
    return True


def enumerate_solutions(ids: Sequence[int], max_routes: int):
    """All partitions of ids into at most max_routes ordered routes."""
    ids = list(ids)
    if not ids:
        yield []
        return

    def partitions(items: List[int], k: int):
        if not items:
            yield [[] for _ in range(k)]
            return
        head, tail = items[0], items[1:]
        for rest in partitions(tail, k):
            for i in range(k):
                yield rest[:i] + [[head] + rest[i]] + rest[i + 1 :]

    seen = set()
    for blocks in partitions(ids, max_routes):
        nonempty = [tuple(b) for b in blocks if b]
        key = frozenset(nonempty)
        if key in seen:
            continue
        seen.add(key)
        for perms in itertools.product(*(itertools.permutations(b) for b in nonempty)):
            yield [list(p) for p in perms]


def brute_force_optimum(instance: Instance) -> Optional[float]:
    """Exhaustive best feasible cost, or None if nothing is feasible."""
    best = None
    ids = [c.id for c in instance.customers]
    for routes in enumerate_solutions(ids, instance.fleet_size):
        if reference_feasible(instance, routes):
            cost = sum(reference_route_cost(instance, r) for r in routes)
            if best is None or cost < best:
                best = cost
    return best


def as_solution(routes: Sequence[Sequence[int]]) -> Solution:
    return Solution(tuple(Route(tuple(r)) for r in routes))
