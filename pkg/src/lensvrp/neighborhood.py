"""Neighborhood construction around a random anchor route.

A neighborhood is the anchor route plus ``n2`` companion routes sampled
without replacement, where closer routes (under the tightness-aware route
distance) receive larger rank-based probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateCount, EmptyRoute, TooFewRoutes
from .model import (
    DEPOT_ID,
    Customer,
    Instance,
    Route,
    RouteSchedule,
    Solution,
    compute_schedule,
    euclid,
    route_centroid,
)

#: Sentinel successor when no visit arrives after the reference midpoint.
ENDING_DEPOT = -1


@dataclass(frozen=True)
class SelectorConfig:
    n2: int = 4
    rank_exponent: float = 4.0
    tight_fraction: float = 0.05
    twd_penalty: float = 1e6


@dataclass(frozen=True)
class Neighborhood:
    anchor: int
    members: frozenset
    ordered_members: Tuple[int, ...]


def successor_node(
    instance: Instance, schedule: RouteSchedule, route: Route, u: Customer
) -> int:
    """Position of the first visit in ``route`` arriving after u's midpoint.

    Returns ENDING_DEPOT when every arrival is at or before the midpoint.
    """
    mid = u.window.midpoint
    for pos, arrival in enumerate(schedule.arrival_times):
        if arrival > mid:
            return pos
    return ENDING_DEPOT


def is_tight(instance: Instance, u: Customer, config: SelectorConfig) -> bool:
    return u.window.length <= config.tight_fraction * instance.horizon.length


def point_route_distance(
    instance: Instance,
    u: Customer,
    route: Route,
    schedule: RouteSchedule,
    config: SelectorConfig,
) -> float:
    """Distance from a customer to a route, tightness-aware.

    Tight windows: distance to the likely successor visit (the depot when no
    visit arrives later than u's midpoint). Otherwise: distance to the route
    centroid.
    """
    if len(route) == 0:
        raise EmptyRoute("point-route distance needs a nonempty route")
    if is_tight(instance, u, config):
        pos = successor_node(instance, schedule, route, u)
        if pos == ENDING_DEPOT:
            return euclid(u.location, instance.depot_location)
        return euclid(u.location, instance.customer(route[pos]).location)
    return euclid(u.location, route_centroid(instance, route))


def route_distance(
    instance: Instance,
    route_i: Route,
    route_j: Route,
    schedule_j: RouteSchedule,
    config: SelectorConfig,
) -> float:
    """d̃(r_i, r_j): minimum point-route distance over customers of r_i."""
    if len(route_i) == 0 or len(route_j) == 0:
        raise EmptyRoute("route distance needs nonempty routes")
    return min(
        point_route_distance(instance, instance.customer(cid), route_j, schedule_j, config)
        for cid in route_i
    )


def rbp_probabilities(count: int, exponent: float) -> np.ndarray:
    """Rank-based probabilities (count - i)^D for ranks i = 1..count.

    Nonincreasing, sums to 1, and the last rank always gets zero mass.
    """
    if count < 2:
        raise DegenerateCount("rank-based probabilities need at least two candidates")
    weights = (count - np.arange(1, count + 1, dtype=float)) ** exponent
    return weights / weights.sum()


def create_neighborhood(
    solution: Solution,
    instance: Instance,
    config: SelectorConfig,
    rng: np.random.Generator,
    schedules: Optional[Dict[int, RouteSchedule]] = None,
) -> Neighborhood:
    """Pick a uniform anchor and sample n2 companions by rank-based probability.

    Companions are drawn without replacement; probabilities are renormalized
    over the remaining candidates after each draw. Empty routes are excluded
    throughout. Precomputed ``schedules`` (route index -> schedule) are reused
    when provided.
    """
    candidates = solution.nonempty_indices()
    if len(candidates) < config.n2 + 1:
        raise TooFewRoutes(
            f"need at least {config.n2 + 1} nonempty routes, have {len(candidates)}"
        )
    if schedules is None:
        schedules = {}
    anchor = candidates[int(rng.integers(len(candidates)))]
    others = [k for k in candidates if k != anchor]

    def schedule_of(k: int) -> RouteSchedule:
        if k not in schedules:
            schedules[k] = compute_schedule(instance, solution.routes[k])
        return schedules[k]

    anchor_route = solution.routes[anchor]
    ranked = sorted(
        others,
        key=lambda k: (
            route_distance(instance, anchor_route, solution.routes[k], schedule_of(k), config),
            k,
        ),
    )
    if len(ranked) == 1:
        return Neighborhood(anchor, frozenset((anchor, ranked[0])), (anchor, ranked[0]))
    probs = rbp_probabilities(len(ranked), config.rank_exponent)
    remaining = list(range(len(ranked)))
    weights = probs.copy()
    picked: List[int] = []
    for _ in range(config.n2):
        mass = weights[remaining].sum()
        if mass <= 0.0:
            # only zero-mass candidates left: fall back to uniform
            p = np.full(len(remaining), 1.0 / len(remaining))
        else:
            p = weights[remaining] / mass
        choice = remaining[int(rng.choice(len(remaining), p=p))]
        remaining.remove(choice)
        picked.append(choice)
    ordered = (anchor,) + tuple(ranked[i] for i in sorted(picked))
    return Neighborhood(anchor, frozenset(ordered), ordered)
