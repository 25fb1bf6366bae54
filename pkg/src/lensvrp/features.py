"""Feature vector describing a neighborhood's improvement potential.

Layout: [customer count] ++ five aggregates (avg, max, min, sum, std) of each
of the eleven customer properties ++ five aggregates of each of the ten route
properties ++ the route distance measure for every ordered pair of
neighborhood routes. With four companion routes that is 1 + 55 + 50 + 20 = 126
values. Aggregation uses the population standard deviation so singleton
neighborhoods stay defined.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import EmptyRoute, EmptySequence, NotInNeighborhood
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
from .neighborhood import Neighborhood, SelectorConfig, route_distance

CUSTOMER_PROPERTY_NAMES = (
    "waiting_time",
    "closeness",
    "temporal_closeness",
    "centroid_closeness",
    "distance_contribution",
    "tw_length",
    "depot_distance",
    "load",
    "min_greedy_addition_cost",
    "max_gain",
    "possible_delay",
)

ROUTE_PROPERTY_NAMES = (
    "route_distance",
    "avg_route_distance",
    "empty_distance",
    "worst_case_fraction",
    "route_duration",
    "avg_route_duration",
    "idle_time",
    "free_capacity",
    "fitting_candidates",
    "expected_fitting_candidates",
)

AGGREGATE_NAMES = ("avg", "max", "min", "sum", "std")


@dataclass(frozen=True)
class CustomerProperties:
    waiting_time: float
    closeness: float
    temporal_closeness: float
    centroid_closeness: float
    distance_contribution: float
    tw_length: float
    depot_distance: float
    load: float
    min_greedy_addition_cost: float
    max_gain: float
    possible_delay: float


@dataclass(frozen=True)
class RouteProperties:
    route_distance: float
    avg_route_distance: float
    empty_distance: float
    worst_case_fraction: float
    route_duration: float
    avg_route_duration: float
    idle_time: float
    free_capacity: float
    fitting_candidates: float
    expected_fitting_candidates: float


def time_window_difference(
    instance: Instance, a: Customer, b: Customer, penalty: float = 1e6
) -> float:
    """Minimum waiting caused by serving two customers back to back.

    For order a→b service at a is assumed to start at a's window opening;
    the order is feasible when the resulting arrival makes b's window.
    Symmetric minimum over both orders; the penalty when neither is feasible.
    """

    def one_way(u: Customer, v: Customer) -> float:
        arrival = u.window.earliest + u.service_duration + euclid(u.location, v.location)
        if arrival > v.window.latest:
            return penalty
        return max(0.0, v.window.earliest - arrival)

    return min(one_way(a, b), one_way(b, a))


def _position_in(neighborhood: Neighborhood, solution: Solution, cid: int) -> Tuple[int, int]:
    for member in neighborhood.ordered_members:
        route = solution.routes[member]
        for pos, other in enumerate(route):
            if other == cid:
                return member, pos
    raise NotInNeighborhood(f"customer {cid} is not on a neighborhood route")


def _greedy_insertion_cost(
    instance: Instance, route: Route, c: Customer
) -> float:
    """Distance increase of greedily adding c to a route.

    The single tested position is before the first customer whose window opens
    later than c's (the end of the route when there is none).
    """
    pos = len(route)
    for k, cid in enumerate(route):
        if instance.customer(cid).window.earliest > c.window.earliest:
            pos = k
            break
    prev = route[pos - 1] if pos > 0 else DEPOT_ID
    nxt = route[pos] if pos < len(route) else DEPOT_ID
    return (
        instance.distance(prev, c.id)
        + instance.distance(c.id, nxt)
        - instance.distance(prev, nxt)
    )


def customer_properties(
    instance: Instance,
    solution: Solution,
    neighborhood: Neighborhood,
    schedules: Dict[int, RouteSchedule],
    c: Customer,
    penalty: float = 1e6,
) -> CustomerProperties:
    """Properties of one neighborhood customer (comparisons span the other routes)."""
    member, pos = _position_in(neighborhood, solution, c.id)
    own = solution.routes[member]
    schedule = schedules[member]
    arrival = schedule.arrival_times[pos]

    others = [m for m in neighborhood.ordered_members if m != member]
    other_customers = [
        instance.customer(cid) for m in others for cid in solution.routes[m]
    ]
    closeness = min(euclid(c.location, o.location) for o in other_customers)
    temporal = min(
        euclid(c.location, o.location) + time_window_difference(instance, c, o, penalty)
        for o in other_customers
    )
    centroid_closeness = min(
        euclid(c.location, route_centroid(instance, solution.routes[m])) for m in others
    )
    prev = own[pos - 1] if pos > 0 else DEPOT_ID
    nxt = own[pos + 1] if pos + 1 < len(own) else DEPOT_ID
    contribution = (
        instance.distance(prev, c.id)
        + instance.distance(c.id, nxt)
        - instance.distance(prev, nxt)
    )
    min_greedy = min(
        _greedy_insertion_cost(instance, solution.routes[m], c) for m in others
    )
    return CustomerProperties(
        waiting_time=max(0.0, c.window.earliest - arrival),
        closeness=closeness,
        temporal_closeness=temporal,
        centroid_closeness=centroid_closeness,
        distance_contribution=contribution,
        tw_length=c.window.length,
        depot_distance=instance.depot_distance(c.id),
        load=c.demand,
        min_greedy_addition_cost=min_greedy,
        max_gain=contribution - min_greedy,
        possible_delay=c.window.latest - arrival,
    )


def route_properties(
    instance: Instance,
    solution: Solution,
    neighborhood: Neighborhood,
    schedules: Dict[int, RouteSchedule],
    member: int,
) -> RouteProperties:
    """Properties of one neighborhood route."""
    route = solution.routes[member]
    if len(route) == 0:
        raise EmptyRoute("route properties need a nonempty route")
    schedule = schedules[member]
    count = len(route)
    worst_case = sum(2.0 * instance.depot_distance(cid) for cid in route)
    duration = schedule.travel_distance + schedule.waiting_total + schedule.service_total
    free = instance.capacity - schedule.cumulative_loads[-1]
    other_demands = [
        instance.customer(cid).demand
        for m in neighborhood.ordered_members
        if m != member
        for cid in solution.routes[m]
    ]
    fitting = sum(1 for q in other_demands if q < free)
    mean_demand = sum(other_demands) / len(other_demands) if other_demands else 0.0
    expected = free / mean_demand if mean_demand > 0 else 0.0
    return RouteProperties(
        route_distance=schedule.travel_distance,
        avg_route_distance=schedule.travel_distance / count,
        empty_distance=instance.distance(route[-1], DEPOT_ID),
        worst_case_fraction=schedule.travel_distance / worst_case,
        route_duration=duration,
        avg_route_duration=duration / count,
        idle_time=schedule.waiting_total,
        free_capacity=free,
        fitting_candidates=float(fitting),
        expected_fitting_candidates=expected,
    )


def aggregate(values: Sequence[float]) -> Tuple[float, float, float, float, float]:
    """(avg, max, min, sum, population std) of a nonempty sequence."""
    if len(values) == 0:
        raise EmptySequence("cannot aggregate an empty sequence")
    arr = np.asarray(values, dtype=float)
    return (
        float(arr.mean()),
        float(arr.max()),
        float(arr.min()),
        float(arr.sum()),
        float(arr.std()),
    )


def feature_names(n2: int) -> List[str]:
    """Ordered manifest of feature column names for a given companion count."""
    names = ["customer_count"]
    for prop in CUSTOMER_PROPERTY_NAMES:
        names.extend(f"cust_{prop}_{agg}" for agg in AGGREGATE_NAMES)
    for prop in ROUTE_PROPERTY_NAMES:
        names.extend(f"route_{prop}_{agg}" for agg in AGGREGATE_NAMES)
    k = n2 + 1
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            if i != j:
                names.append(f"dtilde_{i}_{j}")
    return names


def _batch_customer_matrix(
    instance: Instance,
    solution: Solution,
    neighborhood: Neighborhood,
    schedules: Dict[int, RouteSchedule],
    config: SelectorConfig,
) -> np.ndarray:
    """All customer properties at once, one row per property, vectorized."""
    members = neighborhood.ordered_members
    ids: List[int] = []
    route_of: List[int] = []
    arrivals: List[float] = []
    for mi, m in enumerate(members):
        route = solution.routes[m]
        schedule = schedules[m]
        for pos, cid in enumerate(route):
            ids.append(cid)
            route_of.append(mi)
            arrivals.append(schedule.arrival_times[pos])
    custs = [instance.customer(cid) for cid in ids]
    idx = np.array([instance._index_of[cid] for cid in ids])
    k = len(ids)
    d = instance._dist[np.ix_(idx, idx)]
    e = np.array([c.window.earliest for c in custs])
    l = np.array([c.window.latest for c in custs])
    tau = np.array([c.service_duration for c in custs])
    q = np.array([c.demand for c in custs])
    arr = np.array(arrivals)
    rid = np.array(route_of)

    other = rid[:, None] != rid[None, :]
    big = np.inf
    masked = np.where(other, d, big)
    closeness = masked.min(axis=1)

    # pairwise time window difference, both orders
    arrive = e[:, None] + tau[:, None] + d
    wait = np.where(arrive <= l[None, :], np.maximum(0.0, e[None, :] - arrive), config.twd_penalty)
    twd = np.minimum(wait, wait.T)
    temporal = np.where(other, d + twd, big).min(axis=1)

    cents = np.array(
        [
            (lambda loc: (loc.x, loc.y))(route_centroid(instance, solution.routes[m]))
            for m in members
        ]
    )
    xy = np.array([(c.location.x, c.location.y) for c in custs])
    cd = np.sqrt(((xy[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2))
    cent_close = np.where(rid[:, None] != np.arange(len(members))[None, :], cd, big).min(axis=1)

    contribution = np.empty(k)
    min_greedy = np.empty(k)
    row = 0
    for mi, m in enumerate(members):
        route = solution.routes[m]
        for pos, cid in enumerate(route):
            c = custs[row]
            prev = route[pos - 1] if pos > 0 else DEPOT_ID
            nxt = route[pos + 1] if pos + 1 < len(route) else DEPOT_ID
            contribution[row] = (
                instance.distance(prev, cid)
                + instance.distance(cid, nxt)
                - instance.distance(prev, nxt)
            )
            min_greedy[row] = min(
                _greedy_insertion_cost(instance, solution.routes[o], c)
                for o in members
                if o != m
            )
            row += 1

    depot = instance._dist[idx, 0]
    return np.vstack(
        [
            np.maximum(0.0, e - arr),
            closeness,
            temporal,
            cent_close,
            contribution,
            l - e,
            depot,
            q,
            min_greedy,
            contribution - min_greedy,
            l - arr,
        ]
    )


def extract_features(
    instance: Instance,
    solution: Solution,
    neighborhood: Neighborhood,
    config: SelectorConfig,
    schedules: Dict[int, RouteSchedule] | None = None,
) -> np.ndarray:
    """Full feature vector for a neighborhood (see module docstring for layout)."""
    members = neighborhood.ordered_members
    if schedules is None:
        schedules = {}
    for m in members:
        if m not in schedules:
            schedules[m] = compute_schedule(instance, solution.routes[m])

    values: List[float] = [float(sum(len(solution.routes[m]) for m in members))]
    cust_matrix = _batch_customer_matrix(instance, solution, neighborhood, schedules, config)
    for row in cust_matrix:
        values.extend(aggregate(row))
    route_rows = [
        route_properties(instance, solution, neighborhood, schedules, m) for m in members
    ]
    for prop in ROUTE_PROPERTY_NAMES:
        values.extend(aggregate([getattr(rp, prop) for rp in route_rows]))
    for i in members:
        for j in members:
            if i != j:
                values.append(
                    route_distance(
                        instance,
                        solution.routes[i],
                        solution.routes[j],
                        schedules[j],
                        config,
                    )
                )
    return np.array(values)
