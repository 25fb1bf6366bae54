"""Problem and solution representation for the VRPTW.

Distances are full-precision Euclidean (no rounding). A vehicle leaves the
depot no earlier than the horizon start and may wait at customers without
limit; waiting consumes time but no cost. Service must *start* no later than
the window end; finishing after it is allowed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .errors import EmptyRoute, UnknownCustomer

DEPOT_ID = 0


@dataclass(frozen=True)
class Location:
    x: float
    y: float


@dataclass(frozen=True)
class TimeWindow:
    earliest: float
    latest: float

    @property
    def length(self) -> float:
        return self.latest - self.earliest

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.earliest + self.latest)


@dataclass(frozen=True)
class Customer:
    id: int
    location: Location
    demand: float
    service_duration: float
    window: TimeWindow


def euclid(a: Location, b: Location) -> float:
    """Euclidean distance between two locations.

    Written as sqrt(dx² + dy²) rather than hypot so the result is bitwise
    identical to the vectorized distance matrix computed with numpy.
    """
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


@dataclass
class Instance:
    """A VRPTW instance: depot, horizon, fleet and customer set.

    Customer ids must be distinct and nonzero (0 is reserved for the depot).
    A distance lookup over [depot] + customers is built once at construction.
    """

    name: str
    depot_location: Location
    horizon: TimeWindow
    fleet_size: int
    capacity: float
    customers: Tuple[Customer, ...]

    _by_id: Dict[int, Customer] = field(init=False, repr=False)
    _index_of: Dict[int, int] = field(init=False, repr=False)
    _dist: np.ndarray = field(init=False, repr=False)
    _dist_rows: List[List[float]] = field(init=False, repr=False)

    def __post_init__(self):
        self.customers = tuple(self.customers)
        self._by_id = {c.id: c for c in self.customers}
        if len(self._by_id) != len(self.customers) or DEPOT_ID in self._by_id:
            raise ValueError("customer ids must be distinct and nonzero")
        self._index_of = {DEPOT_ID: 0}
        for k, c in enumerate(self.customers):
            self._index_of[c.id] = k + 1
        pts = np.array(
            [(self.depot_location.x, self.depot_location.y)]
            + [(c.location.x, c.location.y) for c in self.customers]
        )
        diff = pts[:, None, :] - pts[None, :, :]
        self._dist = np.sqrt((diff**2).sum(axis=2))
        # plain-list mirror for scalar lookups on hot paths
        self._dist_rows = self._dist.tolist()

    @property
    def n(self) -> int:
        return len(self.customers)

    def customer(self, cid: int) -> Customer:
        try:
            return self._by_id[cid]
        except KeyError:
            raise UnknownCustomer(f"customer id {cid} not in instance {self.name!r}")

    def has_customer(self, cid: int) -> bool:
        return cid in self._by_id

    def distance(self, a: int, b: int) -> float:
        """Distance between two node ids (0 = depot)."""
        try:
            return self._dist_rows[self._index_of[a]][self._index_of[b]]
        except KeyError as exc:
            raise UnknownCustomer(f"customer id {exc.args[0]} not in instance")

    def depot_distance(self, cid: int) -> float:
        return self.distance(DEPOT_ID, cid)


@dataclass(frozen=True)
class Route:
    """Ordered customer visits; the depot start/end is implicit."""

    customer_ids: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "customer_ids", tuple(self.customer_ids))

    def __len__(self) -> int:
        return len(self.customer_ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.customer_ids)

    def __getitem__(self, k):
        return self.customer_ids[k]


@dataclass(frozen=True)
class Solution:
    """A set of routes; every customer should appear in exactly one."""

    routes: Tuple[Route, ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "routes",
            tuple(r if isinstance(r, Route) else Route(tuple(r)) for r in self.routes),
        )

    def nonempty_indices(self) -> List[int]:
        return [k for k, r in enumerate(self.routes) if len(r) > 0]


@dataclass(frozen=True)
class RouteSchedule:
    """Forward-simulated timing and load trajectory of one route."""

    arrival_times: Tuple[float, ...]
    service_starts: Tuple[float, ...]
    departure_times: Tuple[float, ...]
    cumulative_loads: Tuple[float, ...]
    travel_distance: float
    waiting_total: float
    service_total: float
    return_arrival: float


def compute_schedule(instance: Instance, route: Route) -> RouteSchedule:
    """Simulate a route forward in time starting from the depot at horizon start."""
    if len(route) == 0:
        return RouteSchedule((), (), (), (), 0.0, 0.0, 0.0, instance.horizon.earliest)
    arrivals: List[float] = []
    starts: List[float] = []
    departures: List[float] = []
    loads: List[float] = []
    by_id = instance._by_id
    index_of = instance._index_of
    dmat = instance._dist_rows
    t = instance.horizon.earliest
    prev_idx = 0
    dist = 0.0
    waiting = 0.0
    service = 0.0
    load = 0.0
    for cid in route:
        c = by_id.get(cid)
        if c is None:
            raise UnknownCustomer(f"customer {cid} is not part of the instance")
        idx = index_of[cid]
        leg = dmat[prev_idx][idx]
        dist += leg
        arrival = t + leg
        start = max(arrival, c.window.earliest)
        waiting += start - arrival
        service += c.service_duration
        load += c.demand
        arrivals.append(arrival)
        starts.append(start)
        departures.append(start + c.service_duration)
        loads.append(load)
        t = start + c.service_duration
        prev_idx = idx
    back = dmat[prev_idx][0]
    dist += back
    return RouteSchedule(
        tuple(arrivals),
        tuple(starts),
        tuple(departures),
        tuple(loads),
        dist,
        waiting,
        service,
        t + back,
    )


class ViolationKind(enum.Enum):
    DUPLICATE_VISIT = "DuplicateVisit"
    MISSING_CUSTOMER = "MissingCustomer"
    FLEET_EXCEEDED = "FleetExceeded"
    CAPACITY_EXCEEDED = "CapacityExceeded"
    TIME_WINDOW_VIOLATED = "TimeWindowViolated"
    HORIZON_VIOLATED = "HorizonViolated"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    violations: Tuple[Violation, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations


def check_feasibility(instance: Instance, solution: Solution) -> FeasibilityReport:
    """Enumerate every constraint violation of a solution (empty ⇔ feasible)."""
    violations: List[Violation] = []
    seen: Dict[int, int] = {}
    for route in solution.routes:
        for cid in route:
            seen[cid] = seen.get(cid, 0) + 1
    for cid, count in seen.items():
        if count > 1:
            violations.append(
                Violation(ViolationKind.DUPLICATE_VISIT, f"customer {cid} visited {count} times")
            )
    for c in instance.customers:
        if c.id not in seen:
            violations.append(
                Violation(ViolationKind.MISSING_CUSTOMER, f"customer {c.id} not visited")
            )
    nonempty = [r for r in solution.routes if len(r) > 0]
    if len(nonempty) > instance.fleet_size:
        violations.append(
            Violation(
                ViolationKind.FLEET_EXCEEDED,
                f"{len(nonempty)} routes exceed fleet size {instance.fleet_size}",
            )
        )
    for k, route in enumerate(solution.routes):
        if len(route) == 0:
            continue
        schedule = compute_schedule(instance, route)
        if schedule.cumulative_loads[-1] > instance.capacity + 1e-9:
            violations.append(
                Violation(
                    ViolationKind.CAPACITY_EXCEEDED,
                    f"route {k} load {schedule.cumulative_loads[-1]:.6g} "
                    f"exceeds capacity {instance.capacity:.6g}",
                )
            )
        for cid, start in zip(route, schedule.service_starts):
            latest = instance.customer(cid).window.latest
            if start > latest + 1e-9:
                violations.append(
                    Violation(
                        ViolationKind.TIME_WINDOW_VIOLATED,
                        f"route {k}: service at {cid} starts {start:.6g} after {latest:.6g}",
                    )
                )
        if schedule.return_arrival > instance.horizon.latest + 1e-9:
            violations.append(
                Violation(
                    ViolationKind.HORIZON_VIOLATED,
                    f"route {k} returns at {schedule.return_arrival:.6g} "
                    f"after horizon end {instance.horizon.latest:.6g}",
                )
            )
    return FeasibilityReport(tuple(violations))


def solution_cost(instance: Instance, solution: Solution) -> float:
    """Total depot-to-depot travel distance over all routes."""
    return sum(route_cost(instance, r) for r in solution.routes)


def route_cost(instance: Instance, route: Route) -> float:
    """Travel distance of a single route (0 for an empty route)."""
    if len(route) == 0:
        return 0.0
    total = instance.distance(DEPOT_ID, route[0])
    for a, b in zip(route, route[1:]):
        total += instance.distance(a, b)
    return total + instance.distance(route[-1], DEPOT_ID)


def route_centroid(instance: Instance, route: Route) -> Location:
    """Arithmetic mean of the route's customer locations (depot excluded)."""
    if len(route) == 0:
        raise EmptyRoute("centroid of an empty route")
    xs = ys = 0.0
    for cid in route:
        loc = instance.customer(cid).location
        xs += loc.x
        ys += loc.y
    return Location(xs / len(route), ys / len(route))
