"""Benchmark instance parsing/writing and training-instance generation.

The file format is the classic whitespace-separated benchmark layout:

    <name>
    VEHICLE
    NUMBER CAPACITY
    <m> <Q>
    CUSTOMER
    CUST_NO XCOORD YCOORD DEMAND READY_TIME DUE_DATE SERVICE_TIME
    <id> <x> <y> <demand> <ready> <due> <service>   (id 0 = depot)
    ...

Training batches share one base geography: all ten instances of a batch keep
the base locations, demands and service times, and only the time windows
differ. Per batch, one window midpoint is sampled per customer, uniformly over
the part of the horizon from which a round trip to the depot stays feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .errors import InconsistentDepot, InfeasibleCustomer, ParseError
from .model import Customer, Instance, Location, TimeWindow

_GRID = 1e6  # fixed-point grid: six decimals


def _fmt(value: float) -> str:
    """Fixed-point with up to six decimals, trailing zeros trimmed."""
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return text if text else "0"


def _ceil6(value: float) -> float:
    return math.ceil(value * _GRID - 1e-9) / _GRID


def _floor6(value: float) -> float:
    return math.floor(value * _GRID + 1e-9) / _GRID


def parse_instance(text: str) -> Instance:
    """Parse an instance document; node 0 is the depot and carries the horizon."""
    lines = text.splitlines()
    rows: List[Tuple[int, List[str]]] = [
        (no, line.split()) for no, line in enumerate(lines, start=1) if line.strip()
    ]
    if len(rows) < 6:
        raise ParseError("document too short")
    name = " ".join(rows[0][1])
    if rows[1][1] != ["VEHICLE"]:
        raise ParseError("expected VEHICLE section", rows[1][0])
    fleet_no, fleet_fields = rows[3]
    if len(fleet_fields) != 2:
        raise ParseError("expected '<m> <Q>'", fleet_no)
    try:
        fleet_size = int(fleet_fields[0])
        capacity = float(fleet_fields[1])
    except ValueError:
        raise ParseError("non-numeric fleet line", fleet_no)
    if rows[4][1] != ["CUSTOMER"]:
        raise ParseError("expected CUSTOMER section", rows[4][0])
    depot = None
    customers: List[Customer] = []
    for no, fields in rows[6:]:
        if len(fields) != 7:
            raise ParseError(f"expected 7 columns, got {len(fields)}", no)
        try:
            cid = int(fields[0])
            x, y, demand, ready, due, service = (float(v) for v in fields[1:])
        except ValueError:
            raise ParseError("non-numeric value in customer row", no)
        if cid == 0:
            if demand != 0 or service != 0:
                raise InconsistentDepot(
                    f"line {no}: depot demand/service must be zero"
                )
            depot = (Location(x, y), TimeWindow(ready, due))
        else:
            customers.append(
                Customer(cid, Location(x, y), demand, service, TimeWindow(ready, due))
            )
    if depot is None:
        raise ParseError("no depot row (id 0)")
    return Instance(name, depot[0], depot[1], fleet_size, capacity, tuple(customers))


def write_instance(instance: Instance) -> str:
    """Render an instance document; parse_instance inverts it."""
    out = [
        instance.name,
        "VEHICLE",
        "NUMBER CAPACITY",
        f"{instance.fleet_size} {_fmt(instance.capacity)}",
        "CUSTOMER",
        "CUST_NO XCOORD YCOORD DEMAND READY_TIME DUE_DATE SERVICE_TIME",
        f"0 {_fmt(instance.depot_location.x)} {_fmt(instance.depot_location.y)} 0 "
        f"{_fmt(instance.horizon.earliest)} {_fmt(instance.horizon.latest)} 0",
    ]
    for c in instance.customers:
        out.append(
            f"{c.id} {_fmt(c.location.x)} {_fmt(c.location.y)} {_fmt(c.demand)} "
            f"{_fmt(c.window.earliest)} {_fmt(c.window.latest)} {_fmt(c.service_duration)}"
        )
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Fixed:
    """Restrictive windows of one fixed length."""

    length: float


@dataclass(frozen=True)
class Normal:
    """Restrictive window lengths drawn per customer from a normal."""

    mean: float
    stddev: float


LengthRule = Union[Fixed, Normal]


@dataclass(frozen=True)
class GenEntry:
    length_rule: LengthRule
    fraction: float


#: One batch per base instance: lengths 10 and 30 at fractions 100/75/50/25 %,
#: then normal lengths N(60, 20) and N(120, 30) at 100 %.
TABLE_ENTRIES: Tuple[GenEntry, ...] = (
    GenEntry(Fixed(10.0), 1.00),
    GenEntry(Fixed(10.0), 0.75),
    GenEntry(Fixed(10.0), 0.50),
    GenEntry(Fixed(10.0), 0.25),
    GenEntry(Fixed(30.0), 1.00),
    GenEntry(Fixed(30.0), 0.75),
    GenEntry(Fixed(30.0), 0.50),
    GenEntry(Fixed(30.0), 0.25),
    GenEntry(Normal(60.0, 20.0), 1.00),
    GenEntry(Normal(120.0, 30.0), 1.00),
)


@dataclass(frozen=True)
class BatchSpec:
    base_instance: Instance
    entries: Tuple[GenEntry, ...] = TABLE_ENTRIES
    seed: int = 0


def feasible_midpoint_bounds(instance: Instance, cid: int) -> Tuple[float, float]:
    """Window-midpoint bounds that keep the depot round trip feasible.

    Bounds are snapped inward to the six-decimal grid so that written files
    preserve feasibility exactly.
    """
    c = instance.customer(cid)
    d = instance.depot_distance(cid)
    lo = _ceil6(instance.horizon.earliest + d)
    hi = _floor6(instance.horizon.latest - d - c.service_duration)
    if lo > hi:
        raise InfeasibleCustomer(
            f"customer {cid} cannot be served within the horizon"
        )
    return lo, hi


def sample_midpoints(base: Instance, seed: int) -> Dict[int, float]:
    """Sample one future window midpoint per customer, uniform over its bounds."""
    rng = np.random.default_rng(seed)
    midpoints: Dict[int, float] = {}
    for c in base.customers:
        lo, hi = feasible_midpoint_bounds(base, c.id)
        midpoints[c.id] = float(rng.uniform(lo, hi))
    return midpoints


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def generate_batch(spec: BatchSpec) -> List[Instance]:
    """Generate one instance per entry, sharing midpoints across the batch."""
    base = spec.base_instance
    rng = np.random.default_rng(spec.seed)
    midpoints = sample_midpoints(base, spec.seed)
    horizon = base.horizon
    horizon_len = horizon.length
    instances: List[Instance] = []
    for k, entry in enumerate(spec.entries):
        count = _round_half_up(entry.fraction * base.n)
        chosen = {base.customers[i].id for i in rng.choice(base.n, size=count, replace=False)}
        customers: List[Customer] = []
        for c in base.customers:
            if c.id in chosen:
                if isinstance(entry.length_rule, Fixed):
                    length = entry.length_rule.length
                else:
                    length = float(
                        rng.normal(entry.length_rule.mean, entry.length_rule.stddev)
                    )
                    length = min(max(length, 1.0), horizon_len)
                lo, hi = feasible_midpoint_bounds(base, c.id)
                mid = min(max(midpoints[c.id], lo), hi)
                earliest = _ceil6(max(mid - length / 2.0, lo))
                latest = _floor6(min(mid + length / 2.0, hi))
                window = TimeWindow(earliest, max(earliest, latest))
            else:
                window = horizon
            customers.append(
                Customer(c.id, c.location, c.demand, c.service_duration, window)
            )
        instances.append(
            Instance(
                f"{base.name}_gen{k + 1}",
                base.depot_location,
                horizon,
                base.fleet_size,
                base.capacity,
                tuple(customers),
            )
        )
    return instances
