"""VRPTW optimization toolkit with learning-guided large neighborhood search."""

__version__ = "0.1.0"

from .model import (
    Customer,
    Instance,
    Location,
    Route,
    Solution,
    TimeWindow,
    check_feasibility,
    compute_schedule,
    euclid,
    route_centroid,
    solution_cost,
)

__all__ = [
    "Customer",
    "Instance",
    "Location",
    "Route",
    "Solution",
    "TimeWindow",
    "check_feasibility",
    "compute_schedule",
    "euclid",
    "route_centroid",
    "solution_cost",
    "__version__",
]
