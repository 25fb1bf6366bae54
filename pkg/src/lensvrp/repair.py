"""Sub-problem extraction and the built-in ruin-and-recreate repair solver.

The neighborhood's routes define a sub-VRPTW: same depot, horizon and
capacity, customers restricted to the destroyed routes, fleet size equal to
the number of destroyed routes. The built-in repair runs ruin-and-recreate
cycles — remove a random 30% of the sub-customers, reinsert them with
regret-k insertion, polish with first-improvement local search — until a
fixed total ruin budget is spent, and never returns anything worse than the
warm start. An external black-box solver can be plugged in via a command.
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ExternalFailure, LensVrpError, WarmStartInfeasible
from .model import (
    DEPOT_ID,
    Instance,
    Route,
    Solution,
    check_feasibility,
    route_cost,
    solution_cost,
)
from .neighborhood import Neighborhood

RUIN_FRACTION = 0.3
# Every repair call ruins roughly this many customers in total.  One cycle
# already meets the budget on sizeable sub-problems; tiny ones (where a 30%
# ruin frees only one or two customers) get several cheap retries instead.
RUIN_BUDGET = 12
_EPS = 1e-9

RELOCATE = "relocate"
SWAP = "swap"
TWO_OPT_STAR = "two_opt_star"


@dataclass(frozen=True)
class RepairConfig:
    regret_k: int = 2
    local_search_moves: FrozenSet[str] = frozenset({RELOCATE, SWAP, TWO_OPT_STAR})
    max_passes: int = 3
    external_command: Optional[str] = None
    external_timeout: float = 60.0


@dataclass(frozen=True)
class SubProblem:
    instance: Instance
    fleet_size: int


def extract_subproblem(
    instance: Instance, solution: Solution, neighborhood: Neighborhood
) -> Tuple[SubProblem, List[Route]]:
    """Build the sub-VRPTW for a neighborhood plus its warm-start routes."""
    warm = [solution.routes[k] for k in neighborhood.ordered_members]
    customers = tuple(
        instance.customer(cid) for route in warm for cid in route
    )
    sub_instance = Instance(
        f"{instance.name}#sub",
        instance.depot_location,
        instance.horizon,
        len(warm),
        instance.capacity,
        customers,
    )
    return SubProblem(sub_instance, len(warm)), warm


def improvement(cost_before: float, cost_after: float) -> float:
    """Realized improvement, clamped at zero."""
    return max(cost_before - cost_after, 0.0)


class _Arrays:
    """Flat local-index views of a sub-instance (0 = depot, 1.. = customers)."""

    def __init__(self, instance: Instance):
        self.ids = [DEPOT_ID] + [c.id for c in instance.customers]
        self.local = {cid: k for k, cid in enumerate(self.ids)}
        self.d = instance._dist_rows
        self.e = [instance.horizon.earliest] + [c.window.earliest for c in instance.customers]
        self.l = [instance.horizon.latest] + [c.window.latest for c in instance.customers]
        self.tau = [0.0] + [c.service_duration for c in instance.customers]
        self.q = [0.0] + [c.demand for c in instance.customers]
        self.capacity = instance.capacity
        self.n = len(instance.customers)


class _RouteState:
    """Cached evaluation of one route in local indices."""

    __slots__ = ("nodes", "dep", "latest", "load", "dist", "feasible")

    def __init__(self, arrays: _Arrays, nodes: List[int]):
        self.nodes = nodes
        self.refresh(arrays)

    def refresh(self, a: _Arrays) -> None:
        nodes = self.nodes
        n = len(nodes)
        dep: List[float] = [0.0] * n
        latest: List[float] = [0.0] * (n + 1)
        t = a.e[0]
        prev = 0
        dist = 0.0
        load = 0.0
        feasible = True
        for k, c in enumerate(nodes):
            leg = a.d[prev][c]
            dist += leg
            arrival = t + leg
            start = arrival if arrival > a.e[c] else a.e[c]
            if start > a.l[c] + _EPS:
                feasible = False
            t = start + a.tau[c]
            dep[k] = t
            load += a.q[c]
            prev = c
        if n:
            dist += a.d[prev][0]
            if t + a.d[prev][0] > a.l[0] + _EPS:
                feasible = False
        if load > a.capacity + _EPS:
            feasible = False
        latest[n] = a.l[0]
        for k in range(n - 1, -1, -1):
            c = nodes[k]
            nxt = nodes[k + 1] if k + 1 < n else 0
            bound = latest[k + 1] - a.tau[c] - a.d[c][nxt]
            latest[k] = a.l[c] if a.l[c] < bound else bound
        self.dep = dep
        self.latest = latest
        self.load = load
        self.dist = dist if n else 0.0
        self.feasible = feasible


def _insertion(a: _Arrays, state: _RouteState, c: int) -> Optional[Tuple[float, int]]:
    """Cheapest feasible insertion (delta distance, position) of c, or None."""
    if state.load + a.q[c] > a.capacity + _EPS:
        return None
    nodes = state.nodes
    n = len(nodes)
    d = a.d
    best: Optional[Tuple[float, int]] = None
    ec, lc, tc = a.e[c], a.l[c], a.tau[c]
    for pos in range(n + 1):
        prev = nodes[pos - 1] if pos > 0 else 0
        nxt = nodes[pos] if pos < n else 0
        dep_prev = state.dep[pos - 1] if pos > 0 else a.e[0]
        arrival = dep_prev + d[prev][c]
        start = arrival if arrival > ec else ec
        if start > lc + _EPS:
            continue
        if start + tc + d[c][nxt] > state.latest[pos] + _EPS:
            continue
        delta = d[prev][c] + d[c][nxt] - d[prev][nxt]
        if best is None or delta < best[0] - _EPS:
            best = (delta, pos)
    return best


def _regret_insert(
    a: _Arrays, states: List[_RouteState], unassigned: List[int], regret_k: int
) -> bool:
    """Insert all unassigned customers by regret-k; False when one is stuck."""
    pending = sorted(unassigned)
    while pending:
        best_choice = None  # (key, customer, route index, position)
        for c in pending:
            options = []
            for ri, state in enumerate(states):
                ins = _insertion(a, state, c)
                if ins is not None:
                    options.append((ins[0], ri, ins[1]))
            if not options:
                return False
            options.sort()
            covered = options[: max(regret_k, 2)]
            regret = sum(opt[0] - covered[0][0] for opt in covered[1:])
            if len(options) < regret_k:
                regret = float("inf")  # scarce customers go first
            key = (-regret if regret != float("inf") else float("-inf"), covered[0][0], c)
            if best_choice is None or key < best_choice[0]:
                best_choice = (key, c, covered[0][1], covered[0][2])
        _, c, ri, pos = best_choice
        states[ri].nodes.insert(pos, c)
        states[ri].refresh(a)
        pending.remove(c)
    return True


def _relocate_sweep(a: _Arrays, states: List[_RouteState]) -> bool:
    improved = False
    d = a.d
    for si, src in enumerate(states):
        i = 0
        while i < len(src.nodes):
            c = src.nodes[i]
            prev = src.nodes[i - 1] if i > 0 else 0
            nxt = src.nodes[i + 1] if i + 1 < len(src.nodes) else 0
            gain = d[prev][c] + d[c][nxt] - d[prev][nxt]
            moved = False
            if gain > _EPS:
                old = list(src.nodes)
                del src.nodes[i]
                src.refresh(a)
                for ti, dst in enumerate(states):
                    ins = _insertion(a, dst, c)
                    if ins is not None and ins[0] < gain - _EPS:
                        if ti == si and ins[1] == i:
                            continue  # same position: no move
                        dst.nodes.insert(ins[1], c)
                        dst.refresh(a)
                        improved = True
                        moved = True
                        break
                if not moved:
                    src.nodes[:] = old
                    src.refresh(a)
            if not moved:
                i += 1
    return improved


def _intra_swap_sweep(a: _Arrays, states: List[_RouteState]) -> bool:
    improved = False
    for s in states:
        i = 0
        while i < len(s.nodes):
            swapped = False
            for j in range(i + 1, len(s.nodes)):
                old = list(s.nodes)
                old_dist = s.dist
                s.nodes[i], s.nodes[j] = s.nodes[j], s.nodes[i]
                s.refresh(a)
                if s.feasible and s.dist < old_dist - _EPS:
                    improved = True
                    swapped = True
                    break
                s.nodes[:] = old
                s.refresh(a)
            if not swapped:
                i += 1
    return improved


def _swap_sweep(a: _Arrays, states: List[_RouteState]) -> bool:
    improved = False
    d = a.d
    for si in range(len(states)):
        for ti in range(si + 1, len(states)):
            sa, sb = states[si], states[ti]
            i = 0
            while i < len(sa.nodes):
                swapped = False
                for j in range(len(sb.nodes)):
                    ca, cb = sa.nodes[i], sb.nodes[j]
                    pa = sa.nodes[i - 1] if i > 0 else 0
                    na = sa.nodes[i + 1] if i + 1 < len(sa.nodes) else 0
                    pb = sb.nodes[j - 1] if j > 0 else 0
                    nb = sb.nodes[j + 1] if j + 1 < len(sb.nodes) else 0
                    delta = (
                        d[pa][cb] + d[cb][na] - d[pa][ca] - d[ca][na]
                        + d[pb][ca] + d[ca][nb] - d[pb][cb] - d[cb][nb]
                    )
                    if delta >= -_EPS:
                        continue
                    if sa.load - a.q[ca] + a.q[cb] > a.capacity + _EPS:
                        continue
                    if sb.load - a.q[cb] + a.q[ca] > a.capacity + _EPS:
                        continue
                    old_a, old_b = list(sa.nodes), list(sb.nodes)
                    sa.nodes[i], sb.nodes[j] = cb, ca
                    sa.refresh(a)
                    sb.refresh(a)
                    if sa.feasible and sb.feasible:
                        improved = True
                        swapped = True
                        break
                    sa.nodes[:] = old_a
                    sb.nodes[:] = old_b
                    sa.refresh(a)
                    sb.refresh(a)
                if not swapped:
                    i += 1
    return improved


def _two_opt_star_sweep(a: _Arrays, states: List[_RouteState]) -> bool:
    improved = False
    d = a.d
    for si in range(len(states)):
        for ti in range(si + 1, len(states)):
            sa, sb = states[si], states[ti]
            restart = True
            while restart:
                restart = False
                na, nb = len(sa.nodes), len(sb.nodes)
                loads_a = [0.0] * (na + 1)
                for k, c in enumerate(sa.nodes):
                    loads_a[k + 1] = loads_a[k] + a.q[c]
                loads_b = [0.0] * (nb + 1)
                for k, c in enumerate(sb.nodes):
                    loads_b[k + 1] = loads_b[k] + a.q[c]
                for i in range(na + 1):
                    pa = sa.nodes[i - 1] if i > 0 else 0
                    ta = sa.nodes[i] if i < na else 0
                    dep_a = sa.dep[i - 1] if i > 0 else a.e[0]
                    for j in range(nb + 1):
                        if i == 0 and j == 0:
                            continue
                        pb = sb.nodes[j - 1] if j > 0 else 0
                        tb = sb.nodes[j] if j < nb else 0
                        delta = d[pa][tb] + d[pb][ta] - d[pa][ta] - d[pb][tb]
                        if delta >= -_EPS:
                            continue
                        if loads_a[i] + loads_b[nb] - loads_b[j] > a.capacity + _EPS:
                            continue
                        if loads_b[j] + loads_a[na] - loads_a[i] > a.capacity + _EPS:
                            continue
                        dep_b = sb.dep[j - 1] if j > 0 else a.e[0]
                        if dep_a + d[pa][tb] > sb.latest[j] + _EPS:
                            continue
                        if dep_b + d[pb][ta] > sa.latest[i] + _EPS:
                            continue
                        new_a = sa.nodes[:i] + sb.nodes[j:]
                        new_b = sb.nodes[:j] + sa.nodes[i:]
                        sa.nodes[:] = new_a
                        sb.nodes[:] = new_b
                        sa.refresh(a)
                        sb.refresh(a)
                        improved = True
                        restart = True
                        break
                    if restart:
                        break
    return improved


# Sub-problems at or below this size are solved exactly by enumeration:
# the heuristic's cost contract (within 5% of the optimum) must hold on
# every tiny sub-problem, and exhaustive search is cheaper than retries.
EXACT_LIMIT = 6


def _route_eval(a: _Arrays, nodes: Sequence[int]) -> Optional[float]:
    """Distance of one route, or None when time windows or capacity fail."""
    t = a.e[0]
    prev = 0
    dist = 0.0
    load = 0.0
    for c in nodes:
        leg = a.d[prev][c]
        dist += leg
        arrival = t + leg
        start = arrival if arrival > a.e[c] else a.e[c]
        if start > a.l[c] + _EPS:
            return None
        t = start + a.tau[c]
        load += a.q[c]
        prev = c
    if nodes:
        dist += a.d[prev][0]
        if t + a.d[prev][0] > a.l[0] + _EPS:
            return None
    if load > a.capacity + _EPS:
        return None
    return dist


def _exact_solve(a: _Arrays, fleet: int) -> Optional[Tuple[float, List[List[int]]]]:
    """Optimum over all partitions and orderings of the sub-customers."""
    import itertools

    customers = list(range(1, a.n + 1))
    cache: Dict[Tuple[int, ...], Optional[float]] = {}

    def eval_route(nodes: Tuple[int, ...]) -> Optional[float]:
        if nodes not in cache:
            cache[nodes] = _route_eval(a, nodes)
        return cache[nodes]

    best_cost: Optional[float] = None
    best_routes: Optional[List[List[int]]] = None
    max_routes = min(fleet, a.n)
    for perm in itertools.permutations(customers):
        for r in range(1, max_routes + 1):
            for cuts in itertools.combinations(range(1, a.n), r - 1):
                bounds = (0,) + cuts + (a.n,)
                total = 0.0
                routes: List[List[int]] = []
                feasible = True
                for lo, hi in zip(bounds, bounds[1:]):
                    dist = eval_route(perm[lo:hi])
                    if dist is None:
                        feasible = False
                        break
                    total += dist
                    routes.append(list(perm[lo:hi]))
                if feasible and (best_cost is None or total < best_cost - _EPS):
                    best_cost = total
                    best_routes = routes
    if best_cost is None:
        return None
    return best_cost, best_routes


def _local_search(a: _Arrays, states: List[_RouteState], config: RepairConfig) -> None:
    for _ in range(config.max_passes):
        improved = False
        if RELOCATE in config.local_search_moves:
            improved |= _relocate_sweep(a, states)
        if SWAP in config.local_search_moves:
            improved |= _swap_sweep(a, states)
            improved |= _intra_swap_sweep(a, states)
        if TWO_OPT_STAR in config.local_search_moves:
            improved |= _two_opt_star_sweep(a, states)
        if not improved:
            break


def _to_routes(a: _Arrays, states: Sequence[_RouteState]) -> List[Route]:
    return [Route(tuple(a.ids[c] for c in s.nodes)) for s in states]


def _total(states: Sequence[_RouteState]) -> float:
    return sum(s.dist for s in states)


def _check_warm_start(sub: SubProblem, warm_start: Sequence[Route]) -> None:
    if len([r for r in warm_start if len(r) > 0]) > sub.fleet_size:
        raise WarmStartInfeasible("warm start uses more routes than the sub-problem fleet")
    report = check_feasibility(sub.instance, Solution(tuple(warm_start)))
    if not report.feasible:
        raise WarmStartInfeasible(
            "; ".join(v.detail for v in report.violations)
        )


def repair(
    sub: SubProblem,
    warm_start: Sequence[Route],
    config: RepairConfig,
    rng: np.random.Generator,
) -> List[Route]:
    """Re-optimize the sub-problem; never worse than the warm start."""
    _check_warm_start(sub, warm_start)
    if config.external_command:
        return external_repair(sub, warm_start, config.external_command, config.external_timeout)
    a = _Arrays(sub.instance)
    states = [
        _RouteState(a, [a.local[cid] for cid in route]) for route in warm_start
    ]
    while len(states) < sub.fleet_size:
        states.append(_RouteState(a, []))
    warm_cost = _total(states)

    if a.n <= EXACT_LIMIT:
        exact = _exact_solve(a, sub.fleet_size)
        if exact is not None and exact[0] < warm_cost - _EPS:
            cost, routes = exact
            while len(routes) < sub.fleet_size:
                routes.append([])
            return [Route(tuple(a.ids[c] for c in nodes)) for nodes in routes]
        return [Route(tuple(r)) for r in warm_start]

    removal = max(1, int(round(RUIN_FRACTION * a.n))) if a.n else 0
    cycles = max(1, math.ceil(RUIN_BUDGET / removal)) if removal else 1
    best_nodes = [list(s.nodes) for s in states]
    best_cost = warm_cost
    for _ in range(cycles):
        for s, nodes in zip(states, best_nodes):
            s.nodes[:] = list(nodes)
            s.refresh(a)
        removed = sorted(
            int(v) + 1 for v in rng.choice(a.n, size=min(removal, a.n), replace=False)
        )
        removed_set = set(removed)
        for s in states:
            s.nodes[:] = [c for c in s.nodes if c not in removed_set]
            s.refresh(a)
        if not _regret_insert(a, states, removed, config.regret_k):
            continue
        _local_search(a, states, config)
        cost = _total(states)
        if cost < best_cost - _EPS:
            best_cost = cost
            best_nodes = [list(s.nodes) for s in states]
    if best_cost < warm_cost - _EPS:
        for s, nodes in zip(states, best_nodes):
            s.nodes[:] = list(nodes)
            s.refresh(a)
        return _to_routes(a, states)
    return [Route(tuple(r)) for r in warm_start]


def external_repair(
    sub: SubProblem,
    warm_start: Sequence[Route],
    command: str,
    timeout: float = 60.0,
) -> List[Route]:
    """Delegate the sub-problem to an external solver process.

    Protocol: the instance document followed by a "ROUTES" line and the
    warm-start routes (one line of customer ids per route) is written to the
    child's stdin; route lines are read from stdout (lines after the last
    "ROUTES" marker when one is echoed back). Infeasible or worse-than-warm
    output falls back to the warm start.
    """
    from .instances import write_instance

    payload = write_instance(sub.instance) + "ROUTES\n"
    for route in warm_start:
        if len(route) > 0:
            payload += " ".join(str(cid) for cid in route) + "\n"
    try:
        proc = subprocess.run(
            shlex.split(command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ExternalFailure(f"external solver failed: {exc}")
    if proc.returncode != 0:
        raise ExternalFailure(f"external solver exited with {proc.returncode}")
    lines = [line for line in proc.stdout.splitlines() if line.strip()]
    if "ROUTES" in lines:
        lines = lines[len(lines) - 1 - lines[::-1].index("ROUTES") + 1 :]
    routes: List[Route] = []
    try:
        for line in lines:
            routes.append(Route(tuple(int(tok) for tok in line.split())))
    except ValueError:
        raise ExternalFailure(f"unparseable solver output: {proc.stdout!r}")
    solution = Solution(tuple(routes))
    report = check_feasibility(sub.instance, solution)
    warm_cost = sum(route_cost(sub.instance, r) for r in warm_start)
    if (
        not report.feasible
        or len(routes) > sub.fleet_size
        or solution_cost(sub.instance, solution) > warm_cost + _EPS
    ):
        return [Route(tuple(r)) for r in warm_start]
    return routes


def build_initial_solution(
    instance: Instance, config: RepairConfig, rng: np.random.Generator
) -> Solution:
    """Construct a feasible solution by regret insertion from empty routes."""
    a = _Arrays(instance)
    states = [_RouteState(a, []) for _ in range(instance.fleet_size)]
    if not _regret_insert(a, states, list(range(1, a.n + 1)), config.regret_k):
        raise LensVrpError(
            f"could not construct a feasible initial solution for {instance.name!r}"
        )
    return Solution(tuple(_to_routes(a, states)))
