"""The LNS loop, learned/random/oracle neighborhood selection, data collection
and the multi-round training loop.

Selection policies:
  random  — pick one of the n1 candidate neighborhoods uniformly; only the
            chosen one is repaired.
  model   — featurize all candidates, pick the highest predicted potential;
            only the chosen one is repaired.
  oracle  — repair all candidates and pick the realized best (expensive,
            upper-bound baseline).

Data collection repairs *all* candidates each iteration and stores one sample
(features, clamped improvement) per candidate, regardless of strategy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InfeasibleInitial, LengthMismatch, ParseError
from .features import extract_features, feature_names
from .learning import Dataset, ForestConfig, ForestModel, Sample, predict_potential, train_from_dataset
from .model import (
    Instance,
    Route,
    Solution,
    check_feasibility,
    compute_schedule,
    route_cost,
    solution_cost,
)
from .neighborhood import Neighborhood, SelectorConfig, create_neighborhood
from .repair import RepairConfig, build_initial_solution, extract_subproblem, improvement, repair

RANDOM = "random"
ORACLE = "oracle"


@dataclass(frozen=True)
class RunConfig:
    iterations: int
    n1: int = 10
    selector: Union[str, ForestModel] = RANDOM  # "random", "oracle" or a model
    seed: int = 0
    selector_config: SelectorConfig = SelectorConfig()
    repair_config: RepairConfig = RepairConfig()


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    chosen: int  # 0-based candidate index
    improvements: Tuple[float, ...]  # NaN for candidates that were not repaired
    accepted: bool
    current_cost: float
    best_cost: float


@dataclass
class RunTrace:
    n1: int
    initial_cost: float
    records: List[IterationRecord] = field(default_factory=list)

    def best_costs(self) -> List[float]:
        return [r.best_cost for r in self.records]


def accept(candidate_cost: float, current_cost: float) -> bool:
    """Hill climbing: accept strictly improving candidates only."""
    return candidate_cost < current_cost


def select_random(n1: int, rng: np.random.Generator) -> int:
    """Uniform candidate index in [0, n1)."""
    return int(rng.integers(n1))


def select_oracle(improvements: Sequence[float]) -> int:
    """Index of the highest improvement; ties go to the lowest index."""
    best = 0
    for j, y in enumerate(improvements):
        if y > improvements[best]:
            best = j
    return best


def _apply(solution: Solution, neighborhood: Neighborhood, repaired: Sequence[Route]) -> Solution:
    """Replace the neighborhood's routes with the repaired ones, in place order."""
    routes = list(solution.routes)
    members = neighborhood.ordered_members
    for k, m in enumerate(members):
        routes[m] = repaired[k] if k < len(repaired) else Route(())
    return Solution(tuple(routes))


def _repair_candidate(
    instance: Instance,
    solution: Solution,
    neighborhood: Neighborhood,
    config: RunConfig,
    rng: np.random.Generator,
) -> Tuple[Solution, float]:
    """Destroy/repair one neighborhood; returns (candidate solution, improvement)."""
    sub, warm = extract_subproblem(instance, solution, neighborhood)
    repaired = repair(sub, warm, config.repair_config, rng)
    warm_cost = sum(route_cost(sub.instance, r) for r in warm)
    new_cost = sum(route_cost(sub.instance, r) for r in repaired)
    return _apply(solution, neighborhood, repaired), improvement(warm_cost, new_cost)


def lens_select(
    solution: Solution,
    instance: Instance,
    model: ForestModel,
    config: RunConfig,
    rng: np.random.Generator,
) -> Tuple[int, List[Neighborhood]]:
    """Create n1 candidates and return (argmax predicted potential, candidates)."""
    schedules: Dict[int, object] = {}
    neighborhoods = [
        create_neighborhood(solution, instance, config.selector_config, rng, schedules)
        for _ in range(config.n1)
    ]
    potentials = [
        predict_potential(
            model, extract_features(instance, solution, nb, config.selector_config, schedules)
        )
        for nb in neighborhoods
    ]
    best = 0
    for j, p in enumerate(potentials):
        if p > potentials[best]:
            best = j
    return best, neighborhoods


def lns_run(
    instance: Instance,
    initial_solution: Solution,
    config: RunConfig,
) -> Tuple[Solution, Solution, RunTrace]:
    """Run LNS for a fixed iteration count; returns (final, best, trace)."""
    report = check_feasibility(instance, initial_solution)
    if not report.feasible:
        raise InfeasibleInitial("; ".join(v.detail for v in report.violations))
    rng = np.random.default_rng(config.seed)
    current = initial_solution
    current_cost = solution_cost(instance, current)
    best, best_cost = current, current_cost
    trace = RunTrace(config.n1, current_cost)
    for it in range(config.iterations):
        schedules: Dict[int, object] = {}
        neighborhoods = [
            create_neighborhood(current, instance, config.selector_config, rng, schedules)
            for _ in range(config.n1)
        ]
        ys = [math.nan] * config.n1
        if config.selector == ORACLE:
            candidates = [
                _repair_candidate(instance, current, nb, config, rng) for nb in neighborhoods
            ]
            ys = [y for _, y in candidates]
            chosen = select_oracle(ys)
            candidate, y = candidates[chosen]
        else:
            if config.selector == RANDOM:
                chosen = select_random(config.n1, rng)
            else:
                potentials = [
                    predict_potential(
                        config.selector,
                        extract_features(
                            instance, current, nb, config.selector_config, schedules
                        ),
                    )
                    for nb in neighborhoods
                ]
                chosen = select_oracle(potentials)  # same argmax/tie rule
            candidate, y = _repair_candidate(
                instance, current, neighborhoods[chosen], config, rng
            )
            ys[chosen] = y
        candidate_cost = current_cost - y
        accepted = accept(candidate_cost, current_cost)
        if accepted:
            current, current_cost = candidate, candidate_cost
        if candidate_cost < best_cost:
            best, best_cost = candidate, candidate_cost
        trace.records.append(
            IterationRecord(it + 1, chosen, tuple(ys), accepted, current_cost, best_cost)
        )
    return current, best, trace


def collect_data(
    instances: Sequence[Instance],
    strategy: Union[str, ForestModel],
    config: RunConfig,
    runs: int = 1,
) -> Dataset:
    """Run data collection: every candidate is featurized and repaired.

    Per iteration n1 samples are stored; the strategy (random or model argmax)
    decides which candidate the walk follows.
    """
    manifest = feature_names(config.selector_config.n2)
    dataset = Dataset(manifest)
    seeds = np.random.SeedSequence(config.seed).spawn(len(instances) * runs)
    k = 0
    for instance in instances:
        for run in range(runs):
            rng = np.random.default_rng(seeds[k])
            k += 1
            run_id = f"{instance.name}/run{run + 1}"
            current = build_initial_solution(instance, config.repair_config, rng)
            current_cost = solution_cost(instance, current)
            for it in range(config.iterations):
                schedules: Dict[int, object] = {}
                neighborhoods = [
                    create_neighborhood(
                        current, instance, config.selector_config, rng, schedules
                    )
                    for _ in range(config.n1)
                ]
                candidates = []
                potentials = []
                for j, nb in enumerate(neighborhoods):
                    x = extract_features(
                        instance, current, nb, config.selector_config, schedules
                    )
                    candidate, y = _repair_candidate(instance, current, nb, config, rng)
                    dataset.append(Sample(run_id, it + 1, j + 1, x, y))
                    candidates.append((candidate, y))
                    if isinstance(strategy, ForestModel):
                        potentials.append(predict_potential(strategy, x))
                if strategy == RANDOM:
                    chosen = select_random(config.n1, rng)
                else:
                    chosen = select_oracle(potentials)
                candidate, y = candidates[chosen]
                if accept(current_cost - y, current_cost):
                    current, current_cost = candidate, current_cost - y
    return dataset


def guidelines_loop(
    instances: Sequence[Instance],
    rounds: int,
    config: RunConfig,
    trainer_config: ForestConfig = ForestConfig(),
    runs: int = 1,
    threshold: float = 0.0,
    split_ratio: float = 0.6,
) -> Tuple[List[ForestModel], Dataset, List[Dataset]]:
    """Multi-round collection: random first, then each round guided by the
    previous model; model k trains on the union of rounds 1..k.

    Returns (models ML1..MLk, cumulative dataset, per-round datasets).
    """
    models: List[ForestModel] = []
    round_datasets: List[Dataset] = []
    cumulative = Dataset(feature_names(config.selector_config.n2))
    for r in range(rounds):
        strategy: Union[str, ForestModel] = RANDOM if r == 0 else models[-1]
        round_config = replace(config, seed=config.seed + r)
        data = collect_data(instances, strategy, round_config, runs)
        round_datasets.append(data)
        cumulative.extend(data)
        model, _ = train_from_dataset(
            cumulative, threshold, split_ratio, config.seed + r, trainer_config
        )
        models.append(model)
    return models, cumulative, round_datasets


def write_trace(trace: RunTrace, path: str) -> None:
    """Tab-separated trace: iteration, chosen_j (1-based), y_1..y_n1, accepted,
    current_cost, best_cost."""
    with open(path, "w") as handle:
        ys = [f"y_{j + 1}" for j in range(trace.n1)]
        handle.write(
            "\t".join(["iteration", "chosen_j"] + ys + ["accepted", "current_cost", "best_cost"])
            + "\n"
        )
        handle.write(f"# initial_cost\t{trace.initial_cost!r}\n")
        for r in trace.records:
            row = [str(r.iteration), str(r.chosen + 1)]
            row.extend(repr(y) for y in r.improvements)
            row.extend([str(int(r.accepted)), repr(r.current_cost), repr(r.best_cost)])
            handle.write("\t".join(row) + "\n")


def read_trace(path: str) -> RunTrace:
    with open(path) as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if header[:2] != ["iteration", "chosen_j"]:
            raise ParseError(f"{path}: not a trace file")
        n1 = len(header) - 5
        initial_line = handle.readline().rstrip("\n").split("\t")
        if initial_line[0] != "# initial_cost":
            raise ParseError(f"{path}: missing initial cost line")
        trace = RunTrace(n1, float(initial_line[1]))
        for line in handle:
            fields = line.rstrip("\n").split("\t")
            trace.records.append(
                IterationRecord(
                    int(fields[0]),
                    int(fields[1]) - 1,
                    tuple(float(v) for v in fields[2 : 2 + n1]),
                    bool(int(fields[2 + n1])),
                    float(fields[3 + n1]),
                    float(fields[4 + n1]),
                )
            )
    return trace
