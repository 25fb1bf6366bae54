"""Gap measure, offline selector validation and report tables.

The gap locates an algorithm between the two baselines:
0% = oracle-quality, 100% = random-quality; values outside [0, 100] are
reported as-is (an algorithm can beat the oracle average or lose to random).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateBaseline, LengthMismatch, NoImprovingIterations
from .learning import ForestModel, Sample, predict_potential
from .pipeline import RunTrace, select_oracle, select_random


def gap(alg_avg: float, oracle_avg: float, random_avg: float) -> float:
    """100 · (alg − oracle) / (random − oracle), in percent."""
    if random_avg == oracle_avg:
        raise DegenerateBaseline("random and oracle averages coincide")
    return 100.0 * (alg_avg - oracle_avg) / (random_avg - oracle_avg)


@dataclass(frozen=True)
class ValidationReport:
    avg_true_rank: float
    fraction_improving: float
    avg_improvement: float
    iterations_considered: int


Selector = Callable[[Sequence[Sample]], int]


def oracle_selector(group: Sequence[Sample]) -> int:
    return select_oracle([s.improvement for s in group])


def random_selector(seed: int = 0) -> Selector:
    rng = np.random.default_rng(seed)

    def pick(group: Sequence[Sample]) -> int:
        return select_random(len(group), rng)

    return pick


def model_selector(model: ForestModel) -> Selector:
    def pick(group: Sequence[Sample]) -> int:
        return select_oracle([predict_potential(model, s.features) for s in group])

    return pick


def group_by_iteration(samples: Sequence[Sample]) -> List[List[Sample]]:
    """Group samples by (run_id, iteration), ordered by neighborhood index."""
    groups: Dict[Tuple[str, int], List[Sample]] = {}
    for s in samples:
        groups.setdefault((s.run_id, s.iteration), []).append(s)
    out = []
    for key in sorted(groups):
        out.append(sorted(groups[key], key=lambda s: s.neighborhood_index))
    return out


def validate_selector(groups: Sequence[Sequence[Sample]], selector: Selector) -> ValidationReport:
    """Offline metrics over iterations that contain an improving neighborhood.

    Rank of the pick is 1 + the number of strictly better candidates, so a
    tied-best pick counts as rank 1.
    """
    ranks: List[float] = []
    improving = 0
    picked_ys: List[float] = []
    for group in groups:
        ys = [s.improvement for s in group]
        if max(ys) <= 0:
            continue
        j = selector(group)
        ranks.append(1 + sum(1 for y in ys if y > ys[j]))
        if ys[j] > 0:
            improving += 1
        picked_ys.append(ys[j])
    if not ranks:
        raise NoImprovingIterations("no iteration has a strictly improving neighborhood")
    return ValidationReport(
        avg_true_rank=float(np.mean(ranks)),
        fraction_improving=improving / len(ranks),
        avg_improvement=float(np.mean(picked_ys)),
        iterations_considered=len(ranks),
    )


def convergence_series(traces: Sequence[RunTrace]) -> List[float]:
    """Per-iteration mean best cost over runs."""
    lengths = {len(t.records) for t in traces}
    if len(lengths) != 1:
        raise LengthMismatch(f"traces have differing iteration counts: {sorted(lengths)}")
    return [
        float(np.mean([t.records[i].best_cost for t in traces]))
        for i in range(lengths.pop())
    ]


@dataclass
class ResultTable:
    algorithms: List[str]  # column order
    rows: List[dict]  # instance, bks, avg per algorithm, gap per algorithm
    has_gaps: bool

    def to_tsv(self) -> str:
        header = ["instance", "bks"]
        for alg in self.algorithms:
            header.append(f"{alg}_avg")
            if self.has_gaps:
                header.append(f"{alg}_gap")
        lines = ["\t".join(header)]
        for row in self.rows:
            fields = [row["instance"], _num(row.get("bks"))]
            for alg in self.algorithms:
                fields.append(_num(row["avg"].get(alg)))
                if self.has_gaps:
                    fields.append(_num(row["gap"].get(alg)))
            lines.append("\t".join(fields))
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        header = ["Instance", "BKS"]
        for alg in self.algorithms:
            header.append(f"{alg} Avg")
            if self.has_gaps:
                header.append(f"{alg} Gap")
        table = [header]
        for row in self.rows:
            fields = [row["instance"], _num(row.get("bks"), "-")]
            for alg in self.algorithms:
                fields.append(_num(row["avg"].get(alg), "-"))
                if self.has_gaps:
                    g = row["gap"].get(alg)
                    fields.append("-" if g is None else f"{g:.2f}%")
            table.append(fields)
        widths = [max(len(r[k]) for r in table) for k in range(len(header))]
        return "\n".join(
            "  ".join(f.rjust(w) for f, w in zip(r, widths)) for r in table
        ) + "\n"


def _num(value, missing: str = "") -> str:
    if value is None:
        return missing
    return f"{value:.1f}" if isinstance(value, float) else str(value)


def result_table(
    averages: Dict[str, Dict[str, float]],
    bks: Optional[Dict[str, float]] = None,
    oracle_name: str = "oracle",
    random_name: str = "random",
) -> ResultTable:
    """Per-instance result rows plus an Average row.

    ``averages`` maps instance -> algorithm -> average total distance. Gaps
    are computed when both baselines are present; the Average-row gap is the
    mean of the per-instance gaps (not the gap of the averaged totals).
    """
    instances = sorted(averages)
    algorithms = sorted({alg for avgs in averages.values() for alg in avgs})
    for inst in instances:
        if set(averages[inst]) != set(algorithms):
            raise LengthMismatch(f"instance {inst} lacks some algorithm columns")
    has_gaps = oracle_name in algorithms and random_name in algorithms
    ordered = [a for a in (oracle_name, random_name) if a in algorithms]
    ordered += [a for a in algorithms if a not in ordered]

    def make_row(name: str, avgs: Dict[str, float], bks_value) -> dict:
        gaps: Dict[str, float] = {}
        if has_gaps:
            for alg in ordered:
                gaps[alg] = gap(avgs[alg], avgs[oracle_name], avgs[random_name])
        return {"instance": name, "bks": bks_value, "avg": avgs, "gap": gaps}

    rows = [
        make_row(inst, averages[inst], (bks or {}).get(inst)) for inst in instances
    ]
    mean_avgs = {
        alg: float(np.mean([averages[inst][alg] for inst in instances]))
        for alg in ordered
    }
    mean_bks = (
        float(np.mean([bks[inst] for inst in instances]))
        if bks and all(inst in bks for inst in instances)
        else None
    )
    average_row = {"instance": "Average", "bks": mean_bks, "avg": mean_avgs, "gap": {}}
    if has_gaps:
        average_row["gap"] = {
            alg: float(np.mean([row["gap"][alg] for row in rows])) for alg in ordered
        }
    rows.append(average_row)
    return ResultTable(ordered, rows, has_gaps)
