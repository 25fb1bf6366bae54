import math

import numpy as np
import pytest

from conftest import as_solution, make_instance, reference_feasible
from lensvrp.errors import InconsistentDepot, InfeasibleCustomer, ParseError
from lensvrp.instances import (
    TABLE_ENTRIES,
    BatchSpec,
    Fixed,
    Normal,
    feasible_midpoint_bounds,
    generate_batch,
    parse_instance,
    sample_midpoints,
    write_instance,
)
from lensvrp.model import check_feasibility


SAMPLE = """\
toy
VEHICLE
NUMBER CAPACITY
2 50
CUSTOMER
CUST_NO XCOORD YCOORD DEMAND READY_TIME DUE_DATE SERVICE_TIME
0 10 10 0 0 200 0
1 15 10 7 20 60 5
2 10 20 3 0 200 0
"""


class TestParse:
    def test_fields(self):
        inst = parse_instance(SAMPLE)
        assert inst.name == "toy"
        assert inst.fleet_size == 2
        assert inst.capacity == 50.0
        assert inst.depot_location.x == 10.0
        assert inst.horizon.latest == 200.0
        assert inst.n == 2
        c = inst.customer(1)
        assert (c.demand, c.service_duration) == (7.0, 5.0)
        assert (c.window.earliest, c.window.latest) == (20.0, 60.0)

    def test_blank_lines_ignored(self):
        padded = "\n" + SAMPLE.replace("CUSTOMER\n", "CUSTOMER\n\n") + "\n\n"
        assert parse_instance(padded).n == 2

    def test_truncated_raises(self):
        with pytest.raises(ParseError):
            parse_instance("\n".join(SAMPLE.splitlines()[:5]))

    def test_bad_number_reports_line(self):
        bad = SAMPLE.replace("1 15 10 7 20 60 5", "1 15 10 seven 20 60 5")
        with pytest.raises(ParseError) as err:
            parse_instance(bad)
        assert err.value.line_no is not None

    def test_nonzero_depot_demand(self):
        bad = SAMPLE.replace("0 10 10 0 0 200 0", "0 10 10 4 0 200 0")
        with pytest.raises(InconsistentDepot):
            parse_instance(bad)


class TestRoundTrip:
    def test_write_then_parse(self):
        inst = parse_instance(SAMPLE)
        assert write_instance(parse_instance(write_instance(inst))) == write_instance(inst)

    def test_fractional_values_round_trip(self):
        inst = make_instance(
            [(1, 1.5, 2.25, 3.125, 0.5, 10.0625, 99.000001)],
            capacity=47.5,
            name="frac",
        )
        again = parse_instance(write_instance(inst))
        c = again.customer(1)
        assert (c.location.x, c.location.y) == (1.5, 2.25)
        assert (c.demand, c.service_duration) == (3.125, 0.5)
        assert (c.window.earliest, c.window.latest) == (10.0625, 99.000001)
        assert again.capacity == 47.5

    def test_no_trailing_zero_noise(self):
        inst = make_instance([(1, 1.5, 2.0, 3.0, 0.0, 0.0, 100.0)])
        text = write_instance(inst)
        assert "1 1.5 2 3 0 100 0" in text


class TestMidpointBounds:
    def test_hand_example(self):
        # depot at origin, customer 40 away, service 10, horizon [0, 100]
        inst = make_instance([(1, 0, 40, 1, 10, 0, 100)], horizon=(0, 100))
        assert feasible_midpoint_bounds(inst, 1) == (40.0, 50.0)

    def test_unreachable_customer(self):
        inst = make_instance([(1, 0, 60, 1, 10, 0, 100)], horizon=(0, 100))
        with pytest.raises(InfeasibleCustomer):
            feasible_midpoint_bounds(inst, 1)

    def test_midpoints_within_bounds_and_deterministic(self):
        rng = np.random.default_rng(0)
        customers = [
            (cid, float(x), float(y), 1.0, float(s), 0.0, 400.0)
            for cid, (x, y, s) in enumerate(
                zip(rng.uniform(0, 100, 20), rng.uniform(0, 100, 20), rng.integers(0, 10, 20)),
                start=1,
            )
        ]
        inst = make_instance(customers, horizon=(0, 400), depot=(50, 50))
        mids = sample_midpoints(inst, seed=5)
        assert mids == sample_midpoints(inst, seed=5)
        for cid, mid in mids.items():
            lo, hi = feasible_midpoint_bounds(inst, cid)
            assert lo <= mid <= hi


def _base_instance(n=20, seed=3):
    rng = np.random.default_rng(seed)
    customers = [
        (cid, float(x), float(y), float(q), float(s), 0.0, 400.0)
        for cid, (x, y, q, s) in enumerate(
            zip(
                rng.uniform(0, 100, n),
                rng.uniform(0, 100, n),
                rng.integers(1, 10, n),
                rng.integers(0, 5, n),
            ),
            start=1,
        )
    ]
    return make_instance(
        customers, fleet_size=n, capacity=200, horizon=(0, 400), depot=(50, 50), name="base"
    )


class TestGenerateBatch:
    def test_grid_counts_and_names(self):
        base = _base_instance()
        batch = generate_batch(BatchSpec(base, seed=1))
        assert len(batch) == 10
        assert [inst.name for inst in batch] == [f"base_gen{k}" for k in range(1, 11)]
        horizon = base.horizon
        restrictive_counts = [
            sum(1 for c in inst.customers if c.window != horizon) for inst in batch
        ]
        assert restrictive_counts == [20, 15, 10, 5, 20, 15, 10, 5, 20, 20]

    def test_fixed_lengths_clipped(self):
        base = _base_instance()
        batch = generate_batch(BatchSpec(base, seed=2))
        for inst, entry in zip(batch[:8], TABLE_ENTRIES[:8]):
            assert isinstance(entry.length_rule, Fixed)
            for c in inst.customers:
                if c.window != base.horizon:
                    assert c.window.length <= entry.length_rule.length + 1e-6

    def test_normal_entries_share_locations_and_demands(self):
        base = _base_instance()
        batch = generate_batch(BatchSpec(base, seed=4))
        for inst in batch:
            assert inst.fleet_size == base.fleet_size
            assert inst.capacity == base.capacity
            for c, b in zip(inst.customers, base.customers):
                assert (c.id, c.location, c.demand, c.service_duration) == (
                    b.id,
                    b.location,
                    b.demand,
                    b.service_duration,
                )

    def test_determinism_bytewise(self):
        base = _base_instance()
        a = [write_instance(i) for i in generate_batch(BatchSpec(base, seed=7))]
        b = [write_instance(i) for i in generate_batch(BatchSpec(base, seed=7))]
        assert a == b
        c = [write_instance(i) for i in generate_batch(BatchSpec(base, seed=8))]
        assert a != c

    def test_singletons_feasible_after_round_trip(self):
        base = _base_instance()
        for inst in generate_batch(BatchSpec(base, seed=9)):
            again = parse_instance(write_instance(inst))
            for c in again.customers:
                solo = make_instance(
                    [
                        (
                            c.id,
                            c.location.x,
                            c.location.y,
                            c.demand,
                            c.service_duration,
                            c.window.earliest,
                            c.window.latest,
                        )
                    ],
                    fleet_size=1,
                    capacity=again.capacity,
                    horizon=(again.horizon.earliest, again.horizon.latest),
                    depot=(again.depot_location.x, again.depot_location.y),
                )
                report = check_feasibility(solo, as_solution([[c.id]]))
                assert report.feasible, (inst.name, c.id, report.violations)
                assert reference_feasible(solo, [[c.id]])

    def test_normal_lengths_bounded(self):
        base = _base_instance()
        batch = generate_batch(BatchSpec(base, seed=11))
        for inst, entry in zip(batch[8:], TABLE_ENTRIES[8:]):
            assert isinstance(entry.length_rule, Normal)
            for c in inst.customers:
                assert 0.0 <= c.window.length <= base.horizon.length
