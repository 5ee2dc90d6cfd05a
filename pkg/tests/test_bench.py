"""Benchmark harness: ratio arithmetic and reproducible inputs."""

from __future__ import annotations

import pytest

from oracles import oracle_latency_ratio
from dpipe.bench import run_benchmark, spin_parallel_efficiency, synthetic_records


class TestSyntheticData:
    def test_seeded_reproducibility(self):
        assert synthetic_records(50, seed=3) == synthetic_records(50, seed=3)
        assert synthetic_records(50, seed=3) != synthetic_records(50, seed=4)


class TestRunBenchmark:
    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            run_benchmark(records=0, network_delay_ms=1, compute_delay_ms=1, workers=1)
        with pytest.raises(ValueError):
            run_benchmark(records=10, network_delay_ms=1, compute_delay_ms=1, workers=1, repeats=0)
        with pytest.raises(ValueError):
            run_benchmark(records=10, network_delay_ms=-1, compute_delay_ms=1, workers=1)

    def test_zero_network_delay_ratio_near_one(self):
        report = run_benchmark(
            records=60, network_delay_ms=0, compute_delay_ms=3, workers=1, repeats=2
        )
        assert 0.9 <= report.ratio <= 1.1

    def test_single_lane_ratio_matches_closed_form(self):
        report = run_benchmark(
            records=60, network_delay_ms=8, compute_delay_ms=4, workers=1, repeats=2
        )
        expected = oracle_latency_ratio(8, 4)
        assert 0.75 * expected <= report.ratio <= 1.25 * expected

    def test_report_serialization(self):
        report = run_benchmark(
            records=20, network_delay_ms=2, compute_delay_ms=1, workers=1, repeats=1
        )
        payload = report.to_dict()
        assert payload["records"] == 20
        assert payload["kernel"] in ("compiled", "pure")
        assert payload["embedded"]["medianRecordsPerSecond"] > 0
        assert len(report.summary_lines()) == 4


class TestSpinEfficiency:
    def test_single_worker_is_fully_efficient(self):
        assert spin_parallel_efficiency(1, spin_ms=1.0, spins=30) > 0.9

    def test_bounded_by_one(self):
        assert spin_parallel_efficiency(2, spin_ms=1.0, spins=30) <= 1.0
