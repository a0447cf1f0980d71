from __future__ import annotations

import numpy as np
import pytest
from conftest import network
from scipy import stats

from zonalsim.demand import (
    STREAM_OD,
    ArrivalSchedule,
    DemandModel,
    build_od_weights,
    generate_arrivals,
    rng_for,
)
from zonalsim.netcore import RoadNetwork


def _od(seed=1, **kw):
    return build_od_weights(network("zonal", 2, 2), seed, **kw)


class TestODWeights:
    def test_deterministic(self):
        a, b = _od(7), _od(7)
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.hot, b.hot)
        assert not np.array_equal(a.hot, _od(8).hot)

    def test_uniform_without_hot_pairs(self):
        od = _od(hot_pair_count=0)
        assert np.all(od.weight == od.weight[0])

    def test_hot_pairs(self):
        od = _od()
        assert len(od.hot) == 18
        assert len(set(od.hot.tolist())) == 18
        assert np.sum(od.weight == 2 * od.base_weight) == 18
        assert np.all(od.weight > 0)
        assert all(p.origin != p.destination for p in od.pairs())

    def test_pairs_cover_all_directed_spawn_pairs(self):
        net = network("zonal", 2, 2)
        od = _od()
        n = len(net.spawn_edges)
        assert len(od) == n * (n - 1)
        assert {(p.origin, p.destination) for p in od.pairs()} == {
            (a, b) for a in net.spawn_edges for b in net.spawn_edges if a != b
        }

    def test_spawn_edges_exclude_merges_and_pockets(self):
        for topo in ("zonal", "trad-static"):
            net = network(topo, 2, 2)
            kinds = {net.edges[e].kind for e in net.spawn_edges}
            assert kinds == {"straight"}

    def test_hot_frequency_chi_square(self):
        od = _od(3)
        draws = od.sample(rng_for(3, STREAM_OD), 1_000_000)
        counts = np.bincount(draws, minlength=len(od))
        expected = od.weight / od.weight.sum() * len(draws)
        _, p = stats.chisquare(counts, expected)
        assert p > 0.01
        hot_rate = counts[od.hot].mean()
        mask = np.ones(len(od), bool)
        mask[od.hot] = False
        assert hot_rate / counts[mask].mean() == pytest.approx(2.0, rel=0.05)

    def test_too_many_hot_pairs(self):
        with pytest.raises(ValueError, match="exceeds"):
            build_od_weights(network("zonal", 1, 1), 1, hot_pair_count=10_000)

    def test_needs_two_spawn_edges(self):
        with pytest.raises(ValueError, match="spawn edges"):
            build_od_weights(RoadNetwork({}, {}), 1)


class TestArrivals:
    def test_rate_zero_is_empty(self):
        assert len(generate_arrivals(DemandModel(0, 4, _od(), 600, 1))) == 0

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            DemandModel(-1, 4, _od(), 600, 1)
        with pytest.raises(ValueError):
            DemandModel(10, 4, _od(), 0, 1)

    def test_bit_identical_regeneration(self):
        dm = DemandModel(220, 4, _od(), 3600, 42)
        assert generate_arrivals(dm) == generate_arrivals(dm)

    def test_schedule_invariants(self):
        s = generate_arrivals(DemandModel(300, 4, _od(), 1800, 5))
        t = s.times
        assert np.all(np.diff(t) >= 0)
        assert t.min() >= 0 and t.max() < 1800
        assert all(a.origin != a.destination for a in s)

    def test_full_scale_count(self):
        od = build_od_weights(network("zonal", 10, 10), 1)
        s = generate_arrivals(DemandModel(220, 100, od, 7200, 1))
        assert abs(len(s) - 44_000) <= 3 * np.sqrt(44_000)

    def test_gaps_are_exponential(self):
        dm = DemandModel(100, 4, _od(), 36_000, 9)
        gaps = np.diff(np.concatenate([[0.0], generate_arrivals(dm).times]))
        _, p = stats.kstest(gaps, "expon", args=(0, 1 / dm.arrival_rate))
        assert p > 0.01

    @staticmethod
    def _dispersion(seed: int) -> float:
        dm = DemandModel(3600, 1, _od(), 200 * 60.0, seed)  # one per second, 200 windows of 60 s
        counts = np.histogram(generate_arrivals(dm).times, bins=200, range=(0, dm.duration))[0]
        assert counts.mean() >= 50
        return counts.var(ddof=1) / counts.mean()

    def test_window_counts_are_poisson(self):
        assert 0.9 <= self._dispersion(1) <= 1.1

    def test_dispersion_unbiased_across_seeds(self):
        ratios = [self._dispersion(s) for s in range(1, 51)]
        assert abs(np.mean(ratios) - 1.0) < 0.05

    def test_rate_change_keeps_hot_pairs(self):
        od = _od(4)
        a = generate_arrivals(DemandModel(100, 4, od, 600, 4))
        b = generate_arrivals(DemandModel(200, 4, od, 600, 4))
        assert len(a) != len(b)
        assert np.array_equal(od.hot, _od(4).hot)

    def test_csv_round_trip(self, tmp_path):
        s = generate_arrivals(DemandModel(200, 4, _od(), 600, 3))
        s.to_csv(tmp_path / "s.csv")
        back = ArrivalSchedule.from_csv(tmp_path / "s.csv", 600)
        assert back == s
