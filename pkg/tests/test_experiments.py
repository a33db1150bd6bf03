import math

import numpy as np
import pytest

from cran_bounds import downlink, uplink
from cran_bounds.errors import InvalidInputError
from cran_bounds.experiments import (
    CSV_HEADER,
    SweepResult,
    SweepRow,
    antenna_sweep,
    coupled_intensities,
    geometry_sweep,
    regime_sizes,
    scaling_sweep,
    sigma_select_downlink,
    sigma_select_uplink,
    table_sigma,
    trial_seed,
)
from cran_bounds.instance import NetworkInstance


def example1():
    return NetworkInstance("uplink", 1, 2, [[1.0], [1.0]], 15.0)


def test_sigma_select_single_point():
    assert sigma_select_uplink(example1(), None, [3.0]) == 3.0
    down = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 15.0)
    assert sigma_select_downlink(down, None, [0.7]) == 0.7


def test_sigma_select_uplink_exhaustive():
    inst = example1()
    r_inf = uplink.unlimited_sum_capacity(inst)
    obj = {
        s: max(uplink.c_star_up(inst, s) - r_inf, r_inf - uplink.ncf_allocated_rate(inst, s))
        for s in (0.5, 1.0, 2.0)
    }
    chosen = sigma_select_uplink(inst, None, [2.0, 0.5, 1.0])
    assert obj[chosen] == min(obj.values())


def test_sigma_select_uses_given_fronthaul():
    inst = example1().with_fronthaul((1.0, 1.0))
    grid = list(np.logspace(-2, 2, 9))
    r_inf = uplink.unlimited_sum_capacity(inst)
    vals = [max(uplink.c_star_up(inst, s) - r_inf, r_inf - uplink.ncf_sum_rate(inst, s)[0]) for s in grid]
    assert sigma_select_uplink(inst, None, grid) == grid[int(np.argmin(vals))]


def test_sigma_select_downlink_attains_grid_max():
    rng = np.random.default_rng(0)
    inst = NetworkInstance("downlink", 2, 3, rng.normal(size=(2, 3)), 10.0, (2.0, 3.0, 1.0))
    grid = [0.1, 0.3, 1.0, 3.0]
    s = sigma_select_downlink(inst, None, grid)
    best = max(downlink.ddf_sum_rate(inst, g)[0] for g in grid)
    assert downlink.ddf_sum_rate(inst, s)[0] == best


def test_sigma_select_ties_go_to_smaller():
    # with zero fronthaul every sigma^2 gives rate zero in the uplink, so the
    # objective is max(C*, 0) = C*, strictly decreasing: no tie, larger wins
    up = NetworkInstance("uplink", 1, 1, [[0.0]], 1.0)
    assert sigma_select_uplink(up, None, [4.0, 8.0]) == 8.0
    # the decode-forward rate saturates at the fronthaul once the penalty is negligible
    flat = NetworkInstance("downlink", 1, 1, [[1e6]], 1.0, (0.0,))
    assert downlink.ddf_sum_rate(flat, 1e-3)[0] < downlink.ddf_sum_rate(flat, 1e3)[0]
    grid = [1e3, 1e3 * (1 + 1e-16), 2e3]
    assert sigma_select_downlink(flat, None, grid) == min(
        s for s in grid if downlink.ddf_sum_rate(flat, s)[0] == max(downlink.ddf_sum_rate(flat, g)[0] for g in grid)
    )


def test_regime_sizes_and_table_sigma():
    assert regime_sizes("L=gK", 2, 8) == (8, 16)
    assert regime_sizes("L=K^g", 1.5, 4) == (4, 8)
    assert regime_sizes("K-fixed", 4, 30) == (4, 30)
    assert regime_sizes("L-fixed", 5, 30) == (30, 5)
    assert table_sigma("L=K^g", 2.0, 4, 16) == 4.0
    assert table_sigma("K-fixed", 4, 4, 16, eps=0.5) == 4.0
    assert table_sigma("L=K^g", 0.5, 16, 4, "downlink") == 4.0
    with pytest.raises(InvalidInputError):
        regime_sizes("bogus", 1, 1)


def test_trial_seeds_distinct():
    seeds = {trial_seed(0, g, t) for g in range(5) for t in range(50)}
    assert len(seeds) == 250
    assert trial_seed(3, 1, 2) == trial_seed(3, 1, 2)


def test_scaling_sweep_deterministic():
    a = scaling_sweep("L=gK", 2, [4], trials=2, seed=5)
    b = scaling_sweep("L=gK", 2, [4], trials=2, seed=5)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != scaling_sweep("L=gK", 2, [4], trials=2, seed=6).to_csv()
    assert a.to_csv().splitlines()[0] == ",".join(CSV_HEADER)


def test_scaling_sweep_l_equals_2k_trend():
    res = scaling_sweep("L=gK", 2, [8, 16, 32, 64], sigma_policy=1.0, trials=20, seed=0)
    ratio = {r.param1: r.value / (r.param1 / 2 * math.log2(r.param2)) for r in res.select("R_NCF")}
    assert 0.6 <= ratio[64] <= 1.4
    assert abs(ratio[64] - 1) < abs(ratio[8] - 1)


def test_scaling_sweep_k_fixed_tracks_asymptote():
    res = scaling_sweep("K-fixed", 4, [16, 64, 256, 1024], trials=10, seed=1)
    rates = [r.value for r in res.select("R_NCF")]
    asym = [r.value for r in res.select("asymptote")]
    assert all(a < b for a, b in zip(rates, rates[1:]))
    # growth per quadrupling of L is close to the predicted (1 - eps)(K/2) log2(4) = 2 bits
    steps = np.diff(rates)
    assert np.all(np.abs(steps - np.diff(asym)) < 1.0)


def test_scaling_sweep_downlink_orderings():
    res = scaling_sweep("L=gK", 2, [3, 6], trials=3, seed=2, direction="downlink")
    r = {(x.param1, x.statistic): x.value for x in res.rows}
    for K in (3, 6):
        assert r[(K, "R_DDF")] <= r[(K, "R_inf_upper")] + 1e-9


def test_geometry_sweep_trials_one_reproducible():
    a = geometry_sweep("lr=2lu", [10], trials=1, seed=3)
    assert a.to_csv() == geometry_sweep("lr=2lu", [10], trials=1, seed=3).to_csv()
    assert {r.statistic for r in a.rows} == {"R_NCF", "C_star", "R_inf"}


def test_geometry_sweep_median_trend_in_relay_density():
    res = geometry_sweep("lu-fixed", [5, 10, 20, 40], trials=500, seed=1, fixed_lambda_u=5)
    ncf = [r.value for r in res.select("R_NCF")]
    inf = [r.value for r in res.select("R_inf")]
    violations = sum(b < a for a, b in zip(ncf, ncf[1:]))
    assert violations <= 1
    assert all(a <= b + 1e-12 for a, b in zip(ncf, inf))


def test_geometry_sweep_downlink_randomized_upper():
    res = geometry_sweep("lr=2lu", [10], direction="downlink", trials=5, seed=4, upper="randomized", P=1e8)
    r = {x.statistic: x.value for x in res.rows}
    assert r["R_DDF"] <= r["R_inf_upper"] + 1e-9


def test_coupled_intensities():
    assert coupled_intensities("lr=2lu", 3) == (3, 6)
    assert coupled_intensities("lr=lu^2", 3) == (3, 9)
    assert coupled_intensities("lu-fixed", 7, 10) == (10, 7)


def test_antenna_sweep_single_antenna_reduction():
    res = antenna_sweep(K=2, L=3, c_sums=(10,), Ns=(1,), model="rich", trials=1, seed=0, P=10.0)
    from cran_bounds.channels import rich_scattering

    inst = NetworkInstance("uplink", 2, 3, rich_scattering(3, 2, trial_seed(0, 0, 0)), 10.0)
    assert res.rows[0].value == uplink.sigma_star_up(inst, None, 10.0)[1]


def test_antenna_sweep_mimo_gain_grows_with_fronthaul():
    res = antenna_sweep(c_sums=(20, 40, 80), Ns=(1, 4), trials=20, seed=0, P=1e12)
    v = {(r.param1, r.param2): r.value for r in res.rows}
    for n in (1, 4):
        assert v[(20, n)] <= v[(40, n)] + 1e-9 <= v[(80, n)] + 2e-9
    assert v[(80, 4)] - v[(80, 1)] > v[(20, 4)] - v[(20, 1)]


def test_antenna_sweep_downlink_nondecreasing():
    res = antenna_sweep(K=2, L=3, c_sums=(5, 10, 20), Ns=(2,), direction="downlink", model="rich", trials=3, seed=1, P=10.0)
    vals = [r.value for r in res.rows]
    assert vals == sorted(vals)


def test_sweep_row_validation():
    with pytest.raises(InvalidInputError):
        SweepRow("x", 1, 1, 0, "R_NCF", "median", 1.0, 0)
    with pytest.raises(InvalidInputError):
        SweepRow("x", 1, 1, 1, "R_NCF", "median", math.nan, 0)
    with pytest.raises(InvalidInputError):
        SweepRow("x", 1, 1, 1, "bogus", "median", 1.0, 0)


def test_csv_format():
    res = SweepResult([SweepRow("L=gK", 8, 16, 20, "R_NCF", "median", 0.1 + 0.2, 7)])
    lines = res.to_csv().split("\n")
    assert lines[1] == "L=gK,8,16,20,R_NCF,median,0.30000000000000004,7"
