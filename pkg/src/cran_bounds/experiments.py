"""Numerical studies: rich-scattering scaling sweeps, stochastic-geometry medians and antenna sweeps.

Every sweep is a pure function of its arguments and seed. Trial t at grid
point g draws its randomness from SeedSequence([seed, g, t]).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import downlink, uplink
from .channels import (
    GeometryScenario,
    MultipathParams,
    los_gain_matrix,
    mimo_expand,
    multipath_gain_matrix,
    rich_scattering,
)
from .errors import InvalidInputError
from .instance import DOWNLINK, UPLINK, CovarianceSet, NetworkInstance

DEFAULT_SIGMA_GRID = tuple(np.logspace(-3, 3, 25))
CSV_HEADER = ("regime", "param1", "param2", "trials", "statistic", "aggregation", "value", "seed")
STATISTICS = ("R_NCF", "R_DDF", "C_star", "R_inf", "R_inf_upper", "R_max", "asymptote")
_TOL = 1e-9


@dataclass(frozen=True)
class SweepRow:
    regime: str
    param1: float
    param2: float
    trials: int
    statistic: str
    aggregation: str
    value: float
    seed: int

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise InvalidInputError(f"unknown statistic {self.statistic!r}")
        if self.trials < 1:
            raise InvalidInputError("trial count must be >= 1")
        if not math.isfinite(self.value):
            raise InvalidInputError(f"non-finite value for {self.statistic}")


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def select(self, statistic: str, aggregation: str | None = None) -> list[SweepRow]:
        return [r for r in self.rows if r.statistic == statistic and (aggregation is None or r.aggregation == aggregation)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.regime, _num(r.param1), _num(r.param2), r.trials, r.statistic, r.aggregation, repr(float(r.value)), r.seed])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def trial_seed(seed: int, grid_index: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), grid_index, trial]).generate_state(1, dtype=np.uint64)[0])


# sigma^2 selection


def sigma_select_uplink(inst: NetworkInstance, cov: CovarianceSet | None = None, grid: Sequence[float] = DEFAULT_SIGMA_GRID) -> float:
    """Grid point minimizing max{C* - R_inf, R_inf - R_NCF}; ties go to the smaller sigma^2.

    R_NCF is the compress-forward sum-rate for the instance's fronthaul when
    it has one, and the allocated rate (fronthaul C*) otherwise.
    """
    grid = sorted(float(s) for s in grid)
    if not grid:
        raise InvalidInputError("sigma^2 grid is empty")
    r_inf = uplink.unlimited_sum_capacity(inst, cov)

    def objective(s: float) -> float:
        if inst.fronthaul is not None:
            r = uplink.ncf_sum_rate(inst, s, cov)[0]
        else:
            r = uplink.ncf_allocated_rate(inst, s, cov)
        return max(uplink.c_star_up(inst, s, cov) - r_inf, r_inf - r)

    vals = [objective(s) for s in grid]
    return grid[int(np.argmin(vals))]


def sigma_select_downlink(inst: NetworkInstance, cov: CovarianceSet | None = None, grid: Sequence[float] = DEFAULT_SIGMA_GRID) -> float:
    """Grid point maximizing the decode-forward sum-rate; ties go to the smaller sigma^2."""
    grid = sorted(float(s) for s in grid)
    if not grid:
        raise InvalidInputError("sigma^2 grid is empty")

    def objective(s: float) -> float:
        if inst.fronthaul is not None:
            return downlink.ddf_sum_rate(inst, s, cov)[0]
        return downlink.ddf_allocated_rate(inst, s, cov)

    vals = [objective(s) for s in grid]
    return grid[int(np.argmax(vals))]


# rich scattering scaling

REGIMES = ("L=gK", "L=K^g", "K-fixed", "L-fixed")


def regime_sizes(regime: str, param: float, size: int) -> tuple[int, int]:
    """(K, L) for one entry of the size list."""
    if regime == "L=gK":
        return size, max(1, round(param * size))
    if regime == "L=K^g":
        return size, max(1, round(size**param))
    if regime == "K-fixed":
        return int(param), size
    if regime == "L-fixed":
        return size, int(param)
    raise InvalidInputError(f"unknown regime {regime!r}; choose from {REGIMES}")


def table_sigma(regime: str, param: float, K: int, L: int, direction: str = UPLINK, eps: float = 0.5) -> float:
    """sigma^2 prescribed for each scaling regime."""
    if direction == UPLINK:
        if regime == "L=K^g" and param > 1:
            return float(K) ** (param - 1)
        if regime == "K-fixed":
            return float(L) ** eps
        return 1.0
    if regime == "L=K^g" and param < 1:
        return float(L) ** (1 / param - 1)
    return 1.0


def table_asymptote(regime: str, param: float, K: int, L: int, direction: str = UPLINK, eps: float = 0.5) -> float:
    """Leading-order growth of the scheme's sum-rate in each regime."""
    if direction == UPLINK:
        if regime == "L=gK":
            return K / 2 * math.log2(L) if param > 1 else L / 2 * math.log2(K)
        if regime == "L=K^g":
            return K / 2 * math.log2(K) if param > 1 else L / 2 * math.log2(K)
        if regime == "K-fixed":
            return (1 - eps) * K / 2 * math.log2(L)
        return L / 2 * math.log2(K)
    if regime == "L=gK":
        return K / 2 * math.log2(L) if param > 1 else L / 2 * math.log2(K)
    if regime == "L=K^g":
        return L / 2 * math.log2(L) if param < 1 else K / 2 * math.log2(L)
    if regime == "K-fixed":
        return K / 2 * math.log2(L)
    return L / 2 * math.log2(K)


SigmaPolicy = float | str | Callable[[int, int], float]


def _resolve_sigma(policy: SigmaPolicy, inst: NetworkInstance, regime: str, param: float, eps: float) -> float:
    if callable(policy):
        return float(policy(inst.K, inst.L))
    if policy == "table":
        return table_sigma(regime, param, inst.K, inst.L, inst.direction, eps)
    if policy == "select":
        select = sigma_select_uplink if inst.direction == UPLINK else sigma_select_downlink
        return select(inst)
    if isinstance(policy, str):
        raise InvalidInputError(f"unknown sigma^2 policy {policy!r}")
    return float(policy)


def _trial_stats(inst: NetworkInstance, s: float) -> dict[str, float]:
    """Closed-form sum-rates of one channel draw at one sigma^2, with the per-trial orderings checked."""
    if inst.direction == UPLINK:
        r = uplink.ncf_allocated_rate(inst, s)
        out = {"R_NCF": r, "C_star": uplink.c_star_up(inst, s), "R_inf": uplink.unlimited_sum_capacity(inst)}
        assert r <= out["R_inf"] + _TOL, "compress-forward rate above unlimited capacity"
        assert out["C_star"] >= r - _TOL, "C* below the compress-forward rate"
        return out
    r = downlink.ddf_allocated_rate(inst, s)
    out = {"R_DDF": r, "C_star": downlink.c_star_down(inst, s), "R_inf_upper": downlink.dl_unlimited_upper_bound(inst)[0]}
    assert r <= out["R_inf_upper"] + _TOL, "decode-forward rate above the unlimited upper bound"
    return out


def _median_rows(regime, p1, p2, trials, seed, per_trial: list[dict[str, float]]) -> list[SweepRow]:
    return [
        SweepRow(regime, p1, p2, trials, name, "median", float(np.median([t[name] for t in per_trial])), seed)
        for name in per_trial[0]
    ]


def scaling_sweep(
    regime: str,
    param: float,
    sizes: Sequence[int],
    sigma_policy: SigmaPolicy = "table",
    trials: int = 20,
    seed: int = 0,
    direction: str = UPLINK,
    P: float = 1.0,
    eps: float = 0.5,
) -> SweepResult:
    """Median sum-rates on i.i.d. N(0,1) channels for each network size.

    ``param`` is gamma for the coupled regimes and the fixed K or L
    otherwise. Each size emits median rows for the scheme rate, C* and the
    unlimited rate (uplink capacity, downlink upper bound) plus the predicted
    asymptote. param1 = K and param2 = L.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    result = SweepResult()
    for g, size in enumerate(sizes):
        K, L = regime_sizes(regime, param, int(size))
        per_trial = []
        for t in range(trials):
            ts = trial_seed(seed, g, t)
            if direction == UPLINK:
                inst = NetworkInstance(UPLINK, K, L, rich_scattering(L, K, ts), P)
            elif direction == DOWNLINK:
                inst = NetworkInstance(DOWNLINK, K, L, rich_scattering(K, L, ts), P)
            else:
                raise InvalidInputError(f"direction must be uplink or downlink, got {direction!r}")
            s = _resolve_sigma(sigma_policy, inst, regime, param, eps)
            per_trial.append(_trial_stats(inst, s))
        result.rows += _median_rows(regime, K, L, trials, seed, per_trial)
        result.rows.append(SweepRow(regime, K, L, trials, "asymptote", "single", table_asymptote(regime, param, K, L, direction, eps), seed))
    return result


# stochastic geometry

COUPLINGS = ("lr=2lu", "lr=lu^2", "lu-fixed")


def coupled_intensities(coupling: str, lam: float, fixed_lambda_u: float = 10.0) -> tuple[float, float]:
    if coupling == "lr=2lu":
        return lam, 2.0 * lam
    if coupling == "lr=lu^2":
        return lam, lam**2
    if coupling == "lu-fixed":
        return fixed_lambda_u, lam
    raise InvalidInputError(f"unknown coupling {coupling!r}; choose from {COUPLINGS}")


def geometry_gain(scenario: GeometryScenario, model: str, seed: int, beta: float = 2.5, params: MultipathParams | None = None) -> np.ndarray:
    """L x K relay-user gains for a ``los`` or ``multipath`` model."""
    if model == "los":
        return los_gain_matrix(scenario, beta)
    if model == "multipath":
        return multipath_gain_matrix(scenario, params or MultipathParams(r0=scenario.r0), seed)
    raise InvalidInputError(f"unknown model {model!r}")


def geometry_sweep(
    coupling: str,
    lambdas: Sequence[float],
    model: str = "los",
    direction: str = UPLINK,
    trials: int = 1000,
    seed: int = 0,
    P: float = 1.0,
    beta: float = 2.5,
    params: MultipathParams | None = None,
    fixed_lambda_u: float = 10.0,
    area_side: float = 100.0,
    sigma_grid: Sequence[float] = DEFAULT_SIGMA_GRID,
    upper: str = "simple",
) -> SweepResult:
    """Median sum-rates over random node placements for each intensity.

    Per trial sigma^2 is selected on ``sigma_grid``. A draw with no users or
    no relays scores 0 for every statistic and stays in the median.
    param1 = lambda_u and param2 = lambda_r.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if direction not in (UPLINK, DOWNLINK):
        raise InvalidInputError(f"direction must be uplink or downlink, got {direction!r}")
    names = ("R_NCF", "C_star", "R_inf") if direction == UPLINK else ("R_DDF", "C_star", "R_inf_upper")
    result = SweepResult()
    for g, lam in enumerate(lambdas):
        lu, lr = coupled_intensities(coupling, float(lam), fixed_lambda_u)
        per_trial = []
        for t in range(trials):
            ts = trial_seed(seed, g, t)
            sc = GeometryScenario.draw(lu, lr, ts, area_side)
            if sc.K == 0 or sc.L == 0:
                per_trial.append(dict.fromkeys(names, 0.0))
                continue
            G = geometry_gain(sc, model, ts, beta, params)
            if direction == UPLINK:
                inst = NetworkInstance(UPLINK, sc.K, sc.L, G, P)
                s = sigma_select_uplink(inst, None, sigma_grid)
                per_trial.append(_trial_stats(inst, s))
            else:
                inst = NetworkInstance(DOWNLINK, sc.K, sc.L, G.T.copy(), P)
                s = sigma_select_downlink(inst, None, sigma_grid)
                stats = _trial_stats(inst, s)
                if upper == "randomized":
                    stats["R_inf_upper"] = downlink.dl_unlimited_upper_bound(inst, "randomized", seed=ts)[0]
                    assert stats["R_DDF"] <= stats["R_inf_upper"] + _TOL
                per_trial.append(stats)
        result.rows += _median_rows(coupling, lu, lr, trials, seed, per_trial)
    return result


# antennas


def antenna_gain(scenario: GeometryScenario, model: str, N: int, seed: int, beta: float = 2.5, params: MultipathParams | None = None) -> np.ndarray:
    """(N L) x (N K) relay-user gains with N antennas at every node."""
    if model == "multipath":
        return mimo_expand(scenario, params or MultipathParams(r0=scenario.r0), N, N, seed)
    if model == "los":
        return np.kron(los_gain_matrix(scenario, beta), np.ones((N, N)))
    if model == "rich":
        return rich_scattering(N * scenario.L, N * scenario.K, seed)
    raise InvalidInputError(f"unknown model {model!r}")


def antenna_sweep(
    K: int = 4,
    L: int = 6,
    c_sums: Sequence[float] = (20, 40, 60, 80),
    Ns: Sequence[int] = (1, 2, 3, 4),
    model: str = "multipath",
    direction: str = UPLINK,
    trials: int = 100,
    seed: int = 0,
    P: float = 1.0,
    beta: float = 2.5,
    params: MultipathParams | None = None,
    area_side: float = 100.0,
) -> SweepResult:
    """Median best sum-rate for each total fronthaul and antenna count N = N_u = N_r.

    K users and L relays are placed uniformly on the square. Trial t uses
    the same placement and seed for every (C_sum, N), so N = 1 is the
    single-antenna network and rates are comparable across the grid.
    param1 = C_sum and param2 = N.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if direction not in (UPLINK, DOWNLINK):
        raise InvalidInputError(f"direction must be uplink or downlink, got {direction!r}")
    values = {(c, n): [] for c in c_sums for n in Ns}
    for t in range(trials):
        ts = trial_seed(seed, 0, t)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0, t, 1]))
        sc = GeometryScenario(rng.uniform(0, area_side, (K, 2)), rng.uniform(0, area_side, (L, 2)), area_side, seed=ts)
        for n in Ns:
            G = antenna_gain(sc, model, int(n), ts, beta, params)
            if direction == UPLINK:
                inst = NetworkInstance(UPLINK, K, L, G, P, n_u=int(n), n_r=int(n))
            else:
                inst = NetworkInstance(DOWNLINK, K, L, G.T.copy(), P, n_u=int(n), n_r=int(n))
            for c in c_sums:
                if direction == UPLINK:
                    v = uplink.sigma_star_up(inst, None, float(c))[1]
                else:
                    v = downlink.max_sum_given_csum_down(inst, None, float(c)).value
                values[(c, n)].append(v)
    result = SweepResult()
    for (c, n), vs in values.items():
        result.rows.append(SweepRow(f"antenna-{direction}", c, n, trials, "R_max", "median", float(np.median(vs)), seed))
    return result
