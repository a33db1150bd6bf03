"""Uplink C-RAN: compress-forward inner bound, cutset bound, fronthaul allocation and gap audits.

Relays quantize their received signals with Gaussian test channels of
variance sigma^2 and forward bin indices over the fronthaul. All rates are
in bits per real dimension. Antenna counts n_u and n_r generalize every
quantity; n_u = n_r = 1 gives the scalar-antenna formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateChannelError, InfeasibleError, InvalidInputError, SizeLimitError
from .instance import (
    UPLINK,
    CovarianceSet,
    NetworkInstance,
    SumRateReport,
    check_sigma,
    effective_gain,
)
from .numkernel import binary_entropy, logdet_gram, masked_subset_logdet_table, subset_logdet_table
from .polymatroid import (
    MAX_CHECK,
    MAX_GROUND,
    SetFunctionView,
    check_polymatroid,
    min_combined,
    popcounts,
    subset_of,
    subset_sums,
    symmetric_base,
)

LOG2E = math.log2(math.e)
AUDIT_LIMIT = 10


def _require_uplink(inst: NetworkInstance) -> None:
    if inst.direction != UPLINK:
        raise InvalidInputError("expected an uplink instance")


def relay_penalty(inst: NetworkInstance, sigma_sq: float) -> float:
    """Quantization cost (n_r/2) log2(1 + 1/sigma^2) charged per relay."""
    return 0.5 * inst.n_r * math.log2(1.0 + 1.0 / sigma_sq)


def _relay_blocks(M: np.ndarray, inst: NetworkInstance) -> np.ndarray:
    """B_l = M_l^T M_l for the rows M_l of each relay."""
    return np.stack([M[inst.relay_antennas([l])].T @ M[inst.relay_antennas([l])] for l in range(inst.L)])


def f_in(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, S1: Iterable[int], S2: Iterable[int]) -> float:
    """Compress-forward bound on the rate of users S1 when the fronthaul of relays S2 is cut."""
    _require_uplink(inst)
    s = check_sigma(sigma_sq)
    S1, S2 = set(S1), set(S2)
    M = effective_gain(inst, cov)
    keep = [l for l in range(inst.L) if l not in S2]
    sub = M[np.ix_(inst.relay_antennas(keep), inst.user_antennas(S1))]
    front = float(sum(inst.capacities[l] for l in S2)) if S2 else 0.0
    return 0.5 * logdet_gram(sub, 1.0 / (s + 1.0)) + front - len(S2) * relay_penalty(inst, s)


def f_out(inst: NetworkInstance, cov: CovarianceSet | None, S1: Iterable[int], S2: Iterable[int]) -> float:
    """Cutset bound on the rate of users S1 for the cut that contains relays S2."""
    _require_uplink(inst)
    S1, S2 = set(S1), set(S2)
    M = effective_gain(inst, cov)
    keep = [l for l in range(inst.L) if l not in S2]
    sub = M[np.ix_(inst.relay_antennas(keep), inst.user_antennas(S1))]
    front = float(sum(inst.capacities[l] for l in S2)) if S2 else 0.0
    return 0.5 * logdet_gram(sub, 1.0) + front


def relay_logdet_view(inst: NetworkInstance, scale: float, cov: CovarianceSet | None = None) -> SetFunctionView:
    """T -> (1/2) log2 |I + scale * G_{T,[K]} Gamma G_{T,[K]}^T| over relay subsets T."""
    _require_uplink(inst)
    if inst.L > MAX_GROUND:
        raise SizeLimitError(f"L={inst.L} exceeds the enumeration limit {MAX_GROUND}")
    M = effective_gain(inst, cov)
    return SetFunctionView.from_table(0.5 * subset_logdet_table(_relay_blocks(M, inst), scale))


def ncf_sum_rate(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> tuple[float, frozenset]:
    """Compress-forward sum-rate min_{S2} f_in([K], S2) and the minimizing relay set S2."""
    s = check_sigma(sigma_sq)
    phi = relay_logdet_view(inst, 1.0 / (s + 1.0), cov)
    psi = SetFunctionView.modular(inst.capacities - relay_penalty(inst, s))
    return min_combined(phi, psi)


def cutset_sum_upper(inst: NetworkInstance, cov: CovarianceSet | None = None) -> float:
    """min_{S2} f_out([K], S2): an upper bound on the largest sum-rate in the cutset region."""
    phi = relay_logdet_view(inst, 1.0, cov)
    value, _ = min_combined(phi, SetFunctionView.modular(inst.capacities))
    return value


def unlimited_sum_capacity(inst: NetworkInstance, cov: CovarianceSet | None = None) -> float:
    """Sum-capacity with infinite fronthaul, (1/2) log2 |I + G Gamma G^T|."""
    _require_uplink(inst)
    return 0.5 * logdet_gram(effective_gain(inst, cov), 1.0)


def ncf_allocated_rate(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> float:
    """Sum-rate the scheme reaches once the fronthaul is allocated: (1/2) log2 |I + G Gamma G^T/(sigma^2+1)|."""
    _require_uplink(inst)
    s = check_sigma(sigma_sq)
    return 0.5 * logdet_gram(effective_gain(inst, cov), 1.0 / (s + 1.0))


def c_star_up(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> float:
    """Total fronthaul that suffices for the allocated rate at this sigma^2."""
    s = check_sigma(sigma_sq)
    return ncf_allocated_rate(inst, s, cov) + inst.L * relay_penalty(inst, s)


def uplink_base_vector(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> np.ndarray:
    """A base vector of the relay log-det polymatroid at scale 1/(sigma^2+1).

    Up to MAX_CHECK relays the function is verified exhaustively and the
    symmetric (all-orders average) base is returned. Beyond that the average
    of the greedy vertices over the L cyclic shifts of the identity order is
    used; it is still a base because the log-det of a sum of PSD terms is a
    polymatroid rank function.
    """
    s = check_sigma(sigma_sq)
    scale = 1.0 / (s + 1.0)
    if inst.L <= MAX_CHECK:
        view, verdict = check_polymatroid(relay_logdet_view(inst, scale, cov))
        if not verdict.ok:
            raise RuntimeError(f"relay log-det function failed the polymatroid check: {verdict}")
        return symmetric_base(view)
    M = effective_gain(inst, cov)
    return _cyclic_chain_average(lambda T: 0.5 * logdet_gram(M[inst.relay_antennas(T)], scale), inst.L)


def _cyclic_chain_average(value: Callable[[list[int]], float], L: int) -> np.ndarray:
    y = np.zeros(L)
    for shift in range(L):
        order = [(shift + i) % L for i in range(L)]
        prev = 0.0
        for i in range(L):
            cur = value(order[: i + 1])
            y[order[i]] += cur - prev
            prev = cur
    return y / L


def allocate_fronthaul_up(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, c_sum: float
) -> np.ndarray:
    """Split a total fronthaul ``c_sum`` >= C* so the compress-forward sum-rate hits its ceiling.

    C_l = y~_l + (n_r/2) log2(1 + 1/sigma^2), where y~ is a base vector of the
    relay log-det polymatroid scaled up to absorb the excess capacity.
    """
    _require_uplink(inst)
    s = check_sigma(sigma_sq)
    need = c_star_up(inst, s, cov)
    if not c_sum >= need - 1e-9:
        raise InfeasibleError(f"total fronthaul {c_sum} is below C* = {need}", shortfall=need - c_sum)
    pen = relay_penalty(inst, s)
    excess = c_sum - inst.L * pen
    y = uplink_base_vector(inst, s, cov)
    total = float(y.sum())
    if total > 0:
        y_tilde = y * (excess / total)
    else:
        y_tilde = np.full(inst.L, excess / inst.L)
    C = y_tilde + pen
    C[-1] += c_sum - C.sum()
    return C


def sigma_star_up(inst: NetworkInstance, cov: CovarianceSet | None, c_sum: float) -> tuple[float, float]:
    """Quantization noise at which C_sum - (n_r L/2) log2(1 + 1/sigma^2) meets the allocated rate.

    The first term increases and the second decreases in sigma^2, so the
    crossing is unique. It is located by bisection on log sigma^2 over
    [1e-12, 1e12]; if it lies outside, the nearest edge is returned. The
    second value is the best sum-rate for this total fronthaul.
    """
    _require_uplink(inst)
    if not (c_sum > 0):
        raise InvalidInputError("total fronthaul must be positive")
    M = effective_gain(inst, cov)
    if not np.any(M):
        raise DegenerateChannelError("channel is identically zero")
    NL = inst.n_r * inst.L

    def terms(t: float) -> tuple[float, float]:
        s = math.exp(t)
        return c_sum - 0.5 * NL * math.log2(1.0 + 1.0 / s), 0.5 * logdet_gram(M, 1.0 / (s + 1.0))

    lo, hi = math.log(1e-12), math.log(1e12)
    a, b = terms(lo)
    if a >= b:
        return math.exp(lo), b
    a, b = terms(hi)
    if a <= b:
        return math.exp(hi), a
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        a, b = terms(mid)
        if abs(a - b) <= 1e-10 * max(1.0, abs(a), abs(b)):
            break
        if a < b:
            lo = mid
        else:
            hi = mid
    return math.exp(mid), min(a, b)


def additive_gap_up(inst: NetworkInstance, sigma_sq: float) -> tuple[float, float]:
    """(C* - R_inf bound, R_inf - R_NCF bound) at this sigma^2."""
    s = check_sigma(sigma_sq)
    rank = min(inst.n_u * inst.K, inst.n_r * inst.L)
    return 0.5 * inst.n_r * inst.L * math.log2(1.0 + 1.0 / s), 0.5 * rank * math.log2(1.0 + s)


@dataclass(frozen=True)
class MultiplicativeRow:
    P: float
    sigma_sq: float
    c_star_excess: float
    ncf_shortfall: float
    predicted_c_star: float
    predicted_ncf: float


def _schedule(name: str | Callable[[float], float], epsilon: float) -> Callable[[float], float]:
    if callable(name):
        return name
    table = {
        "one": lambda P: 1.0,
        "log": lambda P: math.log2(P),
        "inv_log": lambda P: math.log2(P) ** (-epsilon),
    }
    if name not in table:
        raise InvalidInputError(f"unknown sigma^2 schedule {name!r}")
    return table[name]


def multiplicative_ratios_up(
    inst: NetworkInstance,
    schedule: str | Callable[[float], float],
    P_grid: Sequence[float],
    epsilon: float = 0.5,
) -> list[MultiplicativeRow]:
    """High-SNR ratios C*/R_inf - 1 and 1 - R_NCF/R_inf along a sigma^2(P) schedule.

    Predicted values are the leading-order expressions in log P for a fixed
    channel; ``schedule`` is "one" (sigma^2 = 1), "log" (log2 P), "inv_log"
    ((log2 P)^-epsilon) or a callable.
    """
    _require_uplink(inst)
    sched = _schedule(schedule, epsilon)
    rank = int(np.linalg.matrix_rank(inst.gain))
    NL = inst.n_r * inst.L
    rows = []
    for P in P_grid:
        if not P > 1:
            raise InvalidInputError("P grid must lie above 1")
        at = replace(inst, P=float(P))
        s = check_sigma(sched(P))
        r_inf = unlimited_sum_capacity(at)
        r_ncf = ncf_allocated_rate(at, s)
        cst = c_star_up(at, s)
        logP = math.log2(P)
        if schedule == "log":
            pred_c = (NL * LOG2E / s - rank * math.log2(s)) / (rank * logP)
        elif schedule == "inv_log":
            pred_c = NL * math.log2(1.0 / s) / (rank * logP)
        else:
            pred_c = (rank * math.log2(1.0 / (1.0 + s)) + NL * math.log2(1.0 + 1.0 / s)) / (rank * logP)
        pred_n = math.log2(1.0 + s) / logP
        rows.append(MultiplicativeRow(float(P), s, cst / r_inf - 1.0, 1.0 - r_ncf / r_inf, pred_c, pred_n))
    return rows


@dataclass(frozen=True)
class GapAudit:
    """Per-user and sum gaps between the cutset bound and the best inner bound over a sigma^2 grid."""

    delta: float
    delta_sum: float
    bound_per_user: float
    bound_sum: float
    worst_subset: frozenset
    grid: tuple[float, ...]
    proof_bound_per_user: float = math.inf
    proof_bound_sum: float = math.inf

    @property
    def pass_per_user(self) -> bool:
        return self.delta <= self.bound_per_user + 1e-9

    @property
    def pass_sum(self) -> bool:
        return self.delta_sum <= self.bound_sum + 1e-9

    @property
    def passed(self) -> bool:
        return self.pass_per_user and self.pass_sum


def default_grid_up(inst: NetworkInstance) -> list[float]:
    L = inst.L
    return [v for v in (1.0 / L, 0.25, 0.5, 1.0, 2.0, 4.0, L - 1.0, float(L), 4.0 * L) if v > 0]


def proof_sigmas_up(inst: NetworkInstance) -> list[float]:
    """The sigma^2 values at which the per-user and sum gap bounds are established."""
    NL, NK, Nu = inst.n_r * inst.L, inst.n_u * inst.K, inst.n_u
    out = [1.0, max(inst.L - 1.0, 1.0)]
    if NL >= 2 * Nu:
        out.append(NL / Nu - 1.0)
    if NL > 2 * NK:
        out.append(NL / NK - 1.0)
    return out


def gap_bounds_up(inst: NetworkInstance) -> tuple[float, float]:
    """Closed-form per-user and sum gap bounds (n_u = n_r = 1 gives the scalar forms)."""
    NL, NK, Nu = inst.n_r * inst.L, inst.n_u * inst.K, inst.n_u
    per_user = 0.5 * Nu * math.log2(math.e * NL / Nu)
    total = 0.5 * NL * binary_entropy(NK / NL) if NL >= 2 * NK else 0.5 * NL
    return per_user, total


def proof_bound_up(inst: NetworkInstance, sigma_sq: float) -> tuple[float, float]:
    """Per-user and sum gap bounds valid at one sigma^2, from the rank of each cut.

    For |S1| = k and |S2| = l the cut's log-det ratio is at most
    min(n_r(L-l), n_u k) log2(1 + sigma^2) and the quantization cost is
    n_r l log2(1 + 1/sigma^2); both are halved and divided by k.
    """
    s = check_sigma(sigma_sq)
    a, b = math.log2(1.0 + s), math.log2(1.0 + 1.0 / s)
    per, total = 0.0, 0.0
    for k in range(1, inst.K + 1):
        for l in range(inst.L + 1):
            v = 0.5 * (min(inst.n_r * (inst.L - l), inst.n_u * k) * a + inst.n_r * l * b)
            per = max(per, v / k)
            if k == inst.K:
                total = max(total, v)
    return per, total


def gap_audit_up(
    inst: NetworkInstance, cov: CovarianceSet | None = None, sigma_grid: Iterable[float] | None = None
) -> GapAudit:
    """Enumerate every user set S1 and relay cut S2 to measure the gap to the cutset bound.

    The grid is the union of the caller's grid (default grid if None) and the
    sigma^2 values the gap bounds are proved at, so the pass flags are
    meaningful for any caller grid.
    """
    _require_uplink(inst)
    if inst.K > AUDIT_LIMIT or inst.L > AUDIT_LIMIT:
        raise SizeLimitError(f"gap audit limited to K, L <= {AUDIT_LIMIT}")
    base = default_grid_up(inst) if sigma_grid is None else [check_sigma(s) for s in sigma_grid]
    grid = tuple(sorted(set(base) | set(proof_sigmas_up(inst))))
    M = effective_gain(inst, cov)
    blocks = _relay_blocks(M, inst)
    L, K = inst.L, inst.K
    full = (1 << L) - 1
    masks = np.arange(1 << L)
    csum = subset_sums(inst.capacities)
    pop = popcounts(L)

    outer = masked_subset_logdet_table(blocks, inst.n_u, 1.0)
    outer_min = (0.5 * outer[:, full ^ masks] + csum).min(axis=1)
    inner_best = np.full(1 << K, -np.inf)
    for s in grid:
        inner = masked_subset_logdet_table(blocks, inst.n_u, 1.0 / (s + 1.0))
        val = 0.5 * inner[:, full ^ masks] + csum - pop * relay_penalty(inst, s)
        inner_best = np.maximum(inner_best, val.min(axis=1))

    diff = outer_min - inner_best
    per = diff[1:] / popcounts(K)[1:]
    worst = int(np.argmax(per)) + 1
    bu, bs = gap_bounds_up(inst)
    proof = [proof_bound_up(inst, s) for s in grid]
    return GapAudit(
        float(per.max()),
        float(diff[-1]),
        bu,
        bs,
        subset_of(worst, K),
        grid,
        min(p[0] for p in proof),
        min(p[1] for p in proof),
    )


def ncf_region_membership(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, rates: Sequence[float], tol: float = 1e-9
) -> tuple[bool, tuple[frozenset, frozenset] | None]:
    """Check sum_{k in S1} R_k <= f_in(S1, S2) for all 2^K * 2^L pairs; return the first violation."""
    _require_uplink(inst)
    s = check_sigma(sigma_sq)
    R = np.asarray(rates, dtype=float)
    if R.shape != (inst.K,):
        raise InvalidInputError(f"need {inst.K} rates")
    if inst.K + inst.L > 20:
        raise SizeLimitError("membership test limited to K + L <= 20")
    M = effective_gain(inst, cov)
    L = inst.L
    full = (1 << L) - 1
    masks = np.arange(1 << L)
    inner = masked_subset_logdet_table(_relay_blocks(M, inst), inst.n_u, 1.0 / (s + 1.0))
    val = 0.5 * inner[:, full ^ masks] + subset_sums(inst.capacities) - popcounts(L) * relay_penalty(inst, s)
    lhs = subset_sums(R)
    bad = np.argwhere(lhs[:, None] > val + tol)
    if bad.size == 0:
        return True, None
    s1, s2 = bad[0]
    return False, (subset_of(int(s1), inst.K), subset_of(int(s2), L))


def uplink_report(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> SumRateReport:
    inner, arg = ncf_sum_rate(inst, sigma_sq, cov)
    return SumRateReport(
        inner=inner,
        outer=cutset_sum_upper(inst, cov),
        unlimited=unlimited_sum_capacity(inst, cov),
        c_star=c_star_up(inst, sigma_sq, cov),
        sigma_sq=float(sigma_sq),
        argmin_subset=arg,
    )
