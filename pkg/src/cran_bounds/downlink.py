"""Downlink C-RAN: distributed decode-forward inner bound, cutset bound, allocation and gap audits.

The central processor precodes with auxiliary noise of variance sigma^2 and
sends each relay its codeword over the fronthaul. The downlink gain matrix H
has users (antennas) as rows and relays (antennas) as columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InfeasibleError, InvalidInputError, SizeLimitError
from .instance import DOWNLINK, CovarianceSet, NetworkInstance, SumRateReport, check_sigma, effective_gain
from .numkernel import (
    as_matrix,
    is_psd,
    logdet_gram,
    masked_subset_logdet_table,
    psd_sqrt_factor,
    schur_conditional,
    subset_logdet_table,
    water_fill,
)
from .polymatroid import (
    MAX_CHECK,
    MAX_GROUND,
    SetFunctionView,
    check_polymatroid,
    min_combined,
    popcounts,
    repair_base_to_floor,
    subset_of,
    subset_sums,
    symmetric_base,
)
from .uplink import GapAudit, _cyclic_chain_average

AUDIT_LIMIT = 8


def _require_downlink(inst: NetworkInstance) -> None:
    if inst.direction != DOWNLINK:
        raise InvalidInputError("expected a downlink instance")


def user_penalty(inst: NetworkInstance, sigma_sq: float) -> float:
    """Precoding cost (n_u/2) log2(1 + 1/sigma^2) charged per user."""
    return 0.5 * inst.n_u * math.log2(1.0 + 1.0 / sigma_sq)


def _relay_blocks(M: np.ndarray, inst: NetworkInstance) -> np.ndarray:
    """B_l = M_l M_l^T for the columns M_l of each relay."""
    cols = [M[:, inst.relay_antennas([l])] for l in range(inst.L)]
    return np.stack([c @ c.T for c in cols])


def F_in(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, S1: Iterable[int], S2: Iterable[int]
) -> float:
    """Decode-forward bound on the rate of users outside S2 served through relays S1."""
    _require_downlink(inst)
    s = check_sigma(sigma_sq)
    S1, S2 = set(S1), set(S2)
    users = [k for k in range(inst.K) if k not in S2]
    M = effective_gain(inst, cov)
    sub = M[np.ix_(inst.user_antennas(users), inst.relay_antennas(S1))]
    rest = [l for l in range(inst.L) if l not in S1]
    front = float(sum(inst.capacities[l] for l in rest)) if rest else 0.0
    return 0.5 * logdet_gram(sub, 1.0 / s) + front - len(users) * user_penalty(inst, s)


def full_covariance(inst: NetworkInstance, Gamma=None) -> np.ndarray:
    """Validated joint relay covariance; default (P/n_r) I."""
    n = inst.n_r * inst.L
    if Gamma is None:
        return (inst.P / inst.n_r) * np.eye(n)
    G = as_matrix(Gamma, "Gamma")
    if G.shape != (n, n):
        raise InvalidInputError(f"Gamma must be {n}x{n}")
    if not is_psd(G):
        raise InvalidInputError("Gamma must be symmetric PSD")
    tol = 1e-9 * max(1.0, inst.P)
    for l in range(inst.L):
        idx = inst.relay_antennas([l])
        if np.trace(G[np.ix_(idx, idx)]) > inst.P + tol:
            raise InvalidInputError(f"relay {l} exceeds its power budget P={inst.P}")
    return G


def _conditional_factor(inst: NetworkInstance, G: np.ndarray, S1: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    idx = inst.relay_antennas(S1)
    return idx, psd_sqrt_factor(schur_conditional(G, idx))


def F_out(inst: NetworkInstance, Gamma, S1: Iterable[int], S2: Iterable[int]) -> float:
    """Cutset bound for users outside S2 with relays S1 on the far side of the cut.

    Relays outside S1 are known to the receiver side of the cut, so the
    relevant covariance is the Schur complement Gamma_{S1|S1^c}.
    """
    _require_downlink(inst)
    G = full_covariance(inst, Gamma)
    S1, S2 = set(S1), set(S2)
    rest = [l for l in range(inst.L) if l not in S1]
    front = float(sum(inst.capacities[l] for l in rest)) if rest else 0.0
    if not S1:
        return front
    users = inst.user_antennas([k for k in range(inst.K) if k not in S2])
    idx, F = _conditional_factor(inst, G, S1)
    return 0.5 * logdet_gram(inst.gain[np.ix_(users, idx)] @ F, 1.0) + front


def relay_logdet_view(inst: NetworkInstance, scale: float, cov: CovarianceSet | None = None) -> SetFunctionView:
    """S1 -> (1/2) log2 |I + scale * sum_{l in S1} H_l Gamma_l H_l^T| over relay subsets."""
    _require_downlink(inst)
    if inst.L > MAX_GROUND:
        raise SizeLimitError(f"L={inst.L} exceeds the enumeration limit {MAX_GROUND}")
    M = effective_gain(inst, cov)
    return SetFunctionView.from_table(0.5 * subset_logdet_table(_relay_blocks(M, inst), scale))


def ddf_sum_rate(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> tuple[float, frozenset]:
    """Decode-forward sum-rate and the set of relays whose fronthaul enters the minimizing term."""
    s = check_sigma(sigma_sq)
    phi = relay_logdet_view(inst, 1.0 / s, cov)
    value, cut = min_combined(phi, SetFunctionView.modular(inst.capacities))
    return value - inst.K * user_penalty(inst, s), cut


def c_star_down(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> float:
    """(1/2) log2 |I + H Gamma H^T / sigma^2|."""
    _require_downlink(inst)
    s = check_sigma(sigma_sq)
    return 0.5 * logdet_gram(effective_gain(inst, cov), 1.0 / s)


def ddf_allocated_rate(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> float:
    """Sum-rate once the fronthaul is allocated: C* minus the per-user precoding cost."""
    s = check_sigma(sigma_sq)
    return c_star_down(inst, s, cov) - inst.K * user_penalty(inst, s)


def downlink_base_vector(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None
) -> tuple[np.ndarray, bool]:
    """Base vector of the relay log-det polymatroid at scale 1/sigma^2, and whether it meets the floor.

    The symmetric base is moved by exchanges toward every coordinate being at
    least (1/2) log2(1 + 1/sigma^2). When no base vector can meet that floor
    the unrepaired base is returned with ``False``; the allocated sum-rate
    does not depend on the floor.
    """
    s = check_sigma(sigma_sq)
    scale = 1.0 / s
    if inst.L > MAX_CHECK:
        M = effective_gain(inst, cov)
        y = _cyclic_chain_average(lambda T: 0.5 * logdet_gram(M[:, inst.relay_antennas(T)], scale), inst.L)
        return y, bool(np.all(y >= 0.5 * math.log2(1.0 + scale) - 1e-9))
    view, verdict = check_polymatroid(relay_logdet_view(inst, scale, cov))
    if not verdict.ok:
        raise RuntimeError(f"relay log-det function failed the polymatroid check: {verdict}")
    y = symmetric_base(view)
    try:
        return repair_base_to_floor(view, y, 0.5 * math.log2(1.0 + scale)), True
    except InfeasibleError:
        return y, False


def allocate_fronthaul_down(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, c_sum: float
) -> np.ndarray:
    """Split ``c_sum`` >= C* as C_l = (c_sum / phi([L])) y*_l so decode-forward reaches its ceiling."""
    _require_downlink(inst)
    s = check_sigma(sigma_sq)
    cst = c_star_down(inst, s, cov)
    pen = inst.K * user_penalty(inst, s)
    if cst < pen - 1e-9:
        raise InfeasibleError(f"C* = {cst} is below the precoding cost {pen}", shortfall=pen - cst)
    if not c_sum >= cst - 1e-9:
        raise InfeasibleError(f"total fronthaul {c_sum} is below C* = {cst}", shortfall=cst - c_sum)
    y, _ = downlink_base_vector(inst, s, cov)
    C = y * (c_sum / float(y.sum()))
    C[-1] += c_sum - C.sum()
    return C


class SigmaChoice(NamedTuple):
    sigma_sq: float
    value: float
    degenerate: bool = False


def max_sum_given_csum_down(inst: NetworkInstance, cov: CovarianceSet | None, c_sum: float) -> SigmaChoice:
    """sup over sigma^2 of min{C_sum, C*(sigma^2)} - (n_u K/2) log2(1 + 1/sigma^2).

    A coarse scan over log sigma^2 in [-40, 40] brackets the best point, then
    golden-section search refines it to 1e-8 in log sigma^2. ``c_sum`` may be
    infinite.
    """
    _require_downlink(inst)
    if not c_sum > 0:
        raise InvalidInputError("total fronthaul must be positive")
    M = effective_gain(inst, cov)
    if not np.any(M):
        return SigmaChoice(math.exp(40.0), 0.0, True)
    NK = inst.n_u * inst.K

    def value(t: float) -> float:
        s = math.exp(t)
        return min(c_sum, 0.5 * logdet_gram(M, 1.0 / s)) - 0.5 * NK * math.log2(1.0 + 1.0 / s)

    ts = np.linspace(-40.0, 40.0, 321)
    vals = [value(t) for t in ts]
    i = int(np.argmax(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo + (1 - invphi) * (hi - lo), lo + invphi * (hi - lo)
    fa, fb = value(a), value(b)
    while hi - lo > 1e-8:
        if fa >= fb:
            hi, b, fb = b, a, fa
            a = lo + (1 - invphi) * (hi - lo)
            fa = value(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + invphi * (hi - lo)
            fb = value(b)
    best_t, best = max([(ts[i], vals[i]), (a, fa), (b, fb)], key=lambda p: p[1])
    return SigmaChoice(math.exp(best_t), best)


@dataclass(frozen=True)
class DualCertificate:
    """Diagonal dual matrix Q (one entry per relay antenna) and the upper bound it certifies."""

    Q: np.ndarray
    achieved_bound: float

    @property
    def q(self) -> np.ndarray:
        return np.diag(self.Q).copy()


def _dual_value(inst: NetworkInstance, q: np.ndarray) -> float:
    """max over PSD Sigma with tr <= 1 of (1/2) log2 |I + Q^-1/2 H^T Sigma H Q^-1/2|."""
    A = inst.gain / np.sqrt(q)[None, :]
    sv = np.linalg.svd(A, compute_uv=False)
    g = sv**2
    if not np.any(g > 0):
        return 0.0
    p = water_fill(g, 1.0)
    return 0.5 * float(np.sum(np.log2(1.0 + g * p)))


def dl_unlimited_upper_bound(
    inst: NetworkInstance, strategy: str = "simple", n_samples: int = 200, seed: int = 0
) -> tuple[float, DualCertificate]:
    """Upper bound on the fronthaul-unlimited downlink sum-capacity.

    ``simple`` uses Q = I/(PL), giving (1/2) log2 |I + PL H H^T|. ``randomized``
    evaluates the uniform Q and ``n_samples`` Dirichlet(1) draws of the
    per-relay levels (trace n_r/P), each bounded through the PSD relaxation
    of Sigma, and keeps the smallest.
    """
    _require_downlink(inst)
    n = inst.n_r * inst.L
    uniform = np.full(n, 1.0 / (inst.P * inst.L))
    if strategy == "simple":
        v = 0.5 * logdet_gram(inst.gain, inst.P * inst.L)
        return v, DualCertificate(np.diag(uniform), v)
    if strategy != "randomized":
        raise InvalidInputError(f"unknown strategy {strategy!r}")
    best = min(dual_certificates(inst, n_samples, seed), key=lambda c: c.achieved_bound)
    return best.achieved_bound, best


def dual_certificates(inst: NetworkInstance, n_samples: int = 200, seed: int = 0) -> list[DualCertificate]:
    """Every certificate the randomized strategy evaluates: the uniform Q first, then the draws."""
    _require_downlink(inst)
    if not isinstance(n_samples, (int, np.integer)) or n_samples < 0:
        raise InvalidInputError("n_samples must be a nonnegative integer")
    uniform = np.full(inst.n_r * inst.L, 1.0 / (inst.P * inst.L))
    out = [DualCertificate(np.diag(uniform), _dual_value(inst, uniform))]
    for child in np.random.SeedSequence(seed).spawn(n_samples):
        levels = np.random.default_rng(child).dirichlet(np.ones(inst.L)) / inst.P
        q = np.maximum(np.repeat(levels, inst.n_r), 1e-300)
        out.append(DualCertificate(np.diag(q), _dual_value(inst, q)))
    return out


def default_grid_down(inst: NetworkInstance) -> list[float]:
    K = inst.K
    return [v for v in (1.0 / K, 0.25, 0.5, 1.0, 2.0, 4.0, K - 1.0, float(K), 4.0 * K) if v > 0]


def proof_sigmas_down(inst: NetworkInstance) -> list[float]:
    NL, NK = inst.n_r * inst.L, inst.n_u * inst.K
    out = [1.0, max(inst.K - 1.0, 1.0)]
    if NK > NL:
        out.append(NK / NL - 1.0)
    return out


def gap_bounds_down(inst: NetworkInstance) -> tuple[float, float]:
    """Closed-form per-user and sum gap bounds."""
    K, L, Nu, Nr = inst.K, inst.L, inst.n_u, inst.n_r
    total = 0.5 * Nu * K + 0.5 * min(Nr * L, Nu * K) * math.log2(Nr * L)
    if inst.siso:
        return 0.5 * math.log2(math.e * K * L), total
    if Nu < Nr * L:
        per = 0.5 * Nu * math.log2(math.e * Nr * L * K)
    elif Nu * K >= 2 * Nr * L:
        per = 0.5 * Nr * L * math.log2(math.e * Nu * K)
    else:
        per = 0.5 * Nu + 0.5 * Nr * L * math.log2(Nr * L)
    return per, total


def proof_bound_down(inst: NetworkInstance, sigma_sq: float) -> tuple[float, float]:
    """Per-user and sum gap bounds valid at one sigma^2.

    With u users on the far side of the cut and m relays in S1, the log-det
    ratio is at most min(n_u u, n_r m) log2 max(1, sigma^2 n_r m), and the
    precoding cost of the monotonized inner bound is at most n_u K log2(1 + 1/sigma^2).
    """
    s = check_sigma(sigma_sq)
    cost = inst.n_u * inst.K * math.log2(1.0 + 1.0 / s)
    per, total = 0.0, 0.0
    for u in range(1, inst.K + 1):
        for m in range(inst.L + 1):
            ratio = min(inst.n_u * u, inst.n_r * m) * math.log2(max(1.0, s * inst.n_r * m)) if m else 0.0
            v = 0.5 * (cost + ratio)
            per = max(per, v / u)
            if u == inst.K:
                total = max(total, v)
    return per, total


def _superset_min(a: np.ndarray, bits: int) -> np.ndarray:
    """out[..., U] = min over U' containing U of a[..., U']."""
    out = a.copy()
    masks = np.arange(1 << bits)
    for i in range(bits):
        without = masks[(masks >> i & 1) == 0]
        out[..., without] = np.minimum(out[..., without], out[..., without | 1 << i])
    return out


def gap_audit_down(
    inst: NetworkInstance, Gamma=None, sigma_grid: Iterable[float] | None = None, cov: CovarianceSet | None = None
) -> GapAudit:
    """Gap between the cutset bound (covariance ``Gamma``) and the monotonized decode-forward bound.

    Users outside S2 are indexed by the kept set U = S2^c. The inner bound
    for U takes min over T2 inside S2, i.e. over kept sets containing U. The
    grid is the union of the caller's grid and the sigma^2 values the bounds
    are proved at.
    """
    _require_downlink(inst)
    if inst.K > AUDIT_LIMIT or inst.L > AUDIT_LIMIT:
        raise SizeLimitError(f"gap audit limited to K, L <= {AUDIT_LIMIT}")
    G = full_covariance(inst, Gamma)
    base = default_grid_down(inst) if sigma_grid is None else [check_sigma(s) for s in sigma_grid]
    grid = tuple(sorted(set(base) | set(proof_sigmas_down(inst))))
    K, L = inst.K, inst.L
    full = (1 << L) - 1
    rmasks = np.arange(1 << L)
    front = subset_sums(inst.capacities)[full ^ rmasks]  # capacity of relays outside S1
    upop = popcounts(K)

    outer = np.empty((1 << K, 1 << L))
    outer[:, 0] = front[0]
    for S1 in range(1, 1 << L):
        idx, F = _conditional_factor(inst, G, subset_of(S1, L))
        Mc = inst.gain[:, idx] @ F
        outer[:, S1] = 0.5 * masked_subset_logdet_table((Mc @ Mc.T)[None], inst.n_u, 1.0)[:, 1] + front[S1]
    outer_min = outer.min(axis=1)

    blocks = _relay_blocks(effective_gain(inst, cov), inst)
    inner_best = np.full(1 << K, -np.inf)
    for s in grid:
        ld = masked_subset_logdet_table(blocks, inst.n_u, 1.0 / s)
        fin = 0.5 * ld + front[None, :] - (upop * user_penalty(inst, s))[:, None]
        inner_best = np.maximum(inner_best, _superset_min(fin.T, K).T.min(axis=1))

    diff = outer_min - inner_best
    per = diff[1:] / upop[1:]
    worst = int(np.argmax(per)) + 1
    bu, bs = gap_bounds_down(inst)
    proof = [proof_bound_down(inst, s) for s in grid]
    full_users = frozenset(range(K))
    return GapAudit(
        float(per.max()),
        float(diff[-1]),
        bu,
        bs,
        full_users - subset_of(worst, K),
        grid,
        min(p[0] for p in proof),
        min(p[1] for p in proof),
    )


def ddf_region_membership(
    inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None, rates: Sequence[float], tol: float = 1e-9
) -> tuple[bool, tuple[frozenset, frozenset] | None]:
    """Check sum_{k not in S2} R_k <= F_in(S1, S2) for every (S1, S2); return the first violation."""
    _require_downlink(inst)
    s = check_sigma(sigma_sq)
    R = np.asarray(rates, dtype=float)
    if R.shape != (inst.K,):
        raise InvalidInputError(f"need {inst.K} rates")
    if inst.K + inst.L > 18:
        raise SizeLimitError("membership test limited to K + L <= 18")
    K, L = inst.K, inst.L
    full = (1 << L) - 1
    front = subset_sums(inst.capacities)[full ^ np.arange(1 << L)]
    ld = masked_subset_logdet_table(_relay_blocks(effective_gain(inst, cov), inst), inst.n_u, 1.0 / s)
    fin = 0.5 * ld + front[None, :] - (popcounts(K) * user_penalty(inst, s))[:, None]
    lhs = subset_sums(R)
    bad = np.argwhere(lhs[:, None] > fin + tol)
    if bad.size == 0:
        return True, None
    U, S1 = bad[0]
    return False, (subset_of(int(S1), L), frozenset(range(K)) - subset_of(int(U), K))


def downlink_report(inst: NetworkInstance, sigma_sq: float, cov: CovarianceSet | None = None) -> SumRateReport:
    """Decode-forward sum-rate, cutset sum bound with Gamma = (P/n_r) I, and related values."""
    inner, cut = ddf_sum_rate(inst, sigma_sq, cov)
    upper, _ = dl_unlimited_upper_bound(inst, "simple")
    outer = min(F_out(inst, None, subset_of(m, inst.L), ()) for m in range(1 << inst.L))
    return SumRateReport(
        inner=inner,
        outer=outer,
        unlimited=upper,
        c_star=c_star_down(inst, sigma_sq, cov),
        sigma_sq=float(sigma_sq),
        argmin_subset=cut,
    )
