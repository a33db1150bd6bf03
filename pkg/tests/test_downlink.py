import math

import numpy as np
import pytest

from cran_bounds.errors import InfeasibleError, InvalidInputError, SizeLimitError
from cran_bounds.instance import NetworkInstance
from cran_bounds import downlink as D

from oracles import downlink_ddf_sum, downlink_f_in, subsets


def random_inst(rng, K, L, P=None, n_u=1, n_r=1, scale=1.0):
    H = rng.normal(size=(n_u * K, n_r * L)) * scale
    P = float(rng.uniform(0.1, 100)) if P is None else P
    return NetworkInstance("downlink", K, L, H, P, tuple(rng.uniform(0, 10, L)), n_u, n_r)


def test_f_in_examples():
    inst = NetworkInstance("downlink", 1, 1, [[1.0]], 3.0, (10.0,))
    assert D.F_in(inst, 1.0, None, [0], [0]) == 0.0
    assert D.F_in(inst, 1.0, None, [0], []) == pytest.approx(0.5, abs=1e-12)


def test_f_in_matches_reference():
    rng = np.random.default_rng(0)
    inst = random_inst(rng, 3, 3)
    H, P, C = np.array(inst.gain), inst.P, inst.capacities
    for S1 in subsets(3):
        for S2 in subsets(3):
            assert D.F_in(inst, 0.4, None, S1, S2) == pytest.approx(downlink_f_in(H, P, C, 0.4, S1, S2), abs=1e-10)


def test_ddf_sum_rate_zero_fronthaul():
    inst = NetworkInstance("downlink", 2, 2, np.eye(2), 1.0, (0.0, 0.0))
    value, cut = D.ddf_sum_rate(inst, 1.0)
    assert value == pytest.approx(-1.0)
    assert cut == frozenset({0, 1})


def test_ddf_sum_rate_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(5):
        inst = random_inst(rng, 3, 6)
        s = float(rng.uniform(0.1, 3))
        ref = downlink_ddf_sum(np.array(inst.gain), inst.P, inst.capacities, s)
        assert D.ddf_sum_rate(inst, s)[0] == pytest.approx(ref, abs=1e-10)


def test_f_out_examples():
    inst = NetworkInstance("downlink", 2, 2, [[1.0, 0.5], [0.3, 2.0]], 2.0, (1.0, 1.5))
    assert D.F_out(inst, None, [], []) == pytest.approx(2.5)
    # independent inputs: the conditional covariance is the marginal one
    H = np.array(inst.gain)
    expected = 0.5 * math.log2(np.linalg.det(np.eye(2) + 2.0 * H @ H.T))
    assert D.F_out(inst, None, [0, 1], []) == pytest.approx(expected, abs=1e-12)


def test_f_out_correlated_uses_schur_value():
    inst = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 2.0, (1.0, 1.0))
    rho = 0.5
    Gamma = 2.0 * np.array([[1.0, rho], [rho, 1.0]])
    expected = 0.5 * math.log2(1 + 2.0 * (1 - rho**2)) + 1.0
    assert D.F_out(inst, Gamma, [0], []) == pytest.approx(expected, abs=1e-12)


def test_f_out_rejects_power_violation():
    inst = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 2.0, (1.0, 1.0))
    with pytest.raises(InvalidInputError):
        D.F_out(inst, np.diag([3.0, 1.0]), [0], [])
    with pytest.raises(InvalidInputError):
        D.F_out(inst, np.array([[1.0, 2.0], [2.0, 1.0]]), [0], [])


def test_f_out_dominates_f_in():
    rng = np.random.default_rng(2)
    inst = random_inst(rng, 2, 3)
    for s in (0.1, 1.0, 7.0):
        for S1 in subsets(3):
            for S2 in subsets(2):
                assert D.F_in(inst, s, None, S1, S2) <= D.F_out(inst, None, S1, S2) + 1e-12


def test_c_star_values():
    inst = NetworkInstance("downlink", 2, 2, np.zeros((2, 2)), 1.0)
    assert D.c_star_down(inst, 1.0) == 0.0
    rng = np.random.default_rng(3)
    inst = random_inst(rng, 3, 2)
    H = np.array(inst.gain)
    expected = 0.5 * math.log2(np.linalg.det(np.eye(3) + inst.P / 0.5 * H @ H.T))
    assert D.c_star_down(inst, 0.5) == pytest.approx(expected, abs=1e-10)


def test_allocation_identity():
    rng = np.random.default_rng(4)
    done = 0
    while done < 10:
        inst = random_inst(rng, int(rng.integers(1, 4)), 4, P=float(rng.uniform(1, 100)))
        s = 1.0
        cst = D.c_star_down(inst, s)
        if cst < inst.K * D.user_penalty(inst, s):
            continue
        C = D.allocate_fronthaul_down(inst, s, None, cst)
        assert C.sum() == pytest.approx(cst, abs=1e-12)
        rate = D.ddf_sum_rate(inst.with_fronthaul(C), s)[0]
        assert rate == pytest.approx(cst - inst.K * D.user_penalty(inst, s), abs=1e-9)
        done += 1


def test_allocation_single_relay_and_symmetry():
    inst = NetworkInstance("downlink", 2, 1, [[1.0], [2.0]], 5.0)
    cst = D.c_star_down(inst, 1.0)
    assert D.allocate_fronthaul_down(inst, 1.0, None, cst + 1) == pytest.approx([cst + 1])
    sym = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 15.0)
    C = D.allocate_fronthaul_down(sym, 1.0, None, 4.0)
    assert C[0] == pytest.approx(C[1], abs=1e-12)


def test_allocation_infeasible():
    weak = NetworkInstance("downlink", 2, 2, 0.01 * np.eye(2), 1.0)
    with pytest.raises(InfeasibleError) as err:
        D.allocate_fronthaul_down(weak, 1.0, None, 10.0)
    assert err.value.shortfall > 0
    inst = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 15.0)
    with pytest.raises(InfeasibleError):
        D.allocate_fronthaul_down(inst, 1.0, None, D.c_star_down(inst, 1.0) - 0.1)


def test_base_vector_floor():
    inst = NetworkInstance("downlink", 2, 3, np.random.default_rng(5).normal(size=(2, 3)) * 3, 10.0)
    y, meets = D.downlink_base_vector(inst, 1.0)
    assert y.sum() == pytest.approx(D.c_star_down(inst, 1.0))
    if meets:
        assert y.min() >= 0.5 - 1e-9


def test_max_sum_given_csum():
    rng = np.random.default_rng(6)
    inst = random_inst(rng, 2, 3)
    values = [D.max_sum_given_csum_down(inst, None, c).value for c in (0.5, 1, 2, 4, 8, math.inf)]
    assert all(a <= b + 1e-9 for a, b in zip(values, values[1:]))
    for c, v in zip((0.5, 1, 2, 4, 8), values):
        assert v <= c + 1e-12
    # grid oracle
    c = 3.0
    t = np.linspace(-40, 40, 10**5)
    H = np.array(inst.gain)
    lam = np.linalg.eigvalsh(H @ H.T)
    s = np.exp(t)
    obj = np.minimum(c, 0.5 * np.log2(1 + inst.P * lam[None, :] / s[:, None]).sum(axis=1)) - np.log2(1 + 1 / s)
    choice = D.max_sum_given_csum_down(inst, None, c)
    assert choice.value == pytest.approx(obj.max(), abs=1e-4)
    assert choice.value >= obj.max() - 1e-9


def test_max_sum_zero_channel_is_degenerate():
    inst = NetworkInstance("downlink", 2, 2, np.zeros((2, 2)), 1.0)
    choice = D.max_sum_given_csum_down(inst, None, 5.0)
    assert choice.value == 0.0 and choice.degenerate


def test_unlimited_bound_forms():
    inst = NetworkInstance("downlink", 2, 2, np.zeros((2, 2)), 1.0)
    assert D.dl_unlimited_upper_bound(inst)[0] == 0.0
    assert D.dl_unlimited_upper_bound(inst, "randomized", n_samples=5)[0] == 0.0
    h = np.array([[0.3, -1.2, 0.8]])
    inst = NetworkInstance("downlink", 1, 3, h, 2.0)
    v, cert = D.dl_unlimited_upper_bound(inst)
    assert v == pytest.approx(0.5 * math.log2(1 + 2.0 * 3 * float((h @ h.T)[0, 0])))
    assert np.trace(cert.Q) == pytest.approx(1 / 2.0)


def test_randomized_certificates_valid_and_reproducible():
    rng = np.random.default_rng(7)
    inst = random_inst(rng, 3, 3, n_r=2)
    certs = D.dual_certificates(inst, 20, seed=9)
    for c in certs:
        q = np.diag(c.Q)
        assert np.all(q >= 0)
        assert q.sum() == pytest.approx(inst.n_r / inst.P, rel=1e-9)
        blocks = q.reshape(inst.L, inst.n_r)
        assert np.all(blocks == blocks[:, :1])
    a, _ = D.dl_unlimited_upper_bound(inst, "randomized", 20, seed=9)
    b, _ = D.dl_unlimited_upper_bound(inst, "randomized", 20, seed=9)
    assert a == b == min(c.achieved_bound for c in certs)


def test_best_ddf_below_every_upper_bound():
    rng = np.random.default_rng(8)
    for _ in range(15):
        inst = random_inst(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        best = D.max_sum_given_csum_down(inst, None, math.inf).value
        assert best <= D.dl_unlimited_upper_bound(inst)[0] + 1e-9
        for c in D.dual_certificates(inst, 10, seed=1):
            assert best <= c.achieved_bound + 1e-9


def test_gap_audit_examples():
    inst = NetworkInstance("downlink", 1, 3, [[0.5, 1.0, 2.0]], 4.0, (1.0, 2.0, 0.5))
    a = D.gap_audit_down(inst, None, [1.0])
    assert a.delta <= 0.5 * math.log2(2 * 3) + 1e-9
    rng = np.random.default_rng(9)
    for _ in range(30):
        a = D.gap_audit_down(random_inst(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5))))
        assert a.passed
        assert a.delta <= a.proof_bound_per_user + 1e-9
        assert a.delta_sum <= a.proof_bound_sum + 1e-9


def test_gap_audit_mimo_and_correlated_gamma():
    rng = np.random.default_rng(10)
    inst = random_inst(rng, 2, 2, n_u=2, n_r=2)
    assert D.gap_audit_down(inst).passed
    A = rng.normal(size=(4, 4))
    Gamma = A @ A.T
    for l in range(2):
        blk = slice(2 * l, 2 * l + 2)
        Gamma[blk, :] *= math.sqrt(inst.P / np.trace(A @ A.T)[()])
        Gamma[:, blk] *= math.sqrt(inst.P / np.trace(A @ A.T)[()])
    a = D.gap_audit_down(inst, Gamma)
    assert np.isfinite(a.delta)


def test_gap_audit_size_limit():
    inst = NetworkInstance("downlink", 9, 1, np.ones((9, 1)), 1.0, (1.0,))
    with pytest.raises(SizeLimitError):
        D.gap_audit_down(inst)


def test_region_membership():
    rng = np.random.default_rng(11)
    inst = random_inst(rng, 3, 3, P=50.0)
    s = 1.0
    assert D.ddf_region_membership(inst, s, None, [0, 0, 0]) == (True, None)
    total = D.ddf_sum_rate(inst, s)[0]
    ok, witness = D.ddf_region_membership(inst, s, None, [abs(total) / 3 + 0.2] * 3)
    assert not ok
    S1, S2 = witness
    users = [k for k in range(3) if k not in S2]
    assert (abs(total) / 3 + 0.2) * len(users) > D.F_in(inst, s, None, S1, S2)
    t = min(
        min(D.F_in(inst, s, None, S1, frozenset(range(3)) - U) for S1 in subsets(3)) / len(U) for U in subsets(3) if U
    )
    if t > 0:
        assert D.ddf_region_membership(inst, s, None, [0.9 * t] * 3)[0]


def test_report():
    inst = NetworkInstance("downlink", 1, 2, [[1.0, 1.0]], 15.0, (2.0, 2.0))
    rep = D.downlink_report(inst, 1.0)
    assert rep.inner <= rep.outer + 1e-12
    assert rep.c_star == pytest.approx(0.5 * math.log2(31))
