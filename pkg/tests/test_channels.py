import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cran_bounds.channels import (
    GeometryScenario,
    MultipathParams,
    los_gain_matrix,
    mimo_expand,
    mp_band_fraction,
    multipath_gain_matrix,
    nakagami_amplitude,
    p_los,
    ppp_nodes,
    rayleigh_amplitude,
    read_matrix,
    rich_scattering,
    uniforms,
    write_matrix,
)
from cran_bounds.errors import DegenerateScenarioError, InvalidInputError


def test_rich_scattering_deterministic_and_prefix_stable():
    a = rich_scattering(5, 4, 11)
    assert np.array_equal(a, rich_scattering(5, 4, 11))
    # each entry depends only on its indices, so a larger draw extends a smaller one
    assert np.array_equal(rich_scattering(8, 6, 11)[:5, :4], a)
    assert not np.array_equal(a, rich_scattering(5, 4, 12))


def test_rich_scattering_moments():
    G = rich_scattering(400, 400, 3)
    assert abs(G.mean()) < 0.01
    assert G.var() == pytest.approx(1.0, abs=0.02)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 10))
def test_uniforms_open_interval(seed, stream):
    u = uniforms(seed, stream, np.arange(200))
    assert np.all((u > 0) & (u < 1))


def test_fading_moments():
    u = uniforms(5, 9, np.arange(200_000))
    assert np.mean(nakagami_amplitude(u, 2.0, 1.0) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(rayleigh_amplitude(u, 1.0) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(nakagami_amplitude(u, 3.0, 2.0) ** 2) == pytest.approx(2.0, abs=0.02)


def test_p_los_values():
    assert p_los(10.0) == 1.0
    assert p_los(18.0) == 1.0
    r = 72.0
    e = math.exp(-2.0)
    assert p_los(r) == pytest.approx(0.25 * (1 - e) + e, abs=1e-15)
    grid = np.linspace(1, 500, 2000)
    p = p_los(grid)
    assert np.all((p > 0) & (p <= 1))
    with pytest.raises(InvalidInputError):
        p_los(0.0)


def test_los_gain_examples():
    sc = GeometryScenario([[10.0, 0.0]], [[0.0, 0.0]])
    assert los_gain_matrix(sc, 2.5)[0, 0] == pytest.approx(10**-2.5, rel=1e-12)
    same = GeometryScenario([[5.0, 5.0]], [[5.0, 5.0]])
    assert los_gain_matrix(same, 2.5)[0, 0] == 1.0


def test_empty_scenario_is_degenerate():
    sc = GeometryScenario(np.zeros((0, 2)), [[1.0, 1.0]])
    with pytest.raises(DegenerateScenarioError):
        los_gain_matrix(sc, 2.5)


def test_positions_validated():
    with pytest.raises(InvalidInputError):
        GeometryScenario([[101.0, 0.0]], [[0.0, 0.0]])


def test_multipath_without_fading_is_path_loss_and_shadowing():
    sc = GeometryScenario([[30.0, 40.0]], [[0.0, 0.0]])
    p = MultipathParams(fading=False, shadow_sigma_los_db=0.0, shadow_sigma_nlos_db=0.0)
    g = multipath_gain_matrix(sc, p, 1)[0, 0]
    kappa = 4 * math.pi * 2.1e9 / 299_792_458.0
    assert g in (pytest.approx(1 / (kappa * 50**2.5)), pytest.approx(1 / (kappa * 50**3.5)))


def test_multipath_nonnegative_and_deterministic():
    sc = GeometryScenario.draw(20, 30, seed=4)
    p = MultipathParams()
    G = multipath_gain_matrix(sc, p, 4)
    assert G.shape == (sc.L, sc.K)
    assert np.all(G >= 0)
    assert np.array_equal(G, multipath_gain_matrix(sc, p, 4))


def test_mimo_expand_single_antenna_identity():
    sc = GeometryScenario.draw(10, 15, seed=2)
    p = MultipathParams()
    assert np.array_equal(mimo_expand(sc, p, 1, 1, 2), multipath_gain_matrix(sc, p, 2))


def test_mimo_expand_block_structure():
    sc = GeometryScenario.draw(10, 10, seed=3)
    p = MultipathParams(fading=False)
    G = mimo_expand(sc, p, 2, 3, 3)
    assert G.shape == (3 * sc.L, 2 * sc.K)
    base = multipath_gain_matrix(sc, p, 3)
    # without fading every antenna pair in a block carries the block's shared scale
    np.testing.assert_array_equal(G, np.kron(base, np.ones((3, 2))))
    faded = mimo_expand(sc, MultipathParams(), 2, 3, 3)
    assert not np.array_equal(faded, np.kron(base, np.ones((3, 2))))


def test_ppp_mean_count():
    counts = [len(ppp_nodes(100.0, 20.0, s)) for s in range(400)]
    assert np.mean(counts) == pytest.approx(20.0, abs=1.0)
    pts = ppp_nodes(100.0, 50.0, 1)
    assert np.all((pts >= 0) & (pts <= 100))
    assert np.array_equal(pts, ppp_nodes(100.0, 50.0, 1))


def test_ppp_users_and_relays_independent():
    sc = GeometryScenario.draw(30, 30, seed=8)
    assert not np.array_equal(sc.user_positions, sc.relay_positions)


def test_mp_band_fraction_high():
    assert mp_band_fraction(32, 128, 0) >= 0.95


def test_matrix_roundtrip(tmp_path):
    M = rich_scattering(3, 5, 1) * 1e-7
    path = tmp_path / "m.txt"
    write_matrix(path, M)
    assert np.array_equal(read_matrix(path), M)


def test_read_matrix_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2\n1 2\n3\n")
    with pytest.raises(InvalidInputError):
        read_matrix(path)
    with pytest.raises(InvalidInputError):
        read_matrix(tmp_path / "missing.txt")
