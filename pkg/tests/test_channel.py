"""Channel synthesis: steering, tile response, effective channels."""

import io

import numpy as np
import pytest
from dataclasses import replace

from tilebeam.channel import (
    EffectiveChannels,
    ModeCodebook,
    PathCluster,
    ScenarioConfig,
    build_and_truncate_codebook,
    dump_channels,
    effective_channel,
    effective_channels,
    full_reflection_codebook,
    pathloss_power_factor,
    sample_scenario,
    steering_vector,
    tile_response,
    ELEMENT_GAIN,
)
from tilebeam.units import SPEED_OF_LIGHT


SMALL = ScenarioConfig(n_tx=4, n_ir=1, n_er=1, n_tiles=2, irs_rows=4,
                       irs_cols=3, seed=11)


def test_friis_power_factor_frozen():
    lam = SPEED_OF_LIGHT / 2.5e9
    # 50-digit evaluation of (lambda / (4 pi 30))^2
    assert pathloss_power_factor(30.0, lam, 2.0) == pytest.approx(
        1.0118104279366134e-7, rel=1e-12)


def test_steering_unit_modulus():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(6, 3))
    for _ in range(20):
        e, a = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
        v = steering_vector(pos, e, a, 0.12)
        assert np.allclose(np.abs(v), 1.0)


def test_steering_broadside_all_ones():
    sc = sample_scenario(SMALL)
    # elevation zero points along z, orthogonal to both arrays
    assert np.allclose(steering_vector(sc.bs_positions, 0.0, 1.3, sc.wavelength), 1.0)
    assert np.allclose(steering_vector(sc.irs_positions, 0.0, 0.2, sc.wavelength), 1.0)


def test_steering_endfire_alternates():
    sc = sample_scenario(SMALL)
    # BS ULA lies along y with half-wavelength spacing; endfire direction
    # gives adjacent phase difference pi, i.e. an alternating pattern
    v = steering_vector(sc.bs_positions, np.pi / 2, np.pi / 2, sc.wavelength)
    ratios = v[1:] / v[:-1]
    assert np.allclose(ratios, -1.0)


def test_tile_response_single_element():
    cfg = ScenarioConfig(n_tx=2, n_ir=1, n_er=1, n_tiles=1, irs_rows=1,
                         irs_cols=1, seed=3)
    sc = sample_scenario(cfg)
    r = tile_response(sc, 1, (0.3, 1.0), 0.7,
                      aoa_irs=np.array([[0.2, 0.4]]),
                      aod_irs=np.array([[0.5, 2.0]]))
    assert r.shape == (1, 1)
    assert abs(r[0, 0]) == pytest.approx(ELEMENT_GAIN, rel=1e-12)


def test_tile_response_coherent_peak_and_doubling():
    def peak(rows, cols):
        cfg = ScenarioConfig(n_tx=2, n_ir=1, n_er=1, n_tiles=1, irs_rows=rows,
                             irs_cols=cols, seed=3)
        sc = sample_scenario(cfg)
        mode_dir = (0.35, 0.9)
        # broadside incidence, observed exactly along the steered direction
        r = tile_response(sc, 1, mode_dir, 0.0,
                          aoa_irs=np.array([[0.0, 0.0]]),
                          aod_irs=np.array([mode_dir]))
        return abs(r[0, 0])

    assert peak(2, 2) == pytest.approx(4 * ELEMENT_GAIN, rel=1e-12)
    assert peak(4, 2) == pytest.approx(8 * ELEMENT_GAIN, rel=1e-12)


def test_tile_response_global_phase_factorization():
    sc = sample_scenario(SMALL)
    aoa = np.array([[0.2, 0.4], [0.1, 3.0]])
    aod = np.array([[0.5, 2.0], [0.7, 1.1], [0.3, 0.2]])
    delta = 2.0 * np.pi / 3.0
    r0 = tile_response(sc, 1, (0.3, 1.0), 0.0, aoa, aod)
    r1 = tile_response(sc, 1, (0.3, 1.0), delta, aoa, aod)
    assert np.allclose(r1, np.exp(1j * delta) * r0)


def test_effective_channel_matches_dense_product():
    # recompute the channel with a literal dense matrix product
    sc = sample_scenario(SMALL)
    cb = ModeCodebook(reflection_modes=np.array([[0.3, 1.2]]),
                      phase_modes=np.array([0.0, 2 * np.pi / 3]))
    s, t, k = 1, 2, 0
    got = effective_channel(sc, cb, s, t, k, "ir")

    lam = sc.wavelength
    reflect = sc.ir_reflect[k]
    d_t = np.stack([steering_vector(sc.bs_positions, e, a, lam)
                    for e, a in sc.bs_irs.aod])
    c_t = np.diag(sc.bs_irs.gains)
    c_r = np.diag(reflect.gains)
    elev, azim, phase = cb.mode(s)
    r_mat = tile_response(sc, t, (elev, azim), phase, sc.bs_irs.aoa, reflect.aod)
    a_rx = np.ones(len(reflect.gains), dtype=complex)
    h_herm = a_rx.conj().T @ c_r @ r_mat @ c_t @ d_t
    assert np.allclose(got, h_herm.conj(), rtol=1e-12, atol=0)


def test_effective_channel_zero_gains_annihilate():
    sc = sample_scenario(SMALL)
    sc2 = replace(sc, bs_irs=PathCluster(aod=sc.bs_irs.aod, aoa=sc.bs_irs.aoa,
                                         gains=np.zeros_like(sc.bs_irs.gains),
                                         polarization=sc.bs_irs.polarization))
    cb = ModeCodebook(reflection_modes=np.array([[0.3, 1.2]]),
                      phase_modes=np.array([0.0]))
    assert np.allclose(effective_channel(sc2, cb, 0, 1, 0, "ir"), 0.0)


def test_effective_channel_homogeneous_in_gains():
    sc = sample_scenario(SMALL)
    cb = ModeCodebook(reflection_modes=np.array([[0.3, 1.2]]),
                      phase_modes=np.array([0.0]))
    base = effective_channel(sc, cb, 0, 1, 0, "er")
    sc2 = replace(sc, bs_irs=PathCluster(aod=sc.bs_irs.aod, aoa=sc.bs_irs.aoa,
                                         gains=2.5 * sc.bs_irs.gains,
                                         polarization=sc.bs_irs.polarization))
    assert np.allclose(effective_channel(sc2, cb, 0, 1, 0, "er"), 2.5 * base)


def test_scenario_determinism():
    a = sample_scenario(SMALL)
    b = sample_scenario(SMALL)
    assert np.array_equal(a.bs_irs.gains, b.bs_irs.gains)
    assert np.array_equal(a.bs_irs.aod, b.bs_irs.aod)
    for ca, cb_ in zip(a.ir_direct, b.ir_direct):
        assert np.array_equal(ca.gains, cb_.gains)
    c = sample_scenario(replace(SMALL, seed=12))
    assert not np.allclose(a.bs_irs.gains, c.bs_irs.gains)


def test_shadowing_scales_direct_gains():
    shadowed = sample_scenario(SMALL)
    unshadowed = sample_scenario(replace(SMALL, shadow_direct_db=0.0))
    scale = 10.0 ** (-30.0 / 20.0)
    for cs, cu in zip(shadowed.ir_direct, unshadowed.ir_direct):
        assert np.allclose(cs.gains, scale * cu.gains, rtol=1e-12)
    # reflected links are untouched
    assert np.allclose(shadowed.bs_irs.gains, unshadowed.bs_irs.gains)


def test_virtual_tile_mode_independent():
    sc = sample_scenario(SMALL)
    cb = build_and_truncate_codebook(sc, s_r=2)
    ch = effective_channels(sc, cb)
    for s in range(1, ch.n_modes):
        assert np.array_equal(ch.h[s, 0], ch.h[0, 0])
        assert np.array_equal(ch.g[s, 0], ch.g[0, 0])


def test_codebook_full_size_and_truncation():
    grid = full_reflection_codebook()
    assert grid.shape == (121, 2)
    sc = sample_scenario(SMALL)
    cb = build_and_truncate_codebook(sc, s_r=121)
    assert cb.size_s == 363
    with pytest.raises(ValueError):
        build_and_truncate_codebook(sc, s_r=122)


def test_codebook_s_r_one_is_argmax():
    cfg = ScenarioConfig(n_tx=3, n_ir=1, n_er=1, n_tiles=1, irs_rows=4,
                         irs_cols=2, seed=5)
    sc = sample_scenario(cfg)
    grid = full_reflection_codebook()
    probe = ModeCodebook(reflection_modes=grid, phase_modes=np.array([0.0]))
    scores = []
    for r in range(len(grid)):
        n = max(np.linalg.norm(effective_channel(sc, probe, r, 1, 0, "ir")),
                np.linalg.norm(effective_channel(sc, probe, r, 1, 0, "er")))
        scores.append(n)
    best = int(np.argmax(scores))
    cb = build_and_truncate_codebook(sc, s_r=1)
    assert np.allclose(cb.reflection_modes[0], grid[best])


def test_codebook_selection_order_invariant():
    sc = sample_scenario(SMALL)
    grid = full_reflection_codebook()
    rng = np.random.default_rng(2)
    perm = rng.permutation(len(grid))
    a = build_and_truncate_codebook(sc, s_r=4, reflection_modes=grid)
    b = build_and_truncate_codebook(sc, s_r=4, reflection_modes=grid[perm])
    sa = sorted(map(tuple, np.round(a.reflection_modes, 12)))
    sb = sorted(map(tuple, np.round(b.reflection_modes, 12)))
    assert sa == sb


def test_channel_dump_round_trip():
    sc = sample_scenario(SMALL)
    cb = build_and_truncate_codebook(sc, s_r=1)
    ch = effective_channels(sc, cb)
    buf = io.StringIO()
    dump_channels(ch, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# tilebeam channels")

    # parse back and compare one specific vector
    idx = lines.index("h s=1 t=1 k=0")
    vals = [complex(*map(float, ln.split())) for ln in lines[idx + 1: idx + 1 + ch.n_tx]]
    assert np.allclose(np.array(vals), ch.h[1, 1, 0])
    idx = lines.index("g s=2 t=0 j=0")
    vals = [complex(*map(float, ln.split())) for ln in lines[idx + 1: idx + 1 + ch.n_tx]]
    assert np.allclose(np.array(vals), ch.g[2, 0, 0])


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(n_tiles=5, irs_rows=12, irs_cols=10)  # 5 does not divide 12
    with pytest.raises(ValueError):
        ScenarioConfig(element_spacing=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(n_tx=0)
    with pytest.raises(ValueError):
        ScenarioConfig(user_distance_ranges_m=((0.0, 5.0), (2.0, 5.0)))


def test_effective_channels_shapes_and_noise():
    sc = sample_scenario(SMALL)
    cb = build_and_truncate_codebook(sc, s_r=1)
    ch = effective_channels(sc, cb)
    assert ch.h.shape == (3, 3, 1, 4)
    assert ch.g.shape == (3, 3, 1, 4)
    assert SMALL.noise_w == pytest.approx(1e-12)
