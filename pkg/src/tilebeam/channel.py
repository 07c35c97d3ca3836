"""Scenario sampling and physics-based tiled-IRS channel synthesis.

One scenario drop consists of scatterer clusters for the BS-IRS link,
plus direct and reflected clusters per receiver.  The effective
end-to-end channel of tile t under transmission mode s is the product
of the receiver path response, the tile response matrix and the BS-IRS
path response; the direct link is folded in as a virtual tile t=0 that
ignores the mode index.

The tile response uses a scalar surrogate: mode s applies a linear
phase gradient across the tile's elements that steers specular
reflection toward the mode's design direction (for broadside
incidence), times a global wavefront phase offset, times a constant
per-element gain.  This keeps the dependence on incidence angle,
observation angle and mode identity without requiring an
electromagnetic tile model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, TextIO

import numpy as np

from .units import SPEED_OF_LIGHT, db_to_linear, dbm_to_watts

# per-element aperture gain constant of the tile response surrogate
ELEMENT_GAIN = 1.0

DEFAULT_PHASE_MODES = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)
FULL_REFLECTION_GRID = (11, 11)  # elevation x azimuth grid, 121 directions


@dataclass(frozen=True)
class ScenarioConfig:
    """One random drop of the system, fully determined by ``seed``."""

    n_tx: int = 4
    n_ir: int = 1
    n_er: int = 1
    n_tiles: int = 2
    irs_rows: int = 12
    irs_cols: int = 10
    element_spacing: float = 0.5  # in wavelengths
    carrier_hz: float = 2.5e9
    pathloss_exp: float = 2.0
    bs_irs_distance_m: float = 30.0
    # distance range (min, max) in meters for (IRs, ERs)
    user_distance_ranges_m: tuple = ((2.0, 5.0), (2.0, 5.0))
    shadow_direct_db: float = -30.0
    shadow_reflect_db: float = 0.0
    l_d: int = 4
    l_t: int = 4
    l_r: int = 4
    noise_dbm: float = -90.0
    antenna_gain_dbi: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tx", "n_ir", "n_er", "n_tiles", "irs_rows", "irs_cols",
                     "l_d", "l_t", "l_r"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        n_elements = self.irs_rows * self.irs_cols
        if n_elements % self.n_tiles != 0:
            raise ValueError(
                f"n_tiles={self.n_tiles} does not divide {n_elements} elements")
        if self.irs_rows % self.n_tiles != 0:
            raise ValueError(
                "tiles are horizontal stripes, n_tiles must divide irs_rows")
        if self.element_spacing <= 0.0:
            raise ValueError("element_spacing must be positive")
        if self.bs_irs_distance_m <= 0.0:
            raise ValueError("bs_irs_distance_m must be positive")
        for lo, hi in self.user_distance_ranges_m:
            if lo <= 0.0 or hi < lo:
                raise ValueError("user distance ranges must be positive and ordered")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)


@dataclass
class PathCluster:
    """Scatterer cluster of one link: angles in radians, gains linear."""

    aod: np.ndarray          # (L, 2) elevation, azimuth at the departure side
    aoa: np.ndarray          # (L, 2) elevation, azimuth at the arrival side
    gains: np.ndarray        # (L,) complex channel coefficients
    polarization: np.ndarray  # (L,) sampled but unused by the scalar surrogate

    def __post_init__(self):
        if not (len(self.aod) == len(self.aoa) == len(self.gains)):
            raise ValueError("angle and gain counts must match")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("gains must be finite")


@dataclass
class Scenario:
    config: ScenarioConfig
    bs_positions: np.ndarray       # (N_T, 3)
    irs_positions: np.ndarray      # (M, 3), grid in the x-y plane
    tile_elements: list            # per tile, index array into irs_positions
    bs_irs: PathCluster            # shared first hop (C_T, angles)
    ir_reflect: list               # per IR: PathCluster IRS -> user
    ir_direct: list                # per IR: PathCluster BS -> user
    er_reflect: list
    er_direct: list

    @property
    def wavelength(self) -> float:
        return self.config.wavelength


@dataclass(frozen=True)
class ModeCodebook:
    """Transmission modes: reflection direction crossed with phase offset."""

    reflection_modes: np.ndarray   # (n_refl, 2) elevation, azimuth
    phase_modes: np.ndarray        # (n_phase,) global offsets in [0, 2*pi)
    size_s: int = field(init=False, default=0)

    def __post_init__(self):
        phases = np.asarray(self.phase_modes, dtype=float)
        if np.any(phases < 0.0) or np.any(phases >= 2.0 * np.pi):
            raise ValueError("phase modes must lie in [0, 2*pi)")
        object.__setattr__(self, "size_s",
                           len(self.reflection_modes) * len(self.phase_modes))

    def mode(self, s: int) -> tuple:
        """(elevation, azimuth, phase offset) of mode index s (0-based)."""
        n_phase = len(self.phase_modes)
        r, p = divmod(s, n_phase)
        elev, azim = self.reflection_modes[r]
        return float(elev), float(azim), float(self.phase_modes[p])


def pathloss_power_factor(distance_m: float, wavelength_m: float,
                          exponent: float) -> float:
    """Free-space power attenuation (lambda/4pi)^2 * d^-alpha."""
    return (wavelength_m / (4.0 * np.pi)) ** 2 * distance_m ** (-exponent)


def steering_vector(positions: np.ndarray, elevation: float, azimuth: float,
                    wavelength: float) -> np.ndarray:
    """Unit-modulus array response for a plane wave from (elevation, azimuth).

    Element m has phase (2*pi/lambda) * (position_m . unit direction).
    Elevation is the polar angle from the z axis.
    """
    u = _unit_direction(elevation, azimuth)
    phases = (2.0 * np.pi / wavelength) * positions @ u
    return np.exp(1j * phases)


def _unit_direction(elevation, azimuth) -> np.ndarray:
    se, ce = np.sin(elevation), np.cos(elevation)
    return np.array([se * np.cos(azimuth), se * np.sin(azimuth), ce])


def _sample_angles(rng, n, elev_range) -> np.ndarray:
    elev = rng.uniform(elev_range[0], elev_range[1], size=n)
    azim = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([elev, azim])


ELEV_BS_IRS = (0.0, np.pi / 4.0)
ELEV_USER = (0.0, np.pi)


def _sample_cluster(rng, n_paths, dep_range, arr_range, power_factor) -> PathCluster:
    aod = _sample_angles(rng, n_paths, dep_range)
    aoa = _sample_angles(rng, n_paths, arr_range)
    pol = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
    fading = (rng.standard_normal(n_paths)
              + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
    return PathCluster(aod=aod, aoa=aoa, gains=np.sqrt(power_factor) * fading,
                       polarization=pol)


def sample_scenario(config: ScenarioConfig) -> Scenario:
    """Draw one random drop. Deterministic for a given config and seed."""
    rng = np.random.default_rng(config.seed)
    lam = config.wavelength
    d = config.element_spacing * lam

    # BS uniform linear array along the y axis, centered
    n = config.n_tx
    bs_pos = np.zeros((n, 3))
    bs_pos[:, 1] = (np.arange(n) - (n - 1) / 2.0) * d

    # IRS uniform planar array in the x-y plane, centered; tiles are
    # horizontal stripes of consecutive rows
    rows, cols = config.irs_rows, config.irs_cols
    gx = (np.arange(cols) - (cols - 1) / 2.0) * d
    gy = (np.arange(rows) - (rows - 1) / 2.0) * d
    xx, yy = np.meshgrid(gx, gy)
    irs_pos = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(rows * cols)])
    rows_per_tile = rows // config.n_tiles
    tile_elements = [
        np.arange(t * rows_per_tile * cols, (t + 1) * rows_per_tile * cols)
        for t in range(config.n_tiles)
    ]

    gain_bs = db_to_linear(config.antenna_gain_dbi)
    sh_dir = db_to_linear(config.shadow_direct_db)
    sh_ref = db_to_linear(config.shadow_reflect_db)
    alpha = config.pathloss_exp

    pf_bs_irs = pathloss_power_factor(config.bs_irs_distance_m, lam, alpha)
    bs_irs = _sample_cluster(rng, config.l_t, ELEV_BS_IRS, ELEV_BS_IRS,
                             pf_bs_irs * sh_ref * gain_bs)

    def sample_user(dist_range):
        d_direct = rng.uniform(*dist_range)
        d_reflect = rng.uniform(*dist_range)
        reflect = _sample_cluster(
            rng, config.l_r, ELEV_BS_IRS, ELEV_USER,
            pathloss_power_factor(d_reflect, lam, alpha) * sh_ref)
        direct = _sample_cluster(
            rng, config.l_d, ELEV_BS_IRS, ELEV_USER,
            pathloss_power_factor(d_direct, lam, alpha) * sh_dir * gain_bs)
        return reflect, direct

    ir_reflect, ir_direct, er_reflect, er_direct = [], [], [], []
    for _ in range(config.n_ir):
        r, dd = sample_user(config.user_distance_ranges_m[0])
        ir_reflect.append(r)
        ir_direct.append(dd)
    for _ in range(config.n_er):
        r, dd = sample_user(config.user_distance_ranges_m[1])
        er_reflect.append(r)
        er_direct.append(dd)

    return Scenario(config=config, bs_positions=bs_pos, irs_positions=irs_pos,
                    tile_elements=tile_elements, bs_irs=bs_irs,
                    ir_reflect=ir_reflect, ir_direct=ir_direct,
                    er_reflect=er_reflect, er_direct=er_direct)


def tile_response(scenario: Scenario, tile_index: int,
                  mode_direction: tuple, mode_phase: float,
                  aoa_irs: np.ndarray, aod_irs: np.ndarray) -> np.ndarray:
    """Response matrix of one tile under one mode, shape (L_R, L_T).

    Entry (r, l) sums the element phasors for incidence from BS-side
    path l and observation toward user-side path r, with the mode's
    phase gradient subtracted, scaled by ELEMENT_GAIN and rotated by
    the mode's wavefront phase offset.
    """
    if not 1 <= tile_index <= scenario.config.n_tiles:
        raise ValueError(f"tile_index {tile_index} out of range")
    pos = scenario.irs_positions[scenario.tile_elements[tile_index - 1]]
    k = 2.0 * np.pi / scenario.wavelength

    u_in = np.stack([_unit_direction(e, a) for e, a in aoa_irs])    # (L_T, 3)
    u_out = np.stack([_unit_direction(e, a) for e, a in aod_irs])   # (L_R, 3)
    u_mode = _unit_direction(*mode_direction)

    e_in = np.exp(1j * k * pos @ u_in.T)          # (M_t, L_T)
    e_out = np.exp(1j * k * pos @ u_out.T)        # (M_t, L_R)
    e_mode = np.exp(-1j * k * pos @ u_mode)       # (M_t,)
    af = e_out.T @ (e_mode[:, None] * e_in)       # (L_R, L_T)
    return ELEMENT_GAIN * np.exp(1j * mode_phase) * af


def effective_channel(scenario: Scenario, codebook: ModeCodebook,
                      s: int, t: int, user: int, link_kind: str) -> np.ndarray:
    """Effective BS-to-receiver channel h (or g) for mode s and tile t.

    ``t`` ranges over 0..T with t=0 the direct link (mode ignored).
    ``link_kind`` is "ir" or "er"; ``s``, ``user`` are 0-based.
    """
    if link_kind == "ir":
        reflect, direct = scenario.ir_reflect[user], scenario.ir_direct[user]
    elif link_kind == "er":
        reflect, direct = scenario.er_reflect[user], scenario.er_direct[user]
    else:
        raise ValueError(f"unknown link_kind {link_kind!r}")

    lam = scenario.wavelength
    if t == 0:
        # h^H = a_D^H C_D D_D
        cluster = direct
        d_rows = np.stack([
            steering_vector(scenario.bs_positions, e, a, lam)
            for e, a in cluster.aod])                       # (L_D, N_T)
        a_rx = np.ones(len(cluster.gains), dtype=complex)   # single-antenna rx
        h_herm = (a_rx.conj() * cluster.gains) @ d_rows
        return h_herm.conj()

    bs_irs = scenario.bs_irs
    d_rows = np.stack([
        steering_vector(scenario.bs_positions, e, a, lam)
        for e, a in bs_irs.aod])                            # (L_T, N_T)
    elev, azim, phase = codebook.mode(s)
    r_mat = tile_response(scenario, t, (elev, azim), phase,
                          aoa_irs=bs_irs.aoa, aod_irs=reflect.aod)
    a_rx = np.ones(len(reflect.gains), dtype=complex)
    # h^H = a^H C_R R C_T D_T  with diagonal C_R, C_T
    h_herm = (a_rx.conj() * reflect.gains) @ r_mat @ (bs_irs.gains[:, None] * d_rows)
    return h_herm.conj()


def full_reflection_codebook(grid=FULL_REFLECTION_GRID) -> np.ndarray:
    """Uniform (elevation x azimuth) grid of reflection directions."""
    n_elev, n_azim = grid
    elev = np.linspace(0.0, np.pi / 4.0, n_elev)
    azim = np.linspace(0.0, 2.0 * np.pi, n_azim, endpoint=False)
    ee, aa = np.meshgrid(elev, azim, indexing="ij")
    return np.column_stack([ee.ravel(), aa.ravel()])


def build_and_truncate_codebook(scenario: Scenario, s_r: int,
                                phase_modes: Sequence[float] = DEFAULT_PHASE_MODES,
                                reflection_modes: np.ndarray | None = None
                                ) -> ModeCodebook:
    """Keep the s_r reflection modes with the strongest channels.

    The ranking score of a reflection direction is the largest channel
    2-norm over all receivers (IRs and ERs) and all tiles; the phase
    offset does not affect norms.  Ties break toward the lower mode
    index.  The kept directions are crossed with the phase modes, so
    the final codebook has s_r * len(phase_modes) modes.
    """
    if reflection_modes is None:
        reflection_modes = full_reflection_codebook()
    n_refl = len(reflection_modes)
    if s_r > n_refl:
        raise ValueError(f"s_r={s_r} exceeds reflection codebook size {n_refl}")

    probe = ModeCodebook(reflection_modes=reflection_modes, phase_modes=np.array([0.0]))
    cfg = scenario.config
    scores = np.zeros(n_refl)
    for r in range(n_refl):
        best = 0.0
        for t in range(1, cfg.n_tiles + 1):
            for k in range(cfg.n_ir):
                best = max(best, float(np.linalg.norm(
                    effective_channel(scenario, probe, r, t, k, "ir"))))
            for j in range(cfg.n_er):
                best = max(best, float(np.linalg.norm(
                    effective_channel(scenario, probe, r, t, j, "er"))))
        scores[r] = best

    # stable top-k: sort by (-score, index)
    order = np.lexsort((np.arange(n_refl), -scores))
    kept = np.sort(order[:s_r])
    return ModeCodebook(reflection_modes=reflection_modes[kept],
                        phase_modes=np.asarray(phase_modes, dtype=float))


@dataclass
class EffectiveChannels:
    """All effective channels: h (S, T+1, K, N_T) and g (S, T+1, J, N_T).

    Index t=0 is the direct link, identical across modes.
    """

    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.h.view(float)))
                and np.all(np.isfinite(self.g.view(float)))):
            raise ValueError("channels must be finite")

    @property
    def n_modes(self) -> int:
        return self.h.shape[0]

    @property
    def n_tiles(self) -> int:
        return self.h.shape[1] - 1

    @property
    def n_ir(self) -> int:
        return self.h.shape[2]

    @property
    def n_er(self) -> int:
        return self.g.shape[2]

    @property
    def n_tx(self) -> int:
        return self.h.shape[3]


def effective_channels(scenario: Scenario, codebook: ModeCodebook) -> EffectiveChannels:
    """Evaluate every effective channel of the drop under the codebook."""
    cfg = scenario.config
    s_total, t_total = codebook.size_s, cfg.n_tiles
    h = np.zeros((s_total, t_total + 1, cfg.n_ir, cfg.n_tx), dtype=complex)
    g = np.zeros((s_total, t_total + 1, cfg.n_er, cfg.n_tx), dtype=complex)
    for k in range(cfg.n_ir):
        direct = effective_channel(scenario, codebook, 0, 0, k, "ir")
        h[:, 0, k, :] = direct
        for s in range(s_total):
            for t in range(1, t_total + 1):
                h[s, t, k, :] = effective_channel(scenario, codebook, s, t, k, "ir")
    for j in range(cfg.n_er):
        direct = effective_channel(scenario, codebook, 0, 0, j, "er")
        g[:, 0, j, :] = direct
        for s in range(s_total):
            for t in range(1, t_total + 1):
                g[s, t, j, :] = effective_channel(scenario, codebook, s, t, j, "er")
    return EffectiveChannels(h=h, g=g)


def dump_channels(channels: EffectiveChannels, fh: TextIO) -> None:
    """Plain-text channel dump: a header per vector, then 're im' lines."""
    fh.write(f"# tilebeam channels n_tx={channels.n_tx} "
             f"S={channels.n_modes} T={channels.n_tiles} "
             f"K={channels.n_ir} J={channels.n_er}\n")

    def write_block(tag, arr, user_label):
        s_total, t_plus1, n_users, _ = arr.shape
        for s in range(s_total):
            for t in range(t_plus1):
                for u in range(n_users):
                    fh.write(f"{tag} s={s} t={t} {user_label}={u}\n")
                    for z in arr[s, t, u]:
                        fh.write(f"{float(z.real)!r} {float(z.imag)!r}\n")

    write_block("h", channels.h, "k")
    write_block("g", channels.g, "j")


def scale_cluster_gains(scenario: Scenario, factor: complex) -> Scenario:
    """Copy of the scenario with every reflected-link gain scaled."""
    def scale(c: PathCluster) -> PathCluster:
        return PathCluster(aod=c.aod, aoa=c.aoa, gains=factor * c.gains,
                           polarization=c.polarization)
    return replace(scenario,
                   bs_irs=scale(scenario.bs_irs),
                   ir_reflect=[scale(c) for c in scenario.ir_reflect],
                   er_reflect=[scale(c) for c in scenario.er_reflect])
