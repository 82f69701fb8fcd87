"""LTE downlink link budget and SINR evaluation.

Macro-cell path loss (128.1 + 37.6 log10 R_km at 2 GHz), the parabolic
3-sector antenna pattern, thermal noise from bandwidth and noise figure,
max-power association and a Shannon-with-cap throughput map. All heavy
paths are vectorized over users x sites; `LinkGainTable` precomputes the
per-sector received powers so an optimizer can score configurations with
plain array gathers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import los_mask

SECTOR_AZIMUTHS_DEG = (0.0, 120.0, 240.0)

# Shannon mapping limits: below the floor a user is in outage, above the
# cap extra SINR buys no spectral efficiency.
SINR_FLOOR_DB = -10.0
SINR_CAP_DB = 22.0

_PATHLOSS_CLAMP_M = 10.0


class RadioError(Exception):
    pass


class NonPositiveDistance(RadioError):
    pass


class NoSectors(RadioError):
    pass


@dataclass
class RadioParams:
    carrier_ghz: float = 2.0
    hpbw_deg: float = 65.0
    front_back_db: float = 20.0
    nlos_penalty_db: float = 20.0
    noise_figure_db: float = 9.0
    bandwidth_mhz: float = 10.0
    tx_power_dbm: float = 43.0
    min_coupling_loss_db: float = 70.0
    antenna_gain_dbi: float = 15.0
    shadowing_sigma_db: float = 0.0
    shadowing_seed: int = 0

    def __post_init__(self):
        for name in ("carrier_ghz", "hpbw_deg", "front_back_db", "noise_figure_db",
                     "bandwidth_mhz", "min_coupling_loss_db"):
            if getattr(self, name) <= 0:
                raise RadioError(f"{name} must be positive")
        if self.nlos_penalty_db < 0 or self.shadowing_sigma_db < 0:
            raise RadioError("penalties must be non-negative")
        if not math.isfinite(self.tx_power_dbm):
            raise RadioError("tx_power_dbm must be finite")

    @classmethod
    def from_json(cls, path) -> "RadioParams":
        with open(path) as f:
            raw = json.load(f)
        fields = {k: raw[k] for k in cls.__dataclass_fields__ if k in raw}
        return cls(**fields)

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")


@dataclass
class BsSector:
    position: np.ndarray  # (3,) meters
    azimuth_deg: float  # 0 = +x axis, counterclockwise
    tx_power_dbm: float
    antenna_gain_dbi: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.azimuth_deg = float(self.azimuth_deg) % 360.0


@dataclass
class LinkBudget:
    pathloss_db: float
    antenna_gain_db: float  # peak gain minus pattern attenuation
    los: bool
    rx_power_dbm: float


def build_sectors(position, params: RadioParams) -> list[BsSector]:
    """The standard three-sector head on one mast position."""
    return [
        BsSector(position, az, params.tx_power_dbm, params.antenna_gain_dbi)
        for az in SECTOR_AZIMUTHS_DEG
    ]


def sectors_for_sites(positions, params: RadioParams) -> list[BsSector]:
    out = []
    for p in positions:
        out.extend(build_sectors(p, params))
    return out


def pathloss_db(distance_m, params: RadioParams):
    """3GPP macro path loss; distances under 10 m clamp to 10 m.

    At 2 GHz this is 128.1 + 37.6 log10(R_km); other carriers shift the
    intercept by 21 log10(f/2).
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDistance("distance must be > 0 m")
    d = np.maximum(d, _PATHLOSS_CLAMP_M)
    pl = 128.1 + 37.6 * np.log10(d / 1000.0) + 21.0 * np.log10(params.carrier_ghz / 2.0)
    return float(pl) if np.isscalar(distance_m) else pl


def antenna_attenuation_db(angle_off_boresight_deg, params: RadioParams):
    """Horizontal pattern: min(12 (theta/HPBW)^2, front-to-back ratio)."""
    theta = np.asarray(angle_off_boresight_deg, dtype=float)
    theta = (theta + 180.0) % 360.0 - 180.0
    att = np.minimum(12.0 * (theta / params.hpbw_deg) ** 2, params.front_back_db)
    return float(att) if np.isscalar(angle_off_boresight_deg) else att


def thermal_noise_dbm(params: RadioParams) -> float:
    bw_hz = params.bandwidth_mhz * 1e6
    return -174.0 + 10.0 * math.log10(bw_hz) + params.noise_figure_db


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(np.asarray(lin, dtype=float))


def link_budget(user, sector: BsSector, scene, params: RadioParams,
                use_blockages: bool) -> LinkBudget:
    """Full budget for one user-sector pair (the scalar reference path)."""
    from .geometry import Segment3, los_blocked

    upos = np.asarray(user.position, dtype=float)
    spos = sector.position
    delta = upos - spos
    d3d = float(np.linalg.norm(delta))
    pl = pathloss_db(d3d, params)
    bearing = math.degrees(math.atan2(delta[1], delta[0]))
    att = antenna_attenuation_db(bearing - sector.azimuth_deg, params)
    if use_blockages and scene is not None and scene.buildings:
        los = not los_blocked(Segment3(spos, upos), scene.buildings)
    else:
        los = True
    gain = sector.antenna_gain_dbi - att
    rx = sector.tx_power_dbm + gain - pl
    if not los:
        rx -= params.nlos_penalty_db
    rx = min(rx, sector.tx_power_dbm - params.min_coupling_loss_db)
    return LinkBudget(pl, gain, los, rx)


def _rx_matrix(user_pos: np.ndarray, site_pos: np.ndarray, los: np.ndarray,
               params: RadioParams) -> np.ndarray:
    """Received power in dBm, shape [n_users, n_sites, 3 sectors]."""
    delta = user_pos[:, None, :] - site_pos[None, :, :]
    d3d = np.sqrt((delta ** 2).sum(axis=2))
    pl = pathloss_db(np.maximum(d3d, 1e-12), params)
    bearing = np.degrees(np.arctan2(delta[:, :, 1], delta[:, :, 0]))
    rx = np.empty(d3d.shape + (3,))
    base = params.tx_power_dbm + params.antenna_gain_dbi - pl - np.where(
        los, 0.0, params.nlos_penalty_db
    )
    for s, az in enumerate(SECTOR_AZIMUTHS_DEG):
        rx[:, :, s] = base - antenna_attenuation_db(bearing - az, params)
    np.minimum(rx, params.tx_power_dbm - params.min_coupling_loss_db, out=rx)
    return rx


def shadowing_matrix(n_users: int, n_sites: int, params: RadioParams) -> np.ndarray:
    """Per-link log-normal shadowing in dB, identical for a site's sectors."""
    if params.shadowing_sigma_db == 0.0:
        return np.zeros((n_users, n_sites))
    rng = np.random.default_rng(params.shadowing_seed)
    return rng.normal(0.0, params.shadowing_sigma_db, size=(n_users, n_sites))


@dataclass
class LinkGainTable:
    """Precomputed rx power for every user against every mountable site.

    Sites 0..n_candidates-1 are the scene's candidate sites in id order;
    the scene's fixed BS follow. Scoring a configuration is then a column
    gather plus the SINR arithmetic, with no geometry in the loop.
    """

    rx_dbm: np.ndarray  # [n_users, n_sites, 3]
    priority: np.ndarray  # [n_users] bool
    n_candidates: int
    n_fixed: int
    noise_dbm: float

    def columns_for(self, site_ids) -> np.ndarray:
        cols = list(site_ids) + list(range(self.n_candidates, self.n_candidates + self.n_fixed))
        return np.asarray(cols, dtype=int)

    def rx_for(self, site_ids) -> np.ndarray:
        """Sector rx matrix [n_users, 3*(len(site_ids)+n_fixed)] in dBm."""
        cols = self.columns_for(site_ids)
        n = self.rx_dbm.shape[0]
        return self.rx_dbm[:, cols, :].reshape(n, -1)


def build_link_table(scene, params: RadioParams, use_blockages: bool,
                     threads: int = 1) -> LinkGainTable:
    user_pos = scene.user_positions()
    site_pos = scene.candidate_positions()
    if scene.fixed_bs:
        site_pos = np.vstack([site_pos, np.array(scene.fixed_bs)])
    prisms = scene.buildings if use_blockages else []
    los = _chunked_los(user_pos, site_pos, prisms, threads)
    rx = _rx_matrix(user_pos, site_pos, los, params)
    if params.shadowing_sigma_db > 0.0:
        # Optional seeded shadowing lives on the table path only; the
        # scalar link_budget stays the deterministic reference.
        rx = rx + shadowing_matrix(len(user_pos), len(site_pos), params)[:, :, None]
        np.minimum(rx, params.tx_power_dbm - params.min_coupling_loss_db, out=rx)
    return LinkGainTable(
        rx_dbm=rx,
        priority=scene.priority_mask(),
        n_candidates=len(scene.candidates),
        n_fixed=len(scene.fixed_bs),
        noise_dbm=thermal_noise_dbm(params),
    )


def _chunked_los(user_pos, site_pos, prisms, threads: int) -> np.ndarray:
    """True where the user-site path is clear."""
    if not prisms:
        return np.ones((len(user_pos), len(site_pos)), dtype=bool)
    if threads <= 1 or len(user_pos) < 2 * threads:
        return los_mask(user_pos, site_pos, prisms)
    chunks = np.array_split(np.arange(len(user_pos)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda idx: los_mask(user_pos[idx], site_pos, prisms), chunks))
    return np.vstack(parts)


def sinr_from_rx(rx_dbm: np.ndarray, noise_dbm: float):
    """Association and SINR from a per-user sector rx matrix.

    Serving sector is the max-power column, first index on ties. Returns
    (serving index per user, SINR in dB per user).
    """
    if rx_dbm.ndim != 2 or rx_dbm.shape[1] == 0:
        raise NoSectors("need at least one sector")
    lin = db_to_linear(rx_dbm)
    serving = np.argmax(rx_dbm, axis=1)
    rows = np.arange(rx_dbm.shape[0])
    signal = lin[rows, serving]
    interference = lin.sum(axis=1) - signal
    noise = db_to_linear(noise_dbm)
    return serving, linear_to_db(signal / (noise + interference))


def attach_and_evaluate(users, sectors: list[BsSector], scene, params: RadioParams,
                        use_blockages: bool, threads: int = 1):
    """Per-user (serving sector index, SINR dB) under max-power association.

    LoS is resolved once per distinct mast position, not per sector.
    """
    if not sectors:
        raise NoSectors("sector list is empty")
    user_pos = np.array([np.asarray(u.position, dtype=float) for u in users])
    sector_pos = np.array([s.position for s in sectors])
    uniq_pos, inverse = np.unique(sector_pos, axis=0, return_inverse=True)
    prisms = scene.buildings if (use_blockages and scene is not None) else []
    los_sites = _chunked_los(user_pos, uniq_pos, prisms, threads)
    los = los_sites[:, inverse]

    delta = user_pos[:, None, :] - sector_pos[None, :, :]
    d3d = np.sqrt((delta ** 2).sum(axis=2))
    pl = pathloss_db(np.maximum(d3d, 1e-12), params)
    bearing = np.degrees(np.arctan2(delta[:, :, 1], delta[:, :, 0]))
    azimuths = np.array([s.azimuth_deg for s in sectors])
    att = antenna_attenuation_db(bearing - azimuths[None, :], params)
    tx = np.array([s.tx_power_dbm for s in sectors])
    gain = np.array([s.antenna_gain_dbi for s in sectors])
    # same operation order as _rx_matrix so both routes agree bit for bit
    base = tx[None, :] + gain[None, :] - pl - np.where(los, 0.0, params.nlos_penalty_db)
    rx = base - att
    rx = np.minimum(rx, (tx - params.min_coupling_loss_db)[None, :])
    return sinr_from_rx(rx, thermal_noise_dbm(params))


def sinr_db(user, serving: int, all_sectors: list[BsSector], scene,
            params: RadioParams, use_blockages: bool) -> float:
    """SINR for one user with an imposed serving sector."""
    if not (0 <= serving < len(all_sectors)):
        raise NoSectors(f"serving index {serving} outside sector list")
    budgets = [link_budget(user, s, scene, params, use_blockages) for s in all_sectors]
    lin = db_to_linear(np.array([b.rx_power_dbm for b in budgets]))
    signal = lin[serving]
    interference = lin.sum() - signal
    noise = db_to_linear(thermal_noise_dbm(params))
    return float(linear_to_db(signal / (noise + interference)))


def throughput_mbps(sinr_db_value, n_attached, params: RadioParams):
    """Equal-share Shannon rate with an outage floor and efficiency cap.

    `n_attached` counts the users sharing the serving sector; scalars and
    arrays broadcast against `sinr_db_value`.
    """
    n = np.asarray(n_attached)
    if np.any(n < 1):
        raise RadioError("n_attached must be >= 1")
    s = np.asarray(sinr_db_value, dtype=float)
    capped = db_to_linear(np.minimum(s, SINR_CAP_DB))
    rate = (params.bandwidth_mhz / n) * np.log2(1.0 + capped)
    rate = np.where(s < SINR_FLOOR_DB, 0.0, rate)
    return float(rate) if np.isscalar(sinr_db_value) else rate
