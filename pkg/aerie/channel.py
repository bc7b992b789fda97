"""60 GHz mmWave link budget (IEEE 802.11ad path loss, ITU Gaussian antenna).

All powers are in dBm unless the name says ``_mw``; distances in metres;
angles in degrees.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from aerie.errors import DataError, DegenerateGeometryError, DomainError

# Sensitivities are compared with this slack so that inverting the budget and
# evaluating it again lands on the same MCS row.
SENSITIVITY_TOLERANCE_DB = 1e-9


class ChannelParams(BaseModel):
    """Link-budget constants; defaults follow the 802.11ad feasibility figures."""

    model_config = ConfigDict(extra="forbid")

    carrier_ghz: float = Field(default=60.0, gt=0, description="Carrier frequency in GHz")
    pathloss_exponent: float = Field(default=2.0, gt=0, description="Path-loss exponent n")
    bandwidth_hz: float = Field(default=2.16e9, gt=0, description="Channel bandwidth")
    tx_power_dbm: float = Field(default=24.0, description="Transmit power")
    tx_gain_dbi: float = Field(default=19.0, description="Maximum transmit antenna gain")
    rx_gain_dbi: float = Field(default=3.0, description="Receive antenna gain")
    beamwidth_az_deg: float = Field(default=10.0, gt=0, description="Half-power beamwidth, azimuth")
    beamwidth_el_deg: float = Field(default=10.0, gt=0, description="Half-power beamwidth, elevation")
    noise_psd_dbm_per_hz: float = Field(default=-174.0, description="Thermal noise density kB*Te")
    extra_loss_db: float = Field(default=15.0, ge=0, description="Implementation loss + noise figure")

    @property
    def eirp_dbm(self) -> float:
        return self.tx_power_dbm + self.tx_gain_dbi


DEFAULT_CHANNEL = ChannelParams()


@dataclass(frozen=True)
class McsRow:
    sensitivity_dbm: float
    mcs: str
    rate_mbps: float
    shannon_gbps: float


MCS_TABLE: tuple[McsRow, ...] = (
    McsRow(-78.0, "MCS0", 27.5, 1.43),
    McsRow(-68.0, "MCS1", 385.0, 2.04),
    McsRow(-66.0, "MCS2", 770.0, 2.40),
    McsRow(-65.0, "MCS3", 962.5, 2.81),
    McsRow(-64.0, "MCS4", 1155.0, 3.25),
    McsRow(-63.0, "MCS6", 1540.0, 3.74),
    McsRow(-62.0, "MCS7", 1925.0, 4.25),
    McsRow(-61.0, "MCS8", 2310.0, 5.38),
    McsRow(-59.0, "MCS9", 2502.5, 7.90),
    McsRow(-55.0, "MCS10", 3080.0, 8.57),
    McsRow(-54.0, "MCS11", 3850.0, 9.23),
    McsRow(-53.0, "MCS12", 4620.0, 43.48),
)

MCS_CSV_HEADER = ("sensitivity_dbm", "mcs", "rate_mbps", "shannon_gbps")


# -- unit conversion ----------------------------------------------------------


def dbm_to_mw(value_dbm):
    return np.power(10.0, np.asarray(value_dbm, dtype=float) / 10.0)


def mw_to_dbm(value_mw):
    value_mw = np.asarray(value_mw, dtype=float)
    if np.any(value_mw <= 0):
        raise DomainError("power in mW must be positive to express in dBm")
    return 10.0 * np.log10(value_mw)


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


# -- path loss and antenna ----------------------------------------------------


def path_loss_db(d_m, params: ChannelParams = DEFAULT_CHANNEL):
    """L(d) = 32.5 + 20 log10(f_GHz) + 10 n log10(d)."""
    d = np.asarray(d_m, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError(f"path loss needs a positive distance, got {d_m}")
    loss = 32.5 + 20.0 * math.log10(params.carrier_ghz) + 10.0 * params.pathloss_exponent * np.log10(d)
    return _scalar(loss)


def gain_from_delta(delta: float, g_max: float) -> float:
    if delta < 1.0:
        return g_max - 12.0 * delta**2
    return g_max - 12.0 - 15.0 * math.log(delta)


def pattern_delta(phi_deg: float, theta_deg: float, params: ChannelParams = DEFAULT_CHANNEL) -> float:
    """Normalised angular distance from boresight (0 on boresight)."""
    phi, theta = math.radians(phi_deg), math.radians(theta_deg)
    off_axis = math.degrees(math.acos(max(-1.0, min(1.0, math.cos(phi) * math.cos(theta)))))
    if off_axis == 0.0:
        return 0.0
    psi = math.atan2(math.tan(theta), math.sin(phi))
    shape = math.hypot(math.cos(psi) / params.beamwidth_az_deg, math.sin(psi) / params.beamwidth_el_deg)
    return abs(off_axis * shape)


def antenna_gain_dbi(phi_deg: float, theta_deg: float, params: ChannelParams = DEFAULT_CHANNEL) -> float:
    """ITU Gaussian pattern, azimuth in [-180, 180], elevation in [-90, 90]."""
    if not -180.0 <= phi_deg <= 180.0:
        raise DomainError(f"azimuth {phi_deg} outside [-180, 180]")
    if not -90.0 <= theta_deg <= 90.0:
        raise DomainError(f"elevation {theta_deg} outside [-90, 90]")
    return gain_from_delta(pattern_delta(phi_deg, theta_deg, params), params.tx_gain_dbi)


def rx_power_dbm(
    d_m, params: ChannelParams = DEFAULT_CHANNEL, phi_deg: float = 0.0, theta_deg: float = 0.0
):
    """Received power: Tx gain at the offsets + Tx power - L(d) + Rx gain."""
    gain = params.tx_gain_dbi if phi_deg == theta_deg == 0.0 else antenna_gain_dbi(phi_deg, theta_deg, params)
    return _scalar(gain + params.tx_power_dbm - path_loss_db(d_m, params) + params.rx_gain_dbi)


def noise_floor_dbm(params: ChannelParams = DEFAULT_CHANNEL) -> float:
    return params.noise_psd_dbm_per_hz + 10.0 * math.log10(params.bandwidth_hz) + params.extra_loss_db


def noise_floor_mw(params: ChannelParams = DEFAULT_CHANNEL) -> float:
    return float(dbm_to_mw(noise_floor_dbm(params)))


# -- link geometry and interference -------------------------------------------


def _point3(point: Sequence[float]) -> tuple[float, float, float]:
    x, y, *rest = (float(v) for v in point)
    return (x, y, rest[0] if rest else 0.0)


@dataclass(frozen=True)
class Link:
    """A directional link; the transmitter's boresight points at its receiver."""

    tx: tuple[float, float, float]
    rx: tuple[float, float, float]

    @classmethod
    def between(cls, tx: Sequence[float], rx: Sequence[float]) -> "Link":
        """Build a link from 2-D or 3-D points (missing altitude is 0)."""
        return cls(_point3(tx), _point3(rx))

    @property
    def length_m(self) -> float:
        return float(np.linalg.norm(np.subtract(self.rx, self.tx)))


def _direction(vector: np.ndarray) -> tuple[float, float]:
    azimuth = math.degrees(math.atan2(vector[1], vector[0]))
    elevation = math.degrees(math.atan2(vector[2], math.hypot(vector[0], vector[1])))
    return azimuth, elevation


def angular_offsets(boresight: Sequence[float], towards: Sequence[float]) -> tuple[float, float]:
    """Azimuth and elevation of ``towards`` relative to ``boresight``, in degrees."""
    az_b, el_b = _direction(np.asarray(boresight, dtype=float))
    az_t, el_t = _direction(np.asarray(towards, dtype=float))
    phi = (az_t - az_b + 180.0) % 360.0 - 180.0
    theta = max(-90.0, min(90.0, el_t - el_b))
    return phi, theta


def beam_gains_dbi(boresight: np.ndarray, towards: np.ndarray, params: ChannelParams = DEFAULT_CHANNEL) -> np.ndarray:
    """Vectorised transmit gain towards ``towards`` of beams steered along ``boresight``.

    Both arrays end in an (x, y, z) axis and broadcast against each other. A
    zero vector on either side has no direction and gets the boresight gain.
    """
    b = np.asarray(boresight, dtype=float)
    t = np.asarray(towards, dtype=float)
    az_b, el_b = np.arctan2(b[..., 1], b[..., 0]), np.arctan2(b[..., 2], np.hypot(b[..., 0], b[..., 1]))
    az_t, el_t = np.arctan2(t[..., 1], t[..., 0]), np.arctan2(t[..., 2], np.hypot(t[..., 0], t[..., 1]))
    phi = np.radians((np.degrees(az_t - az_b) + 180.0) % 360.0 - 180.0)
    theta = np.clip(el_t - el_b, -np.pi / 2, np.pi / 2)

    off_axis = np.degrees(np.arccos(np.clip(np.cos(phi) * np.cos(theta), -1.0, 1.0)))
    psi = np.arctan2(np.tan(theta), np.sin(phi))
    shape = np.hypot(np.cos(psi) / params.beamwidth_az_deg, np.sin(psi) / params.beamwidth_el_deg)
    delta = np.where(off_axis == 0.0, 0.0, np.abs(off_axis * shape))

    g_max = params.tx_gain_dbi
    gain = np.where(delta < 1.0, g_max - 12.0 * delta**2, g_max - 12.0 - 15.0 * np.log(np.maximum(delta, 1.0)))
    undefined = ~np.any(b != 0, axis=-1) | ~np.any(t != 0, axis=-1)
    return np.where(undefined, g_max, gain)


def effective_rx_dbm(rx_dbm, interference_mw, params: ChannelParams = DEFAULT_CHANNEL):
    """Received power lowered by the SINR penalty 10 log10(1 + I / N).

    Comparing this against the MCS sensitivities applies the thresholds to
    SINR instead of SNR.
    """
    penalty = 10.0 * np.log10(1.0 + np.asarray(interference_mw, dtype=float) / noise_floor_mw(params))
    return _scalar(np.asarray(rx_dbm, dtype=float) - penalty)


def interference_mw(target: Link, interferers: Iterable[Link], params: ChannelParams = DEFAULT_CHANNEL) -> float:
    """Sum of the power each interfering transmitter puts on ``target``'s receiver.

    The receiver gain is not part of the interference term.
    """
    total = 0.0
    victim = np.asarray(target.rx)
    for link in interferers:
        if link is target:
            continue
        tx = np.asarray(link.tx)
        boresight = np.asarray(link.rx) - tx
        towards = victim - tx
        distance = float(np.linalg.norm(towards))
        if distance == 0.0 or not np.any(boresight):
            raise DegenerateGeometryError(f"interferer at {link.tx} coincides with a receiver")
        phi, theta = angular_offsets(boresight, towards)
        gain = antenna_gain_dbi(phi, theta, params)
        total += float(dbm_to_mw(gain + params.tx_power_dbm - path_loss_db(distance, params)))
    return total


def shannon_capacity_bps(
    rx_power_mw: float, interference_mw: float = 0.0, params: ChannelParams = DEFAULT_CHANNEL
) -> float:
    """BW * log2(1 + P_rx / (noise + interference))."""
    if rx_power_mw < 0:
        raise DomainError(f"received power must be non-negative, got {rx_power_mw} mW")
    denominator = noise_floor_mw(params) + interference_mw
    if not denominator > 0:
        raise DomainError(f"noise plus interference must be positive, got {denominator} mW")
    return params.bandwidth_hz * math.log2(1.0 + rx_power_mw / denominator)


def link_capacity_bps(link: Link, interferers: Iterable[Link] = (), params: ChannelParams = DEFAULT_CHANNEL) -> float:
    """Shannon capacity of a boresight-aligned link under interference."""
    signal = float(dbm_to_mw(rx_power_dbm(link.length_m, params)))
    return shannon_capacity_bps(signal, interference_mw(link, interferers, params), params)


# -- MCS ------------------------------------------------------------------------


def mcs_rate_mbps(rx_dbm: float, table: Sequence[McsRow] = MCS_TABLE) -> float:
    """Rate of the most demanding row whose sensitivity is met; 0 when unserved."""
    rate = 0.0
    for row in table:
        if row.sensitivity_dbm <= rx_dbm + SENSITIVITY_TOLERANCE_DB:
            rate = row.rate_mbps
    return rate


def mcs_rates_mbps(rx_dbm: np.ndarray, table: Sequence[McsRow] = MCS_TABLE) -> np.ndarray:
    """Vectorised ``mcs_rate_mbps``."""
    sensitivities = np.array([row.sensitivity_dbm for row in table])
    rates = np.array([row.rate_mbps for row in table])
    index = np.searchsorted(sensitivities, np.asarray(rx_dbm) + SENSITIVITY_TOLERANCE_DB, side="right") - 1
    return np.where(index >= 0, rates[np.clip(index, 0, None)], 0.0)


def find_mcs(label: str, table: Sequence[McsRow] = MCS_TABLE) -> McsRow:
    for row in table:
        if row.mcs == label:
            return row
    raise DomainError(f"unknown MCS {label!r}")


def coverage_radius_m(
    mcs: Union[str, McsRow] = "MCS0", params: ChannelParams = DEFAULT_CHANNEL, table: Sequence[McsRow] = MCS_TABLE
) -> float:
    """Largest boresight distance at which the row's sensitivity is still met."""
    row = find_mcs(mcs, table) if isinstance(mcs, str) else mcs
    max_loss = params.eirp_dbm + params.rx_gain_dbi - row.sensitivity_dbm
    exponent = (max_loss - 32.5 - 20.0 * math.log10(params.carrier_ghz)) / (10.0 * params.pathloss_exponent)
    return 10.0**exponent


def load_mcs_table(path: Optional[Path] = None) -> tuple[McsRow, ...]:
    """Read a 12-row MCS CSV; without a path the packaged copy is used."""
    if path is None:
        text = resources.files("aerie").joinpath("data/mcs_802_11ad.csv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != MCS_CSV_HEADER:
        raise DataError(f"MCS table header must be {','.join(MCS_CSV_HEADER)}")
    rows = tuple(
        McsRow(float(r["sensitivity_dbm"]), r["mcs"], float(r["rate_mbps"]), float(r["shannon_gbps"]))
        for r in reader
    )
    for previous, current in zip(rows, rows[1:]):
        if not (current.sensitivity_dbm > previous.sensitivity_dbm and current.rate_mbps > previous.rate_mbps):
            raise DataError(f"MCS rows must ascend in sensitivity and rate ({previous.mcs} -> {current.mcs})")
    return rows


def write_mcs_table(rows: Sequence[McsRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(MCS_CSV_HEADER)
    for row in rows:
        writer.writerow([format(row.sensitivity_dbm, "g"), row.mcs, format(row.rate_mbps, "g"), format(row.shannon_gbps, "g")])
