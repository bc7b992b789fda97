"""Multi-UAV mobile access environment.

UAVs start at the map centre and move in the four cardinal directions (or
hover). Ground users associate with the nearest alive UAV that covers them,
receive the MCS rate their link supports at the SINR left by the other
UAVs' beams and turn it into a quality score. The shared reward is the
weighted total quality scaled by how little the UAVs' coverage discs overlap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from aerie import channel as ch
from aerie.channel import ChannelParams
from aerie.errors import DomainError, UsageError
from aerie.stochastics import NoiseConfig, NoiseDraw

logger = logging.getLogger(__name__)

JOULES_PER_WH = 3600.0
MIN_LINK_DISTANCE_M = 1.0
OVERLAP_SAMPLES = 10_000


class Action(IntEnum):
    PLUS_X = 0
    MINUS_X = 1
    PLUS_Y = 2
    MINUS_Y = 3
    HOVER = 4


NUM_ACTIONS = len(Action)
_MOVES = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.0, 0.0]])


class TrafficType(str, Enum):
    VIDEO = "video"
    OTHER = "other"


class UavEnergyParams(BaseModel):
    """Rotary-wing power model constants for one UAV."""

    model_config = ConfigDict(extra="forbid")

    profile_drag: float = Field(default=0.012, gt=0, description="Profile drag coefficient delta")
    air_density: float = Field(default=1.225, gt=0, description="Air density rho (kg/m^3)")
    rotor_solidity: float = Field(default=0.05, gt=0, description="Rotor solidity s")
    rotor_disc_area_m2: float = Field(default=0.503, gt=0, description="Rotor disc area A")
    blade_angular_velocity: float = Field(default=300.0, gt=0, description="Blade angular velocity Omega (rad/s)")
    rotor_radius_m: float = Field(default=0.4, gt=0, description="Rotor radius R")
    induced_correction: float = Field(default=0.1, gt=0, description="Incremental correction to induced power k")
    mass_kg: float = Field(default=1.375, gt=0, description="Aircraft mass incl. battery and propellers")
    gravity: float = Field(default=9.8, gt=0, description="Gravitational acceleration")
    speed_mps: float = Field(default=20.0, gt=0, description="Flight speed v")
    tip_speed_mps: float = Field(default=120.0, gt=0, description="Rotor blade tip speed U_tip")
    mean_induced_velocity: float = Field(default=4.03, gt=0, description="Mean rotor induced velocity v0")
    fuselage_drag_ratio: float = Field(default=0.6, gt=0, description="Fuselage drag ratio d0")
    battery_ah: float = Field(default=5.870, gt=0, description="Battery capacity (Ah)")
    battery_v: float = Field(default=15.2, gt=0, description="Battery voltage (V)")

    @model_validator(mode="after")
    def _check_rotor_geometry(self) -> "UavEnergyParams":
        tip = self.blade_angular_velocity * self.rotor_radius_m
        if abs(tip - self.tip_speed_mps) > 0.01 * self.tip_speed_mps:
            raise ValueError(f"tip_speed_mps {self.tip_speed_mps} disagrees with Omega*R = {tip:.3f}")
        disc = math.pi * self.rotor_radius_m**2
        if abs(disc - self.rotor_disc_area_m2) > 0.01 * self.rotor_disc_area_m2:
            raise ValueError(f"rotor_disc_area_m2 {self.rotor_disc_area_m2} disagrees with pi*R^2 = {disc:.4f}")
        return self

    @property
    def weight_n(self) -> float:
        return self.mass_kg * self.gravity

    @property
    def battery_wh(self) -> float:
        return self.battery_ah * self.battery_v

    @property
    def battery_j(self) -> float:
        return self.battery_wh * JOULES_PER_WH

    @property
    def blade_profile_power_w(self) -> float:
        """P_o = delta/8 * rho * s * A * Omega^3 * R^3."""
        return (
            self.profile_drag
            / 8.0
            * self.air_density
            * self.rotor_solidity
            * self.rotor_disc_area_m2
            * self.blade_angular_velocity**3
            * self.rotor_radius_m**3
        )

    @property
    def induced_power_w(self) -> float:
        """P_i = (1 + k) * W^(3/2) / sqrt(2 * rho * A)."""
        return (1.0 + self.induced_correction) * self.weight_n**1.5 / math.sqrt(
            2.0 * self.air_density * self.rotor_disc_area_m2
        )


class QosParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w_a: float = Field(default=0.01, description="Logistic slope for video traffic")
    w_b: float = Field(default=1024.0, gt=0, description="Logistic midpoint for video traffic (Mbps)")
    quality_w_c: float = Field(default=1.0, gt=0, description="Rate weight for other traffic")
    w_d: float = Field(default=1.0, ge=1.0, description="Offset for other traffic")


class ScenarioConfig(BaseModel):
    """Map, population and episode settings."""

    model_config = ConfigDict(extra="forbid")

    map_size_m: float = Field(default=6000.0, gt=0, description="Side of the square map")
    num_uavs: int = Field(default=4, ge=1, le=16, description="Number of UAVs M")
    num_users: int = Field(default=25, ge=1, description="Number of ground users N")
    observation_range_m: float = Field(default=1000.0, gt=0, description="Observation scope D_th")
    altitude_m: float = Field(default=2500.0, ge=0, description="Flight altitude")
    slant_range: bool = Field(default=False, description="Include altitude in link distances")
    interference: bool = Field(default=True, description="Pick the MCS on SINR including other UAVs' beams")
    delta_t_s: float = Field(default=60.0, gt=0, description="Seconds per decision step")
    episode_steps: int = Field(default=30, ge=1, description="Decision steps per episode T")
    video_fraction: float = Field(default=0.5, ge=0, le=1, description="Share of users requesting video")
    overlap_samples: int = Field(default=OVERLAP_SAMPLES, ge=100, description="Monte Carlo points for overlap")
    overlap_seed: int = Field(default=0, ge=0, description="Seed of the overlap sample points")
    energy: UavEnergyParams = Field(default_factory=UavEnergyParams)
    qos: QosParams = Field(default_factory=QosParams)

    @property
    def observation_dim(self) -> int:
        return self.num_uavs + 3

    @property
    def state_dim(self) -> int:
        return 2 * self.num_uavs * self.num_users

    @property
    def centre(self) -> np.ndarray:
        return np.full(2, self.map_size_m / 2.0)


@dataclass(frozen=True)
class UavState:
    position: np.ndarray
    energy: float

    @property
    def alive(self) -> bool:
        return self.energy > 0


@dataclass(frozen=True)
class ServiceState:
    """Association c (M, N), delivered rate kappa in Mbps and quality q."""

    served: np.ndarray
    kappa_mbps: np.ndarray
    quality: np.ndarray

    def vector(self) -> np.ndarray:
        """(c_mn, q_mn) pairs, UAV-major."""
        return np.stack([self.served.astype(float), self.quality], axis=-1).reshape(-1)

    @property
    def support_rate(self) -> float:
        return float(self.served.sum()) / self.served.shape[1]

    @property
    def qos_total(self) -> float:
        return float(np.sum(self.served * self.quality))


@dataclass(frozen=True)
class WorldState:
    positions: np.ndarray
    energy: np.ndarray
    users: np.ndarray
    video: np.ndarray
    service: ServiceState
    reported_positions: np.ndarray
    reported_service: ServiceState
    tau: float = 1.0
    t: int = 0

    @property
    def alive(self) -> np.ndarray:
        return self.energy > 0

    @property
    def num_uavs(self) -> int:
        return self.positions.shape[0]

    def uav(self, m: int) -> UavState:
        return UavState(self.positions[m].copy(), float(self.energy[m]))

    def traffic(self, n: int) -> TrafficType:
        return TrafficType.VIDEO if self.video[n] else TrafficType.OTHER


@dataclass(frozen=True)
class StepResult:
    world: WorldState
    state: np.ndarray
    observed_state: np.ndarray
    observations: list[np.ndarray] = field(repr=False)
    reward: float
    done: bool


# -- energy ---------------------------------------------------------------------


def hover_power_w(params: UavEnergyParams) -> float:
    return params.blade_profile_power_w + params.induced_power_w


def travel_power_w(speed_mps: float, params: UavEnergyParams) -> float:
    """Blade profile, induced and parasite power at forward speed ``speed_mps``."""
    if speed_mps < 0:
        raise DomainError(f"speed must be non-negative, got {speed_mps}")
    v, v0 = speed_mps, params.mean_induced_velocity
    blade = params.blade_profile_power_w * (1.0 + 3.0 * v**2 / params.tip_speed_mps**2)
    induced = params.induced_power_w * math.sqrt(math.sqrt(1.0 + v**4 / (4.0 * v0**4)) - v**2 / (2.0 * v0**2))
    return blade + induced + parasite_power_w(v, params)


def parasite_power_w(speed_mps: float, params: UavEnergyParams) -> float:
    return (
        0.5
        * params.fuselage_drag_ratio
        * params.air_density
        * params.rotor_solidity
        * params.rotor_disc_area_m2
        * speed_mps**3
    )


def endurance_min(params: UavEnergyParams) -> float:
    """Minutes of hover on a full battery."""
    return params.battery_j / hover_power_w(params) / 60.0


# -- observations and quality -------------------------------------------------------


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.linalg.norm(diff, axis=-1)


def observe(world: WorldState, m: int, observation_range_m: float) -> np.ndarray:
    """[x_m, y_m, d_m0 .. d_m(M-1), e_m] from the positions UAV m can report."""
    if not 0 <= m < world.num_uavs:
        raise UsageError(f"UAV index {m} out of range for {world.num_uavs} UAVs")
    distances = pairwise_distances(world.reported_positions)[m]
    distances = np.where(distances <= observation_range_m, distances, -1.0)
    distances[m] = 0.0
    return np.concatenate([world.reported_positions[m], distances, [world.energy[m]]])


def scale_observation(obs: np.ndarray, scenario: ScenarioConfig) -> np.ndarray:
    """Positions / map size, distances / D_th (-1 kept), energy / battery."""
    obs = np.asarray(obs, dtype=float)
    distances = obs[..., 2:-1]
    scaled = np.empty_like(obs)
    scaled[..., :2] = obs[..., :2] / scenario.map_size_m
    scaled[..., 2:-1] = np.where(distances < 0, -1.0, distances / scenario.observation_range_m)
    scaled[..., -1] = obs[..., -1] / scenario.energy.battery_j
    return scaled


def qos(kappa_mbps, traffic_type: TrafficType | str, qparams: QosParams):
    """Logistic quality for video, log quality for other traffic."""
    kappa = np.asarray(kappa_mbps, dtype=float)
    if np.any(kappa < 0):
        raise DomainError(f"data rate must be non-negative, got {kappa_mbps}")
    if TrafficType(traffic_type) is TrafficType.VIDEO:
        value = 1.0 / (1.0 + np.exp(-qparams.w_a * (kappa - qparams.w_b)))
    else:
        value = np.log(qparams.quality_w_c * kappa + qparams.w_d)
    return float(value) if value.ndim == 0 else value


def _quality_matrix(kappa: np.ndarray, video: np.ndarray, qparams: QosParams) -> np.ndarray:
    return np.where(
        video[None, :], qos(kappa, TrafficType.VIDEO, qparams), qos(kappa, TrafficType.OTHER, qparams)
    )


# -- service -------------------------------------------------------------------------


def coverage_radius_ground_m(scenario: ScenarioConfig, params: ChannelParams) -> float:
    """Ground radius within which MCS0 is reachable."""
    radius = ch.coverage_radius_m("MCS0", params)
    if not scenario.slant_range:
        return radius
    return math.sqrt(max(radius**2 - scenario.altitude_m**2, 0.0))


def link_distances(positions: np.ndarray, users: np.ndarray, scenario: ScenarioConfig) -> np.ndarray:
    """UAV-to-user distances (M, N), floored at 1 m."""
    ground = np.linalg.norm(positions[:, None, :] - users[None, :, :], axis=-1)
    if scenario.slant_range:
        ground = np.hypot(ground, scenario.altitude_m)
    return np.maximum(ground, MIN_LINK_DISTANCE_M)


def _points3(points: np.ndarray, altitude_m: float) -> np.ndarray:
    return np.concatenate([points, np.full((points.shape[0], 1), altitude_m)], axis=1)


def interference_at_users(
    positions: np.ndarray,
    users: np.ndarray,
    serving: np.ndarray,
    covered: np.ndarray,
    scenario: ScenarioConfig,
    params: ChannelParams = ch.DEFAULT_CHANNEL,
) -> np.ndarray:
    """Interference (mW) at each user from the beams of every UAV not serving it.

    A UAV time-shares one beam between its served users, so its contribution
    is the mean over those beams. UAVs serving nobody are silent. The
    receiver gain is not part of the interference term.
    """
    m, n = positions.shape[0], users.shape[0]
    altitude = scenario.altitude_m if scenario.slant_range else 0.0
    tx = _points3(positions, altitude)
    rx = _points3(users, 0.0)

    beams = np.zeros((m, n))
    beams[serving[covered], np.arange(n)[covered]] = 1.0
    per_uav = beams.sum(axis=1)
    if np.count_nonzero(per_uav) <= 1:
        return np.zeros(n)
    weights = beams / np.maximum(per_uav, 1.0)[:, None]

    towards = rx[None, :, :] - tx[:, None, :]
    distance = np.maximum(np.linalg.norm(towards, axis=-1), MIN_LINK_DISTANCE_M)
    # gains[k, j, i]: UAV k beaming at user j, seen from user i
    gains = ch.beam_gains_dbi(towards[:, :, None, :], towards[:, None, :, :], params)
    power = ch.dbm_to_mw(gains + params.tx_power_dbm - ch.path_loss_db(distance, params)[:, None, :])
    from_uav = np.einsum("kj,kji->ki", weights, power)
    from_uav[serving[covered], np.arange(n)[covered]] = 0.0
    return from_uav.sum(axis=0)


def assign_service(
    positions: np.ndarray,
    alive: np.ndarray,
    users: np.ndarray,
    video: np.ndarray,
    scenario: ScenarioConfig,
    params: ChannelParams = ch.DEFAULT_CHANNEL,
) -> ServiceState:
    """Attach each user to the nearest alive UAV in MCS0 range; ties go to the lower index.

    The MCS is picked on SINR: beams of the other serving UAVs lower the
    received power by 10 log10(1 + I / N) before the sensitivity lookup, which
    can leave a user in range unserved.
    """
    m, n = positions.shape[0], users.shape[0]
    distances = link_distances(positions, users, scenario)
    reach = ch.coverage_radius_m("MCS0", params)
    eligible = alive[:, None] & (distances <= reach * (1.0 + 1e-12))
    masked = np.where(eligible, distances, np.inf)
    nearest = np.argmin(masked, axis=0)
    covered = np.isfinite(masked[nearest, np.arange(n)])

    rx_dbm = np.asarray(ch.rx_power_dbm(distances[nearest, np.arange(n)], params), dtype=float)
    if scenario.interference:
        interference = interference_at_users(positions, users, nearest, covered, scenario, params)
        rx_dbm = np.asarray(ch.effective_rx_dbm(rx_dbm, interference, params), dtype=float)

    kappa = np.zeros((m, n))
    rates = ch.mcs_rates_mbps(rx_dbm)
    kappa[nearest[covered], np.arange(n)[covered]] = rates[covered]
    served = (kappa > 0).astype(np.int8)
    quality = np.where(served > 0, _quality_matrix(kappa, video, scenario.qos), 0.0)
    return ServiceState(served, kappa, quality)


@lru_cache(maxsize=8)
def _unit_samples(count: int, seed: int) -> np.ndarray:
    points = np.random.default_rng(seed).random((count, 2))
    points.setflags(write=False)
    return points


def overlap_factor(
    positions: np.ndarray,
    alive: np.ndarray,
    scenario: ScenarioConfig,
    params: ChannelParams = ch.DEFAULT_CHANNEL,
) -> float:
    """1 - area(covered at least twice) / area(covered at least once)."""
    centres = positions[alive]
    radius = coverage_radius_ground_m(scenario, params)
    if centres.shape[0] <= 1 or radius <= 0:
        return 1.0
    lo = centres.min(axis=0) - radius
    hi = centres.max(axis=0) + radius
    points = lo + _unit_samples(scenario.overlap_samples, scenario.overlap_seed) * (hi - lo)
    inside = np.sum(
        np.sum((points[:, None, :] - centres[None, :, :]) ** 2, axis=-1) <= radius**2, axis=1
    )
    union = int(np.count_nonzero(inside >= 1))
    if union == 0:
        return 1.0
    return 1.0 - np.count_nonzero(inside >= 2) / union


def reward(service: ServiceState, energy: np.ndarray, tau: float, weight: float) -> float:
    """w_c * sum_m 1(e_m > 0) * sum_n c_mn * q_mn * tau."""
    per_uav = np.sum(service.served * service.quality, axis=1)
    return float(weight * np.sum(per_uav * (energy > 0)) * tau)


# -- episode lifecycle ------------------------------------------------------------------


class UavEnvironment:
    """Episode runner tying kinematics, energy, service and reward together."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        channel: ChannelParams = ch.DEFAULT_CHANNEL,
        noise: Optional[NoiseConfig] = None,
        reward_weight: float = 0.01,
    ):
        self.scenario = scenario
        self.channel = channel
        self.noise = noise or NoiseConfig()
        self.reward_weight = reward_weight
        self._hover_w = hover_power_w(scenario.energy)
        self._travel_w = travel_power_w(scenario.energy.speed_mps, scenario.energy)

    def _quiet(self) -> list[NoiseDraw]:
        return [NoiseDraw.quiet() for _ in range(self.scenario.num_uavs)]

    def _check_draws(self, draws: Optional[Sequence[NoiseDraw]]) -> list[NoiseDraw]:
        if draws is None:
            return self._quiet()
        if len(draws) != self.scenario.num_uavs:
            raise UsageError(f"expected {self.scenario.num_uavs} noise draws, got {len(draws)}")
        return list(draws)

    def build(
        self,
        positions: np.ndarray,
        energy: np.ndarray,
        users: np.ndarray,
        video: np.ndarray,
        draws: Optional[Sequence[NoiseDraw]] = None,
        t: int = 0,
    ) -> WorldState:
        """World at the given UAV and user layout with service and overlap evaluated."""
        positions = np.asarray(positions, dtype=float)
        energy = np.asarray(energy, dtype=float)
        users = np.asarray(users, dtype=float)
        video = np.asarray(video, dtype=bool)
        draws = self._check_draws(draws)
        alive = energy > 0
        service = assign_service(positions, alive, users, video, self.scenario, self.channel)
        reported = positions + np.stack([d.state_offset for d in draws])
        reported_service = assign_service(reported, alive, users, video, self.scenario, self.channel)
        tau = overlap_factor(positions, alive, self.scenario, self.channel)
        return WorldState(positions, energy, users, video, service, reported, reported_service, tau, t)

    def reset(self, rng: np.random.Generator, draws: Optional[Sequence[NoiseDraw]] = None) -> WorldState:
        """UAVs at the map centre on full batteries, users spread uniformly."""
        sc = self.scenario
        positions = np.tile(sc.centre, (sc.num_uavs, 1))
        energy = np.full(sc.num_uavs, sc.energy.battery_j)
        users = rng.uniform(0.0, sc.map_size_m, size=(sc.num_users, 2))
        video = rng.random(sc.num_users) < sc.video_fraction
        return self.build(positions, energy, users, video, draws)

    def parse_actions(self, joint_action: Sequence[int]) -> np.ndarray:
        actions = np.asarray(joint_action)
        if actions.shape != (self.scenario.num_uavs,) or not np.issubdtype(actions.dtype, np.integer):
            raise UsageError(
                f"joint action must hold {self.scenario.num_uavs} integer actions, got {joint_action!r}"
            )
        if np.any((actions < 0) | (actions >= NUM_ACTIONS)):
            raise UsageError(f"actions must lie in [0, {NUM_ACTIONS}), got {joint_action!r}")
        return actions

    def step(
        self,
        world: WorldState,
        joint_action: Sequence[int],
        draws: Optional[Sequence[NoiseDraw]] = None,
    ) -> StepResult:
        sc = self.scenario
        actions = self.parse_actions(joint_action)
        draws = self._check_draws(draws)
        alive = world.alive
        dt = sc.delta_t_s

        wind = np.stack([d.wind_velocity for d in draws])
        motion = _MOVES[actions] * sc.energy.speed_mps * dt + wind * dt
        positions = np.where(alive[:, None], world.positions + motion, world.positions)
        positions = np.clip(positions, 0.0, sc.map_size_m)

        power = np.where(actions == Action.HOVER, self._hover_w, self._travel_w)
        energy = np.where(alive, np.maximum(world.energy - power * dt, 0.0), 0.0)

        nxt = self.build(positions, energy, world.users, world.video, draws, world.t + 1)
        r = reward(nxt.service, nxt.energy, nxt.tau, self.reward_weight)
        observations = [observe(nxt, m, sc.observation_range_m) for m in range(sc.num_uavs)]
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("t=%d reward=%.5f support=%.3f tau=%.3f", nxt.t, r, nxt.service.support_rate, nxt.tau)
        return StepResult(
            world=nxt,
            state=nxt.service.vector(),
            observed_state=nxt.reported_service.vector(),
            observations=observations,
            reward=r,
            done=nxt.t >= sc.episode_steps,
        )

    def observations(self, world: WorldState) -> list[np.ndarray]:
        return [observe(world, m, self.scenario.observation_range_m) for m in range(self.scenario.num_uavs)]

