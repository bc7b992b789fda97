"""Environmental noise: GPS state noise, wind action noise and seeded streams.

GPS offsets follow a generalized Cauchy density and are drawn per axis by
rejection sampling. Wind speed is Weibull distributed (inverse CDF) and its
direction comes from a 12-sector distribution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import gammaln

from aerie.errors import NumericError

logger = logging.getLogger(__name__)

WIND_SECTORS = 12
SECTOR_WIDTH_DEG = 360.0 / WIND_SECTORS
PMF_TOLERANCE = 1e-12
TRUNCATION_SIGMAS = 50.0
MAX_REJECTIONS = 1_000_000

# Offsets smaller than this multiple of the density's scale X are treated as 0.
_LOWER_LOG_CUTOFF = math.log(1e-12)


class CauchyCfg(BaseModel):
    """Generalized Cauchy GPS noise: impulsiveness k, shape v and variance."""

    model_config = ConfigDict(extra="forbid")

    k: float = Field(default=0.20, gt=0, description="Impulsiveness")
    v: float = Field(default=40.0, gt=0, description="Variance shape")
    sigma_z_sq: float = Field(default=0.22, gt=0, description="Noise variance (m^2)")

    @property
    def sigma_z(self) -> float:
        return math.sqrt(self.sigma_z_sq)

    @property
    def x_scale(self) -> float:
        """X = sqrt(sigma_z^2 * Gamma(1/k) / Gamma(3/k))."""
        return math.sqrt(self.sigma_z_sq * math.exp(gammaln(1.0 / self.k) - gammaln(3.0 / self.k)))

    @property
    def log_y(self) -> float:
        """log of the normalising constant Y."""
        k, v = self.k, self.v
        return (
            math.log(k)
            - math.log(v) / k
            + gammaln(v + 1.0 / k)
            - math.log(2.0 * self.x_scale)
            - gammaln(v)
            - gammaln(1.0 / k)
        )

    @property
    def truncation_m(self) -> float:
        return TRUNCATION_SIGMAS * self.sigma_z


def _uniform_pmf() -> list[float]:
    return [1.0 / WIND_SECTORS] * WIND_SECTORS


class WindCfg(BaseModel):
    """Weibull wind speed and the direction the wind blows from."""

    model_config = ConfigDict(extra="forbid")

    shape: float = Field(default=2.29, gt=0, description="Weibull shape")
    scale_mps: float = Field(default=10.97, gt=0, description="Weibull scale (m/s)")
    direction_pmf: list[float] = Field(
        default_factory=_uniform_pmf,
        description="Probability of each 30-degree sector, sector 0 centred on +x",
    )

    @field_validator("direction_pmf")
    @classmethod
    def _check_pmf(cls, value: list[float]) -> list[float]:
        if len(value) != WIND_SECTORS:
            raise ValueError(f"needs {WIND_SECTORS} sector probabilities, got {len(value)}")
        if any(p < 0 or not math.isfinite(p) for p in value):
            raise ValueError("sector probabilities must be finite and non-negative")
        if abs(math.fsum(value) - 1.0) > PMF_TOLERANCE:
            raise ValueError(f"sector probabilities must sum to 1, got {math.fsum(value)!r}")
        return value

    @property
    def mean_speed(self) -> float:
        return self.scale_mps * math.gamma(1.0 + 1.0 / self.shape)

    @property
    def speed_variance(self) -> float:
        g1 = math.gamma(1.0 + 1.0 / self.shape)
        g2 = math.gamma(1.0 + 2.0 / self.shape)
        return self.scale_mps**2 * (g2 - g1**2)


class NoiseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    state_noise: bool = Field(default=False, description="Perturb reported UAV positions")
    action_noise: bool = Field(default=False, description="Add wind drift to UAV motion")
    cauchy: CauchyCfg = Field(default_factory=CauchyCfg)
    wind: WindCfg = Field(default_factory=WindCfg)


@dataclass(frozen=True)
class NoiseDraw:
    """One agent's noise for one step."""

    state_offset: np.ndarray
    wind_velocity: np.ndarray

    def __post_init__(self):
        for name in ("state_offset", "wind_velocity"):
            value = np.asarray(getattr(self, name), dtype=float).reshape(2)
            if not np.all(np.isfinite(value)):
                raise NumericError(f"{name} is not finite: {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def quiet(cls) -> "NoiseDraw":
        return cls(np.zeros(2), np.zeros(2))


# -- generalized Cauchy ---------------------------------------------------------


def cauchy_log_pdf(z, cfg: CauchyCfg):
    z = np.abs(np.asarray(z, dtype=float))
    ratio = np.power(z / cfg.x_scale, cfg.k) / cfg.v
    return cfg.log_y - (cfg.v + 1.0 / cfg.k) * np.log1p(ratio)


def cauchy_pdf(z, cfg: CauchyCfg):
    """p(z) = Y / (1 + (|z|/X)^k / v)^(v + 1/k)."""
    density = np.exp(cauchy_log_pdf(z, cfg))
    return float(density) if np.ndim(density) == 0 else density


def _log_magnitude_density(y: np.ndarray, cfg: CauchyCfg) -> np.ndarray:
    """Density of ln|z| (both signs folded together)."""
    return math.log(2.0) + cauchy_log_pdf(np.exp(y), cfg) + y


def _magnitude_support(cfg: CauchyCfg) -> tuple[float, float]:
    return math.log(cfg.x_scale) + _LOWER_LOG_CUTOFF, math.log(cfg.truncation_m)


def _log_envelope(cfg: CauchyCfg) -> float:
    # The ln|z| density peaks where (|z|/X)^k / v = 1 / (k v).
    lo, hi = _magnitude_support(cfg)
    mode = math.log(cfg.x_scale) + math.log(1.0 / cfg.k) / cfg.k
    mode = min(max(mode, lo), hi)
    return float(_log_magnitude_density(np.array([mode]), cfg)[0])


def rejection_sample(
    rng: np.random.Generator,
    log_density: Callable[[np.ndarray], np.ndarray],
    bounds: tuple[float, float],
    log_envelope: float,
    size: int,
    max_rejections: int = MAX_REJECTIONS,
) -> np.ndarray:
    """Draw ``size`` points from ``log_density`` under a flat envelope on ``bounds``.

    Raises NumericError after ``max_rejections`` consecutive rejected
    candidates.
    """
    lo, hi = bounds
    out = np.empty(size)
    filled = 0
    dry = 0
    while filled < size:
        count = max(2 * (size - filled), 16)
        candidates = rng.uniform(lo, hi, size=count)
        u = rng.random(count)
        accept = np.log(u) <= log_density(candidates) - log_envelope
        accepted = candidates[accept][: size - filled]
        if accepted.size == 0:
            dry += count
            if dry > max_rejections:
                raise NumericError(f"rejection sampler exhausted after {dry} consecutive rejections")
            continue
        dry = 0
        out[filled : filled + accepted.size] = accepted
        filled += accepted.size
    return out


def sample_cauchy(rng: np.random.Generator, cfg: CauchyCfg, size: int) -> np.ndarray:
    """``size`` independent offsets truncated to |z| <= 50 sigma_z."""
    log_mag = rejection_sample(
        rng,
        lambda y: _log_magnitude_density(y, cfg),
        _magnitude_support(cfg),
        _log_envelope(cfg),
        size,
    )
    signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return signs * np.exp(log_mag)


def sample_state_noise(rng: np.random.Generator, cfg: CauchyCfg) -> np.ndarray:
    """Independent (x, y) GPS offset in metres."""
    return sample_cauchy(rng, cfg, 2)


# -- wind -----------------------------------------------------------------------


def weibull_speed(u, cfg: WindCfg):
    """Inverse CDF: scale * (-ln(1 - u))^(1 / shape) for u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    speed = cfg.scale_mps * np.power(-np.log1p(-u), 1.0 / cfg.shape)
    return float(speed) if speed.ndim == 0 else speed


def sector_angle_rad(sector) -> np.ndarray:
    return np.radians(np.asarray(sector) * SECTOR_WIDTH_DEG)


def sample_wind_batch(rng: np.random.Generator, cfg: WindCfg, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and source sectors for ``size`` draws."""
    speeds = weibull_speed(rng.random(size), cfg)
    sectors = rng.choice(WIND_SECTORS, size=size, p=np.asarray(cfg.direction_pmf) / math.fsum(cfg.direction_pmf))
    return np.atleast_1d(speeds), sectors


def sample_wind(rng: np.random.Generator, cfg: WindCfg) -> np.ndarray:
    """Wind velocity (m/s); the wind blows from the drawn sector towards the UAV."""
    speeds, sectors = sample_wind_batch(rng, cfg, 1)
    angle = float(sector_angle_rad(sectors[0]))
    return -speeds[0] * np.array([math.cos(angle), math.sin(angle)])


def draw_noise(rng: np.random.Generator, cfg: NoiseConfig) -> NoiseDraw:
    """One step of noise for one agent; disabled sources are zero and draw nothing."""
    offset = sample_state_noise(rng, cfg.cauchy) if cfg.state_noise else np.zeros(2)
    wind = sample_wind(rng, cfg.wind) if cfg.action_noise else np.zeros(2)
    return NoiseDraw(offset, wind)


# -- random streams ---------------------------------------------------------------


class RandomStreams:
    """Independent generators keyed by (seed, stream id).

    Stream 0 drives the environment, streams 1..M the agents (GPS offsets,
    wind and exploration) and stream M + 1 the trainer's minibatch sampling.
    """

    ENVIRONMENT = 0

    def __init__(self, seed: int, num_agents: int):
        self.seed = int(seed)
        self.num_agents = int(num_agents)
        self._generators = [
            np.random.default_rng(np.random.SeedSequence([self.seed, stream]))
            for stream in range(self.num_agents + 2)
        ]
        logger.debug("seeded %d random streams from seed %d", len(self._generators), self.seed)

    @property
    def environment(self) -> np.random.Generator:
        return self._generators[self.ENVIRONMENT]

    def agent(self, index: int) -> np.random.Generator:
        if not 0 <= index < self.num_agents:
            raise IndexError(f"agent index {index} out of range for {self.num_agents} agents")
        return self._generators[1 + index]

    @property
    def trainer(self) -> np.random.Generator:
        return self._generators[self.num_agents + 1]
