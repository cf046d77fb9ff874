"""Log-distance RSS synthesis for the simulated BLE channel.

Received power follows ``P(d) = P0 - 10 n log10(d)`` with zero-mean Gaussian
shadowing in dB.  Crosswise (body-blocked) links lose an extra
``body_atten_db`` and use their own fading spread.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np


class Geometry(str, enum.Enum):
    DIRECT = "direct"
    CROSSWISE = "crosswise"


@dataclass(frozen=True)
class ChannelParams:
    ref_rss_dbm: float = -60.0
    path_loss_exp: float = 2.0
    shadow_sigma_db: float = 4.0
    body_atten_db: float = 6.0
    rng_seed: int = 0
    # fast-fading spread on body-blocked links; None -> shadow_sigma_db
    crosswise_sigma_db: float | None = 5.57
    # slow posture shadowing on crosswise links (Gauss-Markov)
    body_sigma_db: float = 2.5
    body_tau_s: float = 300.0
    # receiver RSSI reporting drift: shifts the logged value, not delivery
    rssi_drift_sigma_db: float = 3.0
    rssi_drift_tau_s: float = 10.0
    # packets whose received power falls below this are lost; None disables
    rx_sensitivity_dbm: float | None = -70.0
    max_range_m: float = 10.0

    def __post_init__(self):
        if not self.path_loss_exp > 0:
            raise ValueError("path_loss_exp must be > 0")
        for name in ("shadow_sigma_db", "body_atten_db", "body_sigma_db", "rssi_drift_sigma_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.crosswise_sigma_db is not None and self.crosswise_sigma_db < 0:
            raise ValueError("crosswise_sigma_db must be >= 0")
        if self.body_tau_s <= 0 or self.rssi_drift_tau_s <= 0:
            raise ValueError("correlation times must be > 0")
        if self.max_range_m <= 0:
            raise ValueError("max_range_m must be > 0")

    @classmethod
    def ideal(cls, **overrides) -> "ChannelParams":
        """Plain log-distance channel: no drift, no posture term, no sensitivity floor."""
        base = dict(
            crosswise_sigma_db=None,
            body_sigma_db=0.0,
            rssi_drift_sigma_db=0.0,
            rx_sensitivity_dbm=None,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown channel keys: {sorted(unknown)}")
        return cls(**data)

    def fading_sigma(self, geometry: Geometry) -> float:
        if geometry is Geometry.CROSSWISE and self.crosswise_sigma_db is not None:
            return self.crosswise_sigma_db
        return self.shadow_sigma_db


def _check_distance(distance: float) -> None:
    if not distance > 0 or not math.isfinite(distance):
        raise ValueError(f"distance must be positive and finite, got {distance!r}")


def mean_rss_at(params: ChannelParams, distance: float, geometry: Geometry = Geometry.DIRECT) -> float:
    """Noise-free RSS in dBm at ``distance`` meters."""
    _check_distance(distance)
    rss = params.ref_rss_dbm - 10.0 * params.path_loss_exp * math.log10(distance)
    if Geometry(geometry) is Geometry.CROSSWISE:
        rss -= params.body_atten_db
    return rss


def distance_from_rss(params: ChannelParams, rss_dbm: float, geometry: Geometry = Geometry.DIRECT) -> float:
    """Inverse of :func:`mean_rss_at`."""
    if Geometry(geometry) is Geometry.CROSSWISE:
        rss_dbm += params.body_atten_db
    return 10.0 ** ((params.ref_rss_dbm - rss_dbm) / (10.0 * params.path_loss_exp))


def sample_rss(
    params: ChannelParams,
    distance: float,
    geometry: Geometry,
    rng: np.random.Generator,
) -> float:
    """One shadowed RSS draw: mean RSS plus N(0, sigma) in dB."""
    mean = mean_rss_at(params, distance, geometry)
    sigma = params.fading_sigma(Geometry(geometry))
    if sigma == 0:
        return mean
    return mean + sigma * float(rng.standard_normal())


def moving_average(series, window: int) -> list[float]:
    """Trailing moving average; the first ``window - 1`` outputs average the available prefix."""
    if window < 1:
        raise ValueError("window must be >= 1")
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        return []
    if window == 1:
        return values.tolist()
    csum = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return ((csum[idx] - csum[lo]) / (idx - lo)).tolist()


class GaussMarkov:
    """Stationary first-order Gauss-Markov process sampled at arbitrary times."""

    def __init__(self, sigma: float, tau_ms: float, rng: np.random.Generator):
        self.sigma = sigma
        self.tau_ms = tau_ms
        self.rng = rng
        self.value: float | None = None
        self.t_ms: float | None = None

    def at(self, t_ms: float) -> float:
        if self.sigma == 0:
            return 0.0
        if self.value is None:
            self.value = self.sigma * float(self.rng.standard_normal())
        elif t_ms > self.t_ms:
            a = math.exp(-(t_ms - self.t_ms) / self.tau_ms)
            self.value = a * self.value + self.sigma * math.sqrt(1.0 - a * a) * float(self.rng.standard_normal())
        self.t_ms = t_ms
        return self.value


@dataclass
class Link:
    """Channel state of one directed tx->rx link.

    ``transmit`` returns the RSS the receiver logs, or None when the packet is
    lost (beyond range or under the sensitivity floor).
    """

    params: ChannelParams
    geometry: Geometry
    rng: np.random.Generator
    _posture: GaussMarkov = field(init=False)
    _drift: GaussMarkov = field(init=False)

    def __post_init__(self):
        p = self.params
        posture_sigma = p.body_sigma_db if self.geometry is Geometry.CROSSWISE else 0.0
        self._posture = GaussMarkov(posture_sigma, p.body_tau_s * 1000.0, self.rng)
        self._drift = GaussMarkov(p.rssi_drift_sigma_db, p.rssi_drift_tau_s * 1000.0, self.rng)

    def transmit(self, distance: float, t_ms: float) -> float | None:
        if distance > self.params.max_range_m:
            return None
        power = sample_rss(self.params, distance, self.geometry, self.rng) + self._posture.at(t_ms)
        reported = power + self._drift.at(t_ms)
        sens = self.params.rx_sensitivity_dbm
        if sens is not None and power < sens:
            return None
        return reported
