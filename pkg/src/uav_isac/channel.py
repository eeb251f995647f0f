"""Line-of-sight air-to-ground channel with a vertical uniform linear array.

Positions are horizontal ``(x, y)`` pairs in metres; the UAV flies at the
fixed altitude ``uav.altitude``.  The angle of departure seen by the vertical
array depends on the ground point only through its horizontal distance to the
UAV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .numerics import is_psd, quadratic_form
from .scenario import Scenario, UavConfig


@dataclass
class BeamformerSet:
    """Information beams ``w_k`` (rows of ``info_beams``, units sqrt(W)) and
    the dedicated sensing covariance ``R_s`` (W)."""

    info_beams: np.ndarray  # (K, M) complex
    sensing_cov: np.ndarray  # (M, M) complex Hermitian

    def __post_init__(self):
        self.info_beams = np.atleast_2d(np.asarray(self.info_beams, dtype=complex))
        self.sensing_cov = np.asarray(self.sensing_cov, dtype=complex)

    @classmethod
    def zeros(cls, K: int, M: int) -> "BeamformerSet":
        return cls(np.zeros((K, M), complex), np.zeros((M, M), complex))

    @property
    def num_users(self) -> int:
        return self.info_beams.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.sensing_cov.shape[0]

    @property
    def info_covariances(self) -> np.ndarray:
        """``W_k = w_k w_k^H`` stacked as (K, M, M)."""
        w = self.info_beams
        return w[:, :, None] * w[:, None, :].conj()

    @property
    def total_covariance(self) -> np.ndarray:
        """``sum_k w_k w_k^H + R_s``."""
        return self.info_beams.T @ self.info_beams.conj() + self.sensing_cov

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.info_beams) ** 2) + np.real(np.trace(self.sensing_cov)))

    def is_valid(self, max_power: float, atol: float = 1e-8) -> bool:
        return is_psd(self.sensing_cov) and self.total_power <= max_power + atol

    def to_json(self) -> dict:
        return {
            "info_beams": [[[z.real, z.imag] for z in w] for w in self.info_beams],
            "sensing_cov": [[[z.real, z.imag] for z in row] for row in self.sensing_cov],
        }

    @classmethod
    def from_json(cls, d: dict) -> "BeamformerSet":
        w = np.array(d["info_beams"], dtype=float)
        R = np.array(d["sensing_cov"], dtype=float)
        return cls(w[..., 0] + 1j * w[..., 1], R[..., 0] + 1j * R[..., 1])


@dataclass
class RateReport:
    per_user_sinr: np.ndarray
    per_user_rate: np.ndarray
    weighted_sum: float

    def to_json(self) -> dict:
        return {"sinr": self.per_user_sinr.tolist(), "rate_bps_hz": self.per_user_rate.tolist(),
                "weighted_sum_rate": self.weighted_sum}


def _xy(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


def horizontal_distance(q, p) -> np.ndarray:
    return np.linalg.norm(_xy(p) - _xy(q), axis=-1)


def slant_distance(q, p, altitude: float) -> np.ndarray:
    r = horizontal_distance(q, p)
    return np.sqrt(r * r + altitude * altitude)


def aod_cosine(q, p, altitude: float):
    """``cos(theta) = H / sqrt(||q - p||^2 + H^2)``; vectorised over ``p``."""
    if altitude <= 0:
        raise ValueError("altitude must be positive")
    return altitude / slant_distance(q, p, altitude)


def steering_from_cosine(cos_theta, M: int, spacing_ratio: float) -> np.ndarray:
    """Steering vector(s) for given AoD cosine(s); shape ``(..., M)``."""
    m = np.arange(M)
    return np.exp(1j * 2 * np.pi * spacing_ratio * np.multiply.outer(cos_theta, m))


def steering_vector(q, p, uav: UavConfig) -> np.ndarray:
    c = aod_cosine(q, p, uav.altitude)
    return steering_from_cosine(c, uav.num_antennas, uav.antenna_spacing_ratio)


def channel_vector(q, u, uav: UavConfig) -> np.ndarray:
    """``h = sqrt(beta / d^2) a(q, u)``; vectorised over a stack of ``u``."""
    d2 = slant_distance(q, u, uav.altitude) ** 2
    return np.sqrt(uav.channel_gain_ref / d2)[..., None] * steering_vector(q, u, uav)


def user_channels(q, scenario: Scenario) -> np.ndarray:
    """(K, M) array of channel vectors towards every user."""
    return channel_vector(q, scenario.user_positions, scenario.uav)


def sinr_and_rates(q, beams: BeamformerSet, scenario: Scenario) -> RateReport:
    Hc = user_channels(q, scenario)
    return rates_from_channels(Hc, beams, scenario.noise_powers, scenario.weights)


def rates_from_channels(Hc, beams: BeamformerSet, noise, weights) -> RateReport:
    # G[k, i] = |h_k^H w_i|^2
    G = np.abs(Hc.conj() @ beams.info_beams.T) ** 2
    signal = np.diag(G).copy()
    sens = np.real(np.einsum("km,mn,kn->k", Hc.conj(), beams.sensing_cov, Hc))
    interference = G.sum(axis=1) - signal + np.maximum(sens, 0.0)
    sinr = signal / (interference + noise)
    rate = np.log2(1.0 + sinr)
    return RateReport(sinr, rate, float(np.dot(weights, rate)))


def beampattern_gain(q, m, beams: BeamformerSet, uav: UavConfig):
    """Transmit beampattern gain ``a^H (sum W_k + R_s) a`` towards ``m`` (W).

    ``m`` may be a single point or an array of points."""
    a = steering_vector(q, m, uav)
    G = beams.total_covariance
    if a.ndim == 1:
        return max(quadratic_form(G, a), 0.0)
    return np.maximum(np.real(np.einsum("jm,mn,jn->j", a.conj(), G, a)), 0.0)


def trace_gain_expansion(X: np.ndarray, dist: float, uav: UavConfig) -> float:
    """Evaluate ``a^H X a`` through magnitudes and phases of the entries of X.

    ``sum_a X[a, a] + 2 sum_{p<q} |X[p, q]| cos(angle(X[p, q]) + 2 pi (d/lambda) (q - p) H / dist)``
    with ``dist`` the slant distance to the ground point.
    """
    if dist < uav.altitude:
        raise ValueError("slant distance cannot be below the altitude")
    X = np.asarray(X)
    M = X.shape[0]
    p, qq = np.triu_indices(M, 1)
    off = X[p, qq]
    phase = np.angle(off) + 2 * np.pi * uav.antenna_spacing_ratio * (qq - p) * uav.altitude / dist
    return float(np.real(np.trace(X)) + 2.0 * np.sum(np.abs(off) * np.cos(phase)))


@dataclass
class BeampatternMap:
    xs: np.ndarray
    ys: np.ndarray
    tx_gain: np.ndarray  # (len(ys), len(xs)) W
    rx_gain: np.ndarray  # tx gain scaled by beta / d^2
    uav_position: tuple
    user_rates: list | None = None

    def rows(self):
        for iy, y in enumerate(self.ys):
            for ix, x in enumerate(self.xs):
                yield float(x), float(y), float(self.tx_gain[iy, ix]), float(self.rx_gain[iy, ix])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "tx_gain_w", "rx_gain_w"])
        for r in self.rows():
            w.writerow([f"{r[0]:.6g}", f"{r[1]:.6g}", f"{r[2]:.10e}", f"{r[3]:.10e}"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"uav_position": list(self.uav_position), "x": self.xs.tolist(), "y": self.ys.tolist(),
                "tx_gain_w": self.tx_gain.tolist(), "rx_gain_w": self.rx_gain.tolist(),
                "user_rates": self.user_rates}


def beampattern_map(q, beams: BeamformerSet, scenario: Scenario, resolution: float,
                    area=None) -> BeampatternMap:
    if resolution <= 0:
        raise ValueError("grid resolution must be positive")
    (x0, x1), (y0, y1) = area or scenario.search_area
    xs = np.arange(x0, x1 + 1e-9, resolution)
    ys = np.arange(y0, y1 + 1e-9, resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tx = beampattern_gain(q, pts, beams, scenario.uav)
    d2 = slant_distance(q, pts, scenario.uav.altitude) ** 2
    rx = tx * scenario.uav.channel_gain_ref / d2
    rates = sinr_and_rates(q, beams, scenario).per_user_rate.tolist()
    return BeampatternMap(xs, ys, tx.reshape(X.shape), rx.reshape(X.shape),
                          tuple(float(v) for v in q), rates)


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
