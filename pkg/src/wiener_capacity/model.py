"""Discrete-time AWGN channel with Wiener phase noise.

    y_k = x_k exp(j phi_k) + w_k,    phi_k = phi_{k-1} + Delta_k

with Delta_k ~ N(0, sigma_delta_sq) and w_k ~ CN(0, 2 sigma_w_sq).  The
channel is simulated in amplitude/phase form, keeping the in-phase and
quadrature noise components relative to the transmitted symbol, so that
both the polar and the Cartesian view of each sample can be reconstructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

TWO_PI = 2.0 * np.pi


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *keys)``.

    Distinct key tuples give independent streams, which is how chunked or
    parallel work is seeded deterministically.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ChannelParams:
    """Physical scenario.

    sigma_w_sq is the per-component noise variance (total complex noise
    variance is ``2 * sigma_w_sq``), sigma_delta_sq the phase-innovation
    variance in rad^2 and es the maximum average symbol power.
    """

    sigma_w_sq: float
    sigma_delta_sq: float
    es: float = 1.0

    def __post_init__(self):
        for name in ("sigma_w_sq", "sigma_delta_sq", "es"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInput(f"{name} must be finite, got {v}")
        if self.sigma_w_sq <= 0:
            raise InvalidInput("sigma_w_sq must be > 0")
        if self.sigma_delta_sq < 0:
            raise InvalidInput("sigma_delta_sq must be >= 0")
        if self.es <= 0:
            raise InvalidInput("es must be > 0")

    @classmethod
    def from_snr_db(cls, snr_db: float, sigma_delta_sq: float, es: float = 1.0):
        """Fix es and pick sigma_w_sq so that es / (2 sigma_w_sq) hits snr_db."""
        return cls(es / (2.0 * 10.0 ** (snr_db / 10.0)), sigma_delta_sq, es)

    @classmethod
    def from_linewidth(cls, f_3db: float, t_s: float, sigma_w_sq: float,
                       es: float = 1.0):
        """Innovation variance from the oscillator 3-dB linewidth and the
        symbol interval: sigma_delta_sq = 4 pi f_3db T_s."""
        return cls(sigma_w_sq, 4.0 * np.pi * f_3db * t_s, es)

    def snr(self) -> float:
        return self.es / (2.0 * self.sigma_w_sq)

    @property
    def sigma_w(self) -> float:
        return math.sqrt(self.sigma_w_sq)

    @property
    def sigma_delta(self) -> float:
        return math.sqrt(self.sigma_delta_sq)


def snr_db(params: ChannelParams) -> float:
    return 10.0 * math.log10(params.es / (2.0 * params.sigma_w_sq))


@dataclass(frozen=True)
class SymbolBlock:
    """Transmitted symbols x_k = R_k exp(j Theta_k)."""

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=float).ravel()
        ph = np.mod(np.asarray(self.phases, dtype=float).ravel(), TWO_PI)
        if amp.shape != ph.shape:
            raise InvalidInput("amplitudes and phases must have equal length")
        if np.any(amp < 0) or not np.all(np.isfinite(amp)):
            raise InvalidInput("amplitudes must be finite and nonnegative")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def from_complex(cls, x) -> SymbolBlock:
        x = np.asarray(x, dtype=complex)
        return cls(np.abs(x), np.angle(x))

    def __len__(self):
        return self.amplitudes.size

    @property
    def x(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)


@dataclass(frozen=True)
class ReceivedBlock:
    """Channel output with the latent quantities that produced it.

    ``phase_path`` is the unwrapped Wiener path phi_k; ``inphase_noise`` and
    ``quadrature_noise`` are the noise components parallel and orthogonal to
    the transmitted symbol.
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    phase_path: np.ndarray
    inphase_noise: np.ndarray
    quadrature_noise: np.ndarray

    def __len__(self):
        return self.amplitudes.size

    @property
    def y(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)

    @property
    def increments(self) -> np.ndarray:
        """Delta_k for k >= 2, recovered from the phase path."""
        return np.diff(self.phase_path)


def simulate(params: ChannelParams, block: SymbolBlock, seed: int,
             phi0: float | None = None) -> ReceivedBlock:
    """Pass ``block`` through the channel.

    ``phi0`` is the phase before the first increment; when omitted it is
    drawn uniformly on [0, 2 pi) so the phase process is stationary from the
    first sample on.
    """
    n = len(block)
    if n < 1:
        raise InvalidInput("input block is empty")
    rng = make_rng(seed, 0)
    if phi0 is None:
        phi0 = rng.uniform(0.0, TWO_PI)
    elif not math.isfinite(phi0):
        raise InvalidInput("phi0 must be finite")
    z = rng.standard_normal((3, n))
    delta = params.sigma_delta * z[0]
    w_par = params.sigma_w * z[1]
    w_perp = params.sigma_w * z[2]

    phi = phi0 + np.cumsum(delta)
    R = block.amplitudes
    r = np.hypot(R + w_par, w_perp)
    # quadrant-aware angle of R + w_par + j w_perp
    noise_phase = np.arctan2(w_perp, R + w_par)
    theta = np.mod(block.phases + noise_phase + phi, TWO_PI)
    return ReceivedBlock(r, theta, phi, w_par, w_perp)
