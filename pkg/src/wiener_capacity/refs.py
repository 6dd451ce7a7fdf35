"""Reference capacity curves: AWGN without phase noise, and the high-SNR
asymptote of the Wiener phase-noise channel (Lapidoth)."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NoCrossover
from .model import ChannelParams


def c_awgn(params: ChannelParams) -> float:
    return math.log2(1.0 + params.es / (2.0 * params.sigma_w_sq))


def c_lapidoth(params: ChannelParams) -> float:
    """(1/2) log2(1 + es/(4 sigma_w^2)) - (1/2) log2(e sigma_delta^2 / (2 pi))."""
    if params.sigma_delta_sq <= 0:
        raise DomainError("high-SNR phase-noise capacity diverges for sigma_delta_sq = 0")
    return (0.5 * math.log2(1.0 + params.es / (4.0 * params.sigma_w_sq))
            - 0.5 * math.log2(math.e * params.sigma_delta_sq / (2.0 * math.pi)))


def crossover_snr_db(params: ChannelParams, lo_db: float = -20.0,
                     hi_db: float = 80.0, tol_db: float = 1e-6) -> float:
    """SNR (dB) where the AWGN and high-SNR phase-noise curves intersect.

    Only sigma_delta_sq and es are used from ``params``; the noise variance is
    swept.
    """
    if not 0.0 < params.sigma_delta_sq < 1.0:
        raise DomainError("crossover requires 0 < sigma_delta_sq < 1")

    def gap(snr_db):
        p = ChannelParams.from_snr_db(snr_db, params.sigma_delta_sq, params.es)
        return c_awgn(p) - c_lapidoth(p)

    a, b = lo_db, hi_db
    fa, fb = gap(a), gap(b)
    if np.sign(fa) == np.sign(fb):
        raise NoCrossover(f"no sign change of C_AWGN - C_Lapidoth in [{lo_db}, {hi_db}] dB")
    while b - a > tol_db:
        mid = 0.5 * (a + b)
        fm = gap(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)
