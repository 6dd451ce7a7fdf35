"""Block input densities and their samplers.

The optimized block-input amplitude density is

    f(R) = alpha * g(R)^(-M/2) * exp(-beta * ||R||^2),    R in (0, inf)^M

where g(R) = |Sigma_n| / |Sigma_{n-1}| is the conditional variance of the
newest differenced phase-noise sample given the block amplitudes.  Closed
forms exist for M = 2 and M = 3.  Because g >= sigma_delta_sq, the factor
g^(-M/2) is bounded by sigma_delta^(-M) and a half-normal product proposal
gives an exact rejection envelope.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, EnvelopeError, InefficientProposal, InvalidInput
from .model import TWO_PI, ChannelParams, SymbolBlock, make_rng

if TYPE_CHECKING:
    from .quad import InputDistParams

_CHUNK = 200_000


def _positive(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    for a in out:
        if np.any(~(a > 0)):
            raise DomainError("amplitudes must be strictly positive")
    return out


def gb_m2(params: ChannelParams, r_n, r_nm1):
    r_n, r_nm1 = _positive(r_n, r_nm1)
    s = params.sigma_w_sq
    with np.errstate(divide="ignore", over="ignore"):
        return params.sigma_delta_sq + s / r_n**2 + s / r_nm1**2


def gb_m3(params: ChannelParams, r_n, r_nm1, r_nm2):
    """|Sigma_n| / |Sigma_{n-1}| for a three-sample block.

    As a Schur complement this is d + c0 + c1 - c1^2 / (d + c1 + c2), with
    c_i = sigma_w^2 / R_i^2.  The last two terms equal the "parallel sum" of
    c1 and d + c2, evaluated here in a form that stays finite when an
    amplitude is so small that c_i overflows.
    """
    r_n, r_nm1, r_nm2 = _positive(r_n, r_nm1, r_nm2)
    s, d = params.sigma_w_sq, params.sigma_delta_sq
    with np.errstate(divide="ignore", over="ignore"):
        c0, c1, c2 = s / r_n**2, s / r_nm1**2, s / r_nm2**2
        return d + c0 + 1.0 / (1.0 / c1 + 1.0 / (d + c2))


def gb(params: ChannelParams, blocks) -> np.ndarray:
    """g_b for an ``(..., M)`` array of blocks, last axis ordered
    (R_n, R_{n-1}[, R_{n-2}])."""
    blocks = np.asarray(blocks, dtype=float)
    m = blocks.shape[-1]
    if m == 2:
        return gb_m2(params, blocks[..., 0], blocks[..., 1])
    if m == 3:
        return gb_m3(params, blocks[..., 0], blocks[..., 1], blocks[..., 2])
    raise InvalidInput(f"block length must be 2 or 3, got {m}")


@dataclass(frozen=True)
class GbEval:
    m: int
    amplitudes: tuple
    value: float


def evaluate_gb(params: ChannelParams, amplitudes) -> GbEval:
    amps = tuple(float(a) for a in amplitudes)
    return GbEval(len(amps), amps, float(gb(params, np.array(amps))))


def log_f_input(params: ChannelParams, dist: InputDistParams, blocks) -> np.ndarray:
    """Natural log of the block density; ``blocks`` has shape (..., M)."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.shape[-1] != dist.m:
        raise InvalidInput(f"expected blocks of length {dist.m}")
    g = gb(params, blocks)
    return (np.log(dist.alpha_l) - 0.5 * dist.m * np.log(g)
            - dist.beta_l * np.sum(blocks**2, axis=-1))


def f_input_density(params: ChannelParams, dist: InputDistParams, amplitudes):
    return np.exp(log_f_input(params, dist, amplitudes))


def _halfnormal_scale(beta: float) -> float:
    return 1.0 / np.sqrt(2.0 * beta)


def draw_amplitude_blocks(params: ChannelParams, dist: InputDistParams,
                          n_blocks: int, seed: int,
                          stats: dict | None = None) -> np.ndarray:
    """``(n_blocks, M)`` amplitude blocks drawn i.i.d. from the block density
    by rejection sampling.

    Proposal: independent half-normals with scale 1/sqrt(2 beta); a proposal
    R is accepted with probability g(R)^(-M/2) * sigma_delta^M <= 1.
    """
    if n_blocks < 1:
        raise InvalidInput("n_blocks must be >= 1")
    if params.sigma_delta_sq <= 0:
        raise DomainError("rejection envelope needs sigma_delta_sq > 0")
    m = dist.m
    scale = _halfnormal_scale(dist.beta_l)
    log_bound = 0.5 * m * np.log(params.sigma_delta_sq)

    out = np.empty((n_blocks, m))
    filled = proposed = accepted = 0
    chunk = 0
    while filled < n_blocks:
        rng = make_rng(seed, 1, chunk)
        chunk += 1
        z = np.abs(rng.standard_normal((_CHUNK, m))) * scale
        u = rng.uniform(size=_CHUNK)
        z = z[np.all(z > 0, axis=1)]  # zero draws would make g infinite
        log_acc = -0.5 * m * np.log(gb(params, z)) + log_bound
        if np.any(log_acc > 1e-12):
            raise EnvelopeError("acceptance probability exceeded one")
        keep = z[np.log(u[: z.shape[0]]) < log_acc]
        proposed += _CHUNK
        accepted += keep.shape[0]
        take = min(keep.shape[0], n_blocks - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        if chunk == 20 and accepted / proposed < 1e-4:
            warnings.warn(f"rejection acceptance rate {accepted / proposed:.2e}",
                          InefficientProposal, stacklevel=2)
    if stats is not None:
        stats["proposed"] = proposed
        stats["accepted"] = accepted
        stats["acceptance_rate"] = accepted / proposed
    return out


def draw_input_block(params: ChannelParams, dist: InputDistParams,
                     n_blocks: int, seed: int) -> SymbolBlock:
    """``M * n_blocks`` symbols: amplitude blocks from the optimized density,
    phases i.i.d. uniform on [0, 2 pi).

    Density arrays are ordered newest-first (R_n, R_{n-1}, ...); the emitted
    stream is in time order, so each block is reversed on the way out.
    """
    amps = draw_amplitude_blocks(params, dist, n_blocks, seed)
    phases = make_rng(seed, 2).uniform(0.0, TWO_PI, size=amps.size)
    return SymbolBlock(amps[:, ::-1].ravel(), phases)
