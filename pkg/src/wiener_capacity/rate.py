"""Achievable information rate of the phase-noise channel for a given input
law, by simulation:

    I_hat = (1/n) [log2 f(y^n | x^n) - log2 f(y^n)]

The conditional term runs a particle filter over the Wiener phase: each step
contributes the log of the one-step predictive density, estimated as the
weighted particle average of the complex Gaussian emission.

The unconditional term uses the circular symmetry of the input.  With input
phases i.i.d. uniform, the output phases are i.i.d. uniform and independent
of everything else, so the phase path drops out of f(y^n) entirely:

    f(y^n) = prod_k 1/(2 pi r_k) * prod_blocks f(r_block)

and each block factor is an M-dimensional integral of the block input
density against Rice likelihoods.  It is estimated by importance sampling
with a defensive mixture of the input law itself and truncated normals
centred on the observed amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e, log_ndtr, logsumexp, ndtr, ndtri

from . import sampler
from .errors import InvalidInput, WeightCollapse
from .model import TWO_PI, ChannelParams, SymbolBlock, make_rng, simulate
from .quad import InputDistParams

LN2 = math.log(2.0)
MIN_USES = 100
MIN_PARTICLES = 1000
SEGMENT = 100
BOOTSTRAP_DRAWS = 1000
# e^-700 underflows relative to the best achievable emission
COLLAPSE_NATS = 700.0


@dataclass
class ParticleCloud:
    """Particle approximation of the phase predictive distribution.

    ``amplitudes`` optionally attaches one input-amplitude hypothesis per
    particle for the input-marginalized emission.
    """

    phases: np.ndarray
    log_weights: np.ndarray
    amplitudes: np.ndarray | None = None

    @classmethod
    def uniform(cls, n: int, rng: np.random.Generator) -> ParticleCloud:
        return cls(rng.uniform(0.0, TWO_PI, n), np.full(n, -math.log(n)))

    @classmethod
    def concentrated(cls, phase: float, n: int) -> ParticleCloud:
        return cls(np.full(n, float(phase)), np.full(n, -math.log(n)))

    def __len__(self):
        return self.phases.size

    @property
    def ess(self) -> float:
        lw = self.log_weights - logsumexp(self.log_weights)
        return float(1.0 / np.sum(np.exp(2.0 * lw)))


@dataclass(frozen=True)
class RateEstimate:
    bits_per_use: float
    std_err: float
    n_uses: int
    n_particles: int
    input_label: str
    collapses: int = 0
    unreliable: bool = False
    seed: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {
            "bits_per_use": self.bits_per_use, "std_err": self.std_err,
            "n_uses": self.n_uses, "n_particles": self.n_particles,
            "input_label": self.input_label, "collapses": self.collapses,
            "unreliable": self.unreliable, "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


def _lse(a: np.ndarray) -> float:
    m = a.max()
    return float(m + np.log(np.exp(a - m).sum()))


def systematic_resample(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w = np.exp(log_weights - logsumexp(log_weights))
    n = w.size
    positions = (rng.uniform() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(w), positions)
    return np.minimum(idx, n - 1)


def _emission_known(params: ChannelParams, y: complex, x: complex, phases):
    s2 = params.sigma_w_sq
    d = y - x * np.exp(1j * phases)
    ll = -math.log(TWO_PI * s2) - (d.real**2 + d.imag**2) / (2.0 * s2)
    best = -math.log(TWO_PI * s2) - (abs(y) - abs(x)) ** 2 / (2.0 * s2)
    return ll, best


def _emission_marginal(params: ChannelParams, y: complex, amplitudes):
    """Emission averaged over a uniform input phase given the amplitude."""
    s2 = params.sigma_w_sq
    a = abs(y)
    R = np.asarray(amplitudes, dtype=float)
    ll = (-math.log(TWO_PI * s2) - (a - R) ** 2 / (2.0 * s2)
          + np.log(i0e(a * R / s2)))
    return ll, float(np.max(ll))


def log_pred_density(cloud: ParticleCloud, y_k: complex, x_k: complex | None,
                     params: ChannelParams, rng: np.random.Generator, *,
                     resample_below: float = 0.5):
    """One filter step.

    Returns log2 f(y_k | past) and the cloud after reweighting, systematic
    resampling (when ESS < resample_below * P) and propagation by one phase
    innovation.  With ``x_k=None`` the cloud must carry amplitude hypotheses.
    """
    if x_k is None:
        if cloud.amplitudes is None:
            raise InvalidInput("input-marginalized step needs particle amplitudes")
        ll, best = _emission_marginal(params, y_k, cloud.amplitudes)
    else:
        ll, best = _emission_known(params, y_k, x_k, cloud.phases)
    if not np.isfinite(np.max(ll)) or np.max(ll) - best < -COLLAPSE_NATS:
        raise WeightCollapse("all particle weights underflow")

    a = cloud.log_weights + ll
    la = _lse(a)
    lp = la - _lse(cloud.log_weights)
    lw = a - la

    phases, amps = cloud.phases, cloud.amplitudes
    n = phases.size
    ess = 1.0 / np.sum(np.exp(2.0 * lw))
    if ess < resample_below * n:
        idx = systematic_resample(lw, rng)
        phases = phases[idx]
        amps = None if amps is None else amps[idx]
        lw = np.full(n, -math.log(n))
    if params.sigma_delta_sq > 0:
        phases = phases + params.sigma_delta * rng.standard_normal(n)
    return lp / LN2, ParticleCloud(phases, lw, amps)


def conditional_log2_likelihood(params: ChannelParams, y, x, n_particles: int,
                                seed: int, phi0: float | None = None):
    """Per-step log2 f(y_k | y^{k-1}, x^n) from a particle forward pass.

    ``phi0`` known: the first predictive phase is phi0 plus one innovation.
    Otherwise the filter starts from the stationary (uniform) phase law.
    Returns (per-step values, number of collapse re-anchors).
    """
    rng = make_rng(seed, 5)
    if phi0 is None:
        cloud = ParticleCloud.uniform(n_particles, rng)
    else:
        cloud = ParticleCloud.concentrated(phi0, n_particles)
        if params.sigma_delta_sq > 0:
            cloud.phases = cloud.phases + params.sigma_delta * rng.standard_normal(n_particles)
    out = np.empty(len(y))
    collapses = 0
    for k in range(len(y)):
        try:
            out[k], cloud = log_pred_density(cloud, y[k], x[k], params, rng)
        except WeightCollapse:
            collapses += 1
            cloud = ParticleCloud.uniform(n_particles, rng)
            out[k], cloud = log_pred_density(cloud, y[k], x[k], params, rng)
    return out, collapses


# --- input laws -------------------------------------------------------------

def _log_rice_lik(r, R, s2):
    """log f(r | R) for r = |R + w|, w ~ CN(0, 2 s2)."""
    z = r * R / s2
    return np.log(r) - math.log(s2) - (r - R) ** 2 / (2.0 * s2) + np.log(i0e(z))


def _truncnorm_draw(loc, scale, size, rng):
    """Normal(loc, scale) truncated to (0, inf), by inversion."""
    lo = ndtr(-loc / scale)
    u = lo + (1.0 - lo) * rng.uniform(size=size)
    # inversion near the truncation point cancels; keep draws strictly positive
    return np.maximum(loc + scale * ndtri(u), 1e-12 * scale)


def _truncnorm_logpdf(x, loc, scale):
    """Summed over the last axis."""
    z = (x - loc) / scale
    per = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - math.log(scale) - log_ndtr(loc / scale)
    return np.sum(per, axis=-1)


class BlockInput:
    """Circularly symmetric input whose amplitudes come in i.i.d. blocks.

    Subclasses provide ``draw(n_blocks, rng)`` returning (n_blocks, m)
    blocks in time order and ``log_prior(blocks)``, the normalized log
    density of a time-ordered block.
    """

    m = 1
    label = "block"

    def draw(self, n_blocks: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_prior(self, blocks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_log_density(self, params: ChannelParams, r_blocks: np.ndarray,
                           n_particles: int, rng: np.random.Generator) -> np.ndarray:
        """log f(r_block) for each row of ``r_blocks`` (natural log)."""
        m = self.m
        s2 = params.sigma_w_sq
        tau = math.sqrt(s2)
        pool = self.draw(n_particles, rng)
        log_prior_pool = self.log_prior(pool)
        half = math.log(0.5)
        out = np.empty(r_blocks.shape[0])
        for b, r in enumerate(r_blocks):
            local = _truncnorm_draw(r, tau, (n_particles, m), rng)
            samples = np.concatenate([pool, local])
            lp = np.concatenate([log_prior_pool, self.log_prior(local)])
            lq = np.logaddexp(half + lp, half + _truncnorm_logpdf(samples, r, tau))
            ll = np.sum(_log_rice_lik(r, samples, s2), axis=1)
            out[b] = logsumexp(lp + ll - lq) - math.log(samples.shape[0])
        return out


class OptimizedInput(BlockInput):
    def __init__(self, params: ChannelParams, dist: InputDistParams):
        self.params = params
        self.dist = dist
        self.m = dist.m
        self.label = f"optimized-m{dist.m}"
        self._draws = 0

    def draw(self, n_blocks, rng):
        seed = int(rng.integers(2**62))
        # density order is newest-first; reverse into time order
        return sampler.draw_amplitude_blocks(self.params, self.dist, n_blocks, seed)[:, ::-1]

    def log_prior(self, blocks):
        return sampler.log_f_input(self.params, self.dist, np.asarray(blocks)[..., ::-1])


class HalfNormalInput(BlockInput):
    """|x|^2 Gamma(1/2)-distributed, i.e. half-normal amplitudes with
    E[R^2] = es; the high-SNR input family for the phase-noise channel."""

    label = "gamma"

    def __init__(self, es: float):
        self.es = es

    def draw(self, n_blocks, rng):
        return np.abs(rng.standard_normal((n_blocks, 1))) * math.sqrt(self.es)

    def log_prior(self, blocks):
        blocks = np.asarray(blocks, dtype=float)
        return (0.5 * math.log(2.0 / (math.pi * self.es))
                - blocks[..., 0] ** 2 / (2.0 * self.es))


class GaussianInput(BlockInput):
    """Circularly symmetric complex Gaussian input, Rayleigh amplitudes."""

    label = "gaussian"

    def __init__(self, es: float):
        self.es = es

    def draw(self, n_blocks, rng):
        return math.sqrt(self.es / 2.0) * np.hypot(*rng.standard_normal((2, n_blocks)))[:, None]

    def log_prior(self, blocks):
        R = np.asarray(blocks, dtype=float)[..., 0]
        return np.log(2.0 * R / self.es) - R * R / self.es

    def output_log_density(self, params, r_blocks, n_particles, rng):
        # r is Rayleigh with E[r^2] = es + 2 sigma_w^2
        v = self.es + 2.0 * params.sigma_w_sq
        r = r_blocks[:, 0]
        return np.log(2.0 * r / v) - r * r / v


REFERENCE_INPUTS = {"gaussian": GaussianInput, "gamma": HalfNormalInput}


def resolve_input(params: ChannelParams, spec) -> BlockInput:
    if isinstance(spec, BlockInput):
        return spec
    if isinstance(spec, InputDistParams):
        return OptimizedInput(params, spec)
    if isinstance(spec, str) and spec in REFERENCE_INPUTS:
        return REFERENCE_INPUTS[spec](params.es)
    raise InvalidInput(f"unknown input specification {spec!r}")


def _bootstrap_se(d: np.ndarray, m: int, rng: np.random.Generator) -> float:
    seg = max(m, (SEGMENT // m) * m)
    j = d.size // seg
    if j < 2:
        return float(np.std(d, ddof=1) / math.sqrt(d.size))
    means = d[: j * seg].reshape(j, seg).mean(axis=1)
    picks = rng.integers(0, j, size=(BOOTSTRAP_DRAWS, j))
    return float(np.std(means[picks].mean(axis=1), ddof=1))


def estimate_rate(params: ChannelParams, input_spec, n_uses: int = 1000,
                  n_particles: int = 10_000, seed: int = 0, *,
                  phi0: float | None = None, known_phase: bool = False) -> RateEstimate:
    """Simulate ``n_uses`` channel uses and estimate the information rate.

    ``phi0`` fixes the initial channel phase (uniform otherwise);
    ``known_phase`` additionally hands it to the receiver.
    """
    if n_uses < MIN_USES:
        raise InvalidInput(f"n_uses must be >= {MIN_USES}")
    if n_particles < MIN_PARTICLES:
        raise InvalidInput(f"n_particles must be >= {MIN_PARTICLES}")
    if known_phase and phi0 is None:
        raise InvalidInput("known_phase requires phi0")
    law = resolve_input(params, input_spec)
    m = law.m
    n_blocks = -(-n_uses // m)
    n = n_blocks * m

    amps = law.draw(n_blocks, make_rng(seed, 10))
    phases = make_rng(seed, 11).uniform(0.0, TWO_PI, n)
    tx = SymbolBlock(amps.ravel(), phases)
    rx = simulate(params, tx, seed=int(make_rng(seed, 12).integers(2**62)), phi0=phi0)
    y = rx.y

    cond, collapses = conditional_log2_likelihood(
        params, y, tx.x, n_particles, int(make_rng(seed, 13).integers(2**62)),
        phi0 if known_phase else None)

    r_blocks = rx.amplitudes.reshape(n_blocks, m)
    block_ll = law.output_log_density(params, r_blocks, n_particles, make_rng(seed, 14))
    uncond = -np.log(TWO_PI * rx.amplitudes) / LN2
    uncond.reshape(n_blocks, m)[:, -1] += block_ll / LN2

    d = cond - uncond
    se = _bootstrap_se(d, m, make_rng(seed, 15))
    diag = {
        "cond_bits_per_use": float(cond.mean()),
        "uncond_bits_per_use": float(uncond.mean()),
        "block_length": m,
        "resample_threshold": 0.5,
        "segment": max(m, (SEGMENT // m) * m),
    }
    return RateEstimate(float(d.mean()), se, n, n_particles, law.label, collapses,
                        collapses > 0.01 * n, seed, diag)
