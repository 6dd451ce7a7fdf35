"""Duality upper bound on capacity, Monte-Carlo form and closed form.

For an auxiliary output density q with parameters (alpha_u(mu), beta_u(mu)),

    C_U = min_mu { -log2(alpha_u / 2 pi) + beta_u / ln2 * (es + 2 sigma_w^2)
                   + max_R G(R) }

    G(R) = 1/2 E[log2(sigma_w^2 / (r + mu)^2 + sigma_delta^2)]
           - h(r) - h(N + Delta | r)

where, for a fixed transmitted amplitude R, r = |R + w_par + j w_perp| and
N = arg(R + w_par + j w_perp).  Letting R grow without bound gives the
closed form

    C_U~ = beta_u(0) / ln2 * (es + 2 sigma_w^2) - 1/2 log2(sigma_w^2 e^2 alpha_u(0)^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e

from . import entropy, quad
from .errors import InvalidInput, NumericalFailure
from .model import ChannelParams, make_rng, snr_db

LN2 = math.log(2.0)
MIN_SAMPLES = 10_000


def default_r_grid(es: float = 1.0, n: int = 60) -> np.ndarray:
    return math.sqrt(es) * np.geomspace(1e-3, 30.0, n)


def default_mu_grid(es: float = 1.0) -> np.ndarray:
    return math.sqrt(es) * np.array([0.0, 0.05, 0.1, 0.5, 1.0])


@dataclass(frozen=True)
class GofR:
    r_value: float
    mu: float
    value: float
    term_integral: float
    term_h_r: float
    term_h_cond: float
    n_samples: int


@dataclass(frozen=True)
class UpperBoundResult:
    snr_db: float
    c_u: float
    c_u_tilde: float
    argmax_R: float
    argmin_mu: float
    aux: quad.AuxOutputParams
    diagnostics: dict = field(default_factory=dict, compare=False)


def _log_rice_pdf(x, nu: float, sigma: float):
    """log of the Rice density, stable for large nu/sigma via i0e."""
    s2 = sigma * sigma
    z = x * nu / s2
    return np.log(x) - math.log(s2) - (x - nu) ** 2 / (2.0 * s2) + np.log(i0e(z))


def log_term_integral(params: ChannelParams, R: float, mu: float) -> float:
    """1/2 E[log2(sigma_w^2/(r + mu)^2 + sigma_delta^2)] over the noise.

    The expectation is over the 2-D Gaussian (w_par, w_perp), but the
    integrand depends on them only through r = |R + w|, which is Rice
    distributed, so the double integral is evaluated exactly as a 1-D
    integral against the Rice density.
    """
    s = params.sigma_w
    sw2, sd2 = params.sigma_w_sq, params.sigma_delta_sq

    def integrand(x):
        x = np.asarray(x, dtype=float)
        xm = x + mu
        # log(sw2/xm^2 + sd2) written to avoid 0/0 at x + mu = 0
        val = 0.5 * (np.log2(sw2 + sd2 * xm * xm) - 2.0 * np.log2(xm))
        return np.exp(_log_rice_pdf(x, R, s)) * val

    lo = max(0.0, R - 10.0 * s)
    hi = R + 10.0 * s
    pts = [R] if lo < R < hi else None
    with np.errstate(divide="ignore", invalid="ignore"):
        return quad.integrate_1d(integrand, lo, hi, 1e-11, points=pts, rtol=1e-10)


def _noise_samples(params: ChannelParams, R: float, n: int, seed: int):
    rng = make_rng(seed, 4)
    z = rng.standard_normal((3, n))
    wpar = params.sigma_w * z[0]
    wperp = params.sigma_w * z[1]
    delta = params.sigma_delta * z[2]
    r = np.hypot(R + wpar, wperp)
    # quadrant-aware angle of R + w, plus the phase innovation
    psi = np.arctan2(wperp, R + wpar) + delta
    return r, psi


def entropy_terms(params: ChannelParams, R: float, n_samples: int, seed: int,
                  k: int = entropy.DEFAULT_K):
    """(h(r), h(N + Delta | r)) in bits for transmitted amplitude R."""
    r, psi = _noise_samples(params, R, n_samples, seed)
    h_r = entropy.knn_entropy(r, k)
    h_cond = entropy.conditional_entropy(np.column_stack([r, psi]), 0, k)
    return h_r, h_cond


def g_of_r(params: ChannelParams, R: float, mu: float = 0.0,
           n_samples: int = 100_000, seed: int = 0,
           k: int = entropy.DEFAULT_K) -> GofR:
    if not (R >= 0 and mu >= 0):
        raise InvalidInput("R and mu must be nonnegative")
    if n_samples < MIN_SAMPLES:
        raise InvalidInput(f"n_samples must be >= {MIN_SAMPLES}")
    h_r, h_cond = entropy_terms(params, R, n_samples, seed, k)
    t1 = log_term_integral(params, R, mu)
    return _assemble(R, mu, t1, h_r, h_cond, n_samples)


def _assemble(R, mu, t1, h_r, h_cond, n):
    value = t1 - h_r - h_cond
    if not all(math.isfinite(v) for v in (t1, h_r, h_cond)):
        raise NumericalFailure(f"nonfinite G(R) term at R={R}, mu={mu}")
    return GofR(float(R), float(mu), float(value), float(t1), float(h_r),
                float(h_cond), int(n))


def g_limit(params: ChannelParams) -> float:
    """G(R) as R -> infinity:
    1/2 log2(sd2) - 1/2 log2(2 pi e sw2) - 1/2 log2(2 pi e sd2)."""
    return -math.log2(2.0 * math.pi * math.e) - 0.5 * math.log2(params.sigma_w_sq)


def upper_bound_cu(params: ChannelParams, mu_grid=None, r_grid=None,
                   n_samples: int = 100_000, seed: int = 0, *,
                   second_moment: float | None = None,
                   k: int = entropy.DEFAULT_K) -> UpperBoundResult:
    """Monte-Carlo duality bound, minimized over ``mu_grid`` and maximized
    over ``r_grid``.

    All R values share one noise realization (common random numbers), so
    results on a sub-grid are exactly the restriction of results on a
    super-grid.  The entropy terms do not depend on mu and are computed once
    per R.
    """
    mu_grid = default_mu_grid(params.es) if mu_grid is None else np.asarray(mu_grid, float)
    r_grid = default_r_grid(params.es) if r_grid is None else np.asarray(r_grid, float)
    if mu_grid.size == 0 or r_grid.size == 0:
        raise InvalidInput("grids must be nonempty")
    if np.any(np.diff(mu_grid) < 0) or np.any(np.diff(r_grid) < 0):
        raise InvalidInput("grids must be sorted ascending")
    if np.any(mu_grid < 0) or np.any(r_grid < 0):
        raise InvalidInput("grids must be nonnegative")
    if n_samples < MIN_SAMPLES:
        raise InvalidInput(f"n_samples must be >= {MIN_SAMPLES}")

    ent = [entropy_terms(params, R, n_samples, seed, k) for R in r_grid]
    power = params.es + 2.0 * params.sigma_w_sq
    per_mu = []
    g_table = []
    auxes = []
    for mu in mu_grid:
        aux = quad.solve_aux_params(params, float(mu), second_moment=second_moment)
        gs = [_assemble(R, mu, log_term_integral(params, R, mu), hr, hc, n_samples).value
              for R, (hr, hc) in zip(r_grid, ent)]
        g_table.append(gs)
        auxes.append(aux)
        per_mu.append(-math.log2(aux.alpha_u / (2.0 * math.pi))
                      + aux.beta_u / LN2 * power + max(gs))
    i_mu = int(np.argmin(per_mu))
    i_r = int(np.argmax(g_table[i_mu]))
    aux0 = auxes[0] if mu_grid[0] == 0 else None
    c_tilde = upper_bound_cu_tilde(params, aux0, second_moment=second_moment)
    diag = {
        "mu_grid": mu_grid.tolist(),
        "r_grid": r_grid.tolist(),
        "c_u_per_mu": [float(v) for v in per_mu],
        "g_table": [[float(v) for v in row] for row in g_table],
        "h_r": [float(h) for h, _ in ent],
        "h_cond": [float(h) for _, h in ent],
        "g_limit": g_limit(params),
        "n_samples": int(n_samples),
        "seed": int(seed),
        "k": int(k),
        "aux_residuals": [list(map(float, a.residuals)) for a in auxes],
    }
    return UpperBoundResult(snr_db(params), float(per_mu[i_mu]), float(c_tilde),
                            float(r_grid[i_r]), float(mu_grid[i_mu]), auxes[i_mu], diag)


def upper_bound_cu_tilde(params: ChannelParams,
                         aux: quad.AuxOutputParams | None = None, *,
                         second_moment: float | None = None) -> float:
    """Closed-form asymptotic bound, with q solved at mu = 0 unless given."""
    if aux is None:
        aux = quad.solve_aux_params(params, 0.0, second_moment=second_moment)
    return (aux.beta_u / LN2 * (params.es + 2.0 * params.sigma_w_sq)
            - 0.5 * math.log2(params.sigma_w_sq * math.e**2 * aux.alpha_u**2))
