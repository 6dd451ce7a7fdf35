"""Kozachenko-Leonenko nearest-neighbour differential entropy, in bits.

    h_hat = (d/N) sum_i log(eps_i) + log(V_d) + psi(N) - psi(k)

with eps_i the distance from point i to its k-th nearest neighbour and V_d
the volume of the d-dimensional unit ball.  Only d in {1, 2} is needed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .errors import DegenerateSample, InvalidInput

LN2 = math.log(2.0)
DEFAULT_K = 4
BRUTE_FORCE_MAX = 5000
COLLAPSE_TOL = 1e-12


@dataclass(frozen=True)
class EntropySample:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] not in (1, 2):
            raise InvalidInput("entropy samples must be 1-D or 2-D points")
        if pts.shape[0] < 2:
            raise InvalidInput("need at least two points")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("sample contains nonfinite coordinates")
        object.__setattr__(self, "points", pts)

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _as_points(sample) -> np.ndarray:
    if isinstance(sample, EntropySample):
        return sample.points
    return EntropySample(sample).points


def _kth_sorted_1d(x: np.ndarray, k: int) -> np.ndarray:
    """k-th neighbour distance in 1-D from the k neighbours on each side."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = xs.size
    cand = np.full((n, 2 * k), np.inf)
    for j in range(1, k + 1):
        cand[j:, j - 1] = xs[j:] - xs[:-j]
        cand[:-j, k + j - 1] = xs[j:] - xs[:-j]
    eps = np.partition(cand, k - 1, axis=1)[:, k - 1]
    out = np.empty(n)
    out[order] = eps
    return out


def _kth_brute(pts: np.ndarray, k: int) -> np.ndarray:
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])


def kth_neighbor_distances(pts: np.ndarray, k: int) -> np.ndarray:
    n, d = pts.shape
    if d == 1:
        return _kth_sorted_1d(pts[:, 0], k)
    if n <= BRUTE_FORCE_MAX:
        return _kth_brute(pts, k)
    dist, _ = cKDTree(pts).query(pts, k=k + 1)
    return dist[:, k]


def _log_unit_ball(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1.0))


def knn_entropy(sample, k: int = DEFAULT_K) -> float:
    pts = _as_points(sample)
    n, d = pts.shape
    if k < 1:
        raise InvalidInput("k must be >= 1")
    if n <= k:
        raise InvalidInput(f"need more than k={k} points, got {n}")
    if np.all(pts == pts[0]):
        raise DegenerateSample("all points are identical")
    eps = kth_neighbor_distances(pts, k)
    # duplicates give zero distances
    eps = np.maximum(eps, np.finfo(float).eps)
    h = d * np.mean(np.log(eps)) + _log_unit_ball(d) + digamma(n) - digamma(k)
    return float(h / LN2)


def conditional_entropy(joint, marginal_index: int = 0, k: int = DEFAULT_K) -> float:
    """h(other | marginal) = h(joint) - h(marginal) for a 2-D sample.

    The other coordinate is first replaced by its residual after linear
    regression on the conditioning coordinate (a shear, unit Jacobian) and
    both coordinates are rescaled to unit spread, with the scale factors
    added back.  Neither step changes the exact conditional entropy; both
    reduce estimator bias on anisotropic samples.
    """
    pts = _as_points(joint)
    if pts.shape[1] != 2:
        raise InvalidInput("conditional entropy needs a 2-D sample")
    if marginal_index not in (0, 1):
        raise InvalidInput("marginal_index must be 0 or 1")
    c = pts[:, marginal_index]
    t = pts[:, 1 - marginal_index]
    c_c = c - c.mean()
    var_c = float(np.dot(c_c, c_c))
    slope = float(np.dot(c_c, t - t.mean())) / var_c if var_c > 0 else 0.0
    resid = t - slope * c
    sc = float(np.std(c))
    st = float(np.std(resid))
    if sc == 0.0:
        raise DegenerateSample("conditioning coordinate is constant")
    if st <= COLLAPSE_TOL * max(float(np.std(t)), 1.0):
        raise DegenerateSample("joint sample collapses onto the conditioning coordinate")
    cn = (c - c.mean()) / sc
    rn = (resid - resid.mean()) / st
    h_joint = knn_entropy(np.column_stack([cn, rn]), k)
    h_marg = knn_entropy(cn, k)
    return h_joint - h_marg + math.log2(st)
