"""Parzen window reference density and the sample-based symmetric KL estimate."""

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .errors import BandwidthError, EmptyInputError, SchemaError
from .model import LOG_FLOOR

_CHUNK = 2048


def bandwidth_10nn(points, k=10):
    """Average distance to the ``min(k, N - 1)`` nearest neighbors, averaged over all points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < 2:
        raise BandwidthError("bandwidth selection needs at least two points")
    kk = min(k, n - 1)
    dist, _ = cKDTree(points).query(points, k=kk + 1)
    # column 0 is the query point itself (or a duplicate at distance 0)
    h = float(np.mean(dist[:, 1:]))
    if h <= 0:
        raise BandwidthError("all points coincide; supply the bandwidth explicitly")
    return h


class ParzenEstimator:
    """Isotropic Gaussian kernel density over a fixed point set."""

    def __init__(self, points, h=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] == 0:
            raise EmptyInputError("Parzen estimator needs at least one point")
        if h is None:
            h = bandwidth_10nn(points)
        if not h > 0:
            raise BandwidthError(f"bandwidth must be > 0, got {h}")
        self.points = points
        self.h = float(h)
        self._sq = np.sum(points ** 2, axis=1)
        n, d = points.shape
        self._log_norm = -np.log(n) - 0.5 * d * np.log(2.0 * np.pi * self.h ** 2)

    @property
    def dim(self):
        return self.points.shape[1]

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :] if self.dim > 1 or x.size == 1 else x[:, None]
        if x.shape[1] != self.dim:
            raise SchemaError(f"expected {self.dim}-dimensional points, got {x.shape[1]}")
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], _CHUNK):
            xs = x[s:s + _CHUNK]
            d2 = np.sum(xs ** 2, axis=1)[:, None] + self._sq[None, :] - 2.0 * xs @ self.points.T
            np.maximum(d2, 0.0, out=d2)
            out[s:s + _CHUNK] = logsumexp(-d2 / (2.0 * self.h ** 2), axis=1)
        return out + self._log_norm

    def density(self, x):
        return np.exp(self.log_density(x))


def parzen_density(est, x):
    """q(x) for a single point or rows of ``x``."""
    vals = est.density(x)
    return float(vals[0]) if vals.size == 1 else vals


def kl2_terms(log_p1, log_p2):
    """Per-sample summands of the symmetric KL estimate (before the 1/2N factor).

    Log densities are floored at ``LOG_FLOOR``; the log ratio is capped so
    the importance weight stays finite.
    """
    lp1 = np.maximum(np.asarray(log_p1, dtype=float), LOG_FLOOR)
    lp2 = np.maximum(np.asarray(log_p2, dtype=float), LOG_FLOOR)
    t = np.minimum(lp2 - lp1, -LOG_FLOOR)
    return -t + np.exp(t) * t


def kl2_hat_from_logs(log_p1, log_p2):
    """Symmetric KL estimate from log densities evaluated at samples drawn from p1."""
    terms = kl2_terms(log_p1, log_p2)
    if terms.size == 0:
        raise EmptyInputError("KL2 estimate needs at least one sample")
    return float(terms.sum() / (2.0 * terms.size))


def kl2_hat(log_p1, log_p2, samples):
    """Symmetric KL estimate with ``samples`` drawn from ``p1``.

    ``log_p1`` and ``log_p2`` are callables returning log densities at the
    rows of ``samples``.
    """
    return kl2_hat_from_logs(log_p1(samples), log_p2(samples))
