"""Sliding-window novelty detection from classifier-level representativity.

After warm-up, every ``every``-th pushed sample triggers an evaluation of
``-KL2(p_model, q_window)``, where ``q_window`` is a Parzen estimate over the
most recent ``window`` samples and both densities are evaluated at the
window samples.  High values mean the model still explains the stream.
"""

import logging
from collections import deque

import numpy as np
from scipy.special import logsumexp

from .density import ParzenEstimator, bandwidth_10nn, kl2_hat_from_logs
from .errors import EmptyInputError, SchemaError
from .model import Sample

logger = logging.getLogger(__name__)


class NoveltyDetector:
    """Single-writer streaming detector.

    Parameters
    ----------
    classifier : Classifier
        Only the continuous marginal (Gaussians and mixing weights) is used.
    window : int
        Sliding window length W.
    every : int
        Evaluation cadence once the window is full.
    bandwidth : float, optional
        Fixed Parzen bandwidth.  If omitted, the 10-NN heuristic is
        recomputed on the window every ``recompute_every`` samples
        (default: W).
    """

    def __init__(self, classifier, window=5000, every=10, bandwidth=None, recompute_every=None):
        if classifier.schema.n_cont == 0:
            raise SchemaError("novelty detection needs continuous dimensions")
        if window < 2 or every < 1:
            raise ValueError("window must be >= 2 and every >= 1")
        self.classifier = classifier
        self.window = int(window)
        self.every = int(every)
        self.fixed_h = bandwidth
        self.recompute_every = int(recompute_every or window)
        self._log_pi = np.log(np.maximum(classifier.pi, 1e-300))
        self._xs = deque(maxlen=self.window)
        self._lp = deque(maxlen=self.window)
        self.n_seen = 0
        self.h = bandwidth
        self._h_age = None
        self.history = []

    @property
    def dim(self):
        return self.classifier.schema.n_cont

    def model_log_density(self, xc):
        xc = np.atleast_2d(xc)
        lj = np.column_stack([lp + c.gaussian.log_pdf(xc) for lp, c in zip(self._log_pi, self.classifier.components)])
        return logsumexp(lj, axis=1)

    def window_contents(self):
        return np.array(self._xs).reshape(-1, self.dim)

    @property
    def warmed_up(self):
        return len(self._xs) == self.window

    def push(self, sample):
        """Add one sample; returns the raw statistic when an evaluation is due."""
        x = sample.continuous if isinstance(sample, Sample) else np.asarray(sample, dtype=float).ravel()
        if x.size != self.dim:
            raise SchemaError(f"expected {self.dim} continuous values, got {x.size}")
        self._xs.append(x.copy())
        self._lp.append(float(self.model_log_density(x)[0]))
        self.n_seen += 1
        if not self.warmed_up:
            return None
        since_full = self.n_seen - self.window
        if since_full % self.every:
            return None
        value = self.evaluate()
        self.history.append((self.n_seen - 1, value))
        return value

    def _bandwidth(self, pts):
        if self.fixed_h is not None:
            return self.fixed_h
        since_full = self.n_seen - self.window
        if self.h is None or self._h_age is None or since_full - self._h_age >= self.recompute_every:
            self.h = bandwidth_10nn(pts)
            self._h_age = since_full
        return self.h

    def evaluate(self):
        """-KL2(p_model, q_window) over the current window."""
        pts = self.window_contents()
        if pts.shape[0] == 0:
            raise EmptyInputError("window is empty")
        est = ParzenEstimator(pts, self._bandwidth(pts))
        return -kl2_hat_from_logs(np.array(self._lp), est.log_density(pts))

    def run(self, xs):
        """Push every row of ``xs``; returns ``[(stream_index, raw), ...]`` for emissions."""
        out = []
        for x in np.atleast_2d(xs):
            v = self.push(x)
            if v is not None:
                out.append(self.history[-1])
        return out


def push(detector, sample):
    return detector.push(sample)


def znormalize_series(values):
    """Shift and scale to mean 0 and (population) variance 1."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values to normalize")
    sd = v.std()
    if not sd > 0:
        raise ValueError("cannot normalize a constant series")
    return (v - v.mean()) / sd


def alarm(series, threshold=-1.0, hold=1):
    """Half-open position intervals ``(start, end)`` where ``series < threshold``
    holds for at least ``hold`` consecutive entries."""
    below = np.asarray(series, dtype=float) < threshold
    intervals = []
    start = None
    for k, b in enumerate(below):
        if b and start is None:
            start = k
        elif not b and start is not None:
            if k - start >= hold:
                intervals.append((start, k))
            start = None
    if start is not None and below.size - start >= hold:
        intervals.append((start, below.size))
    return intervals
