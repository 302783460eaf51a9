"""Log-gamma and digamma with domain checking.

Thin wrappers around :mod:`scipy.special` that reject non-positive
arguments instead of returning ``inf``/``nan``.
"""

import numpy as np
from scipy import special as _sp

from .errors import ParameterError


def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise ParameterError(f"{name} requires x > 0, got {x!r}")
    return arr


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = _check_positive(x, "ln_gamma")
    out = _sp.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def digamma(x):
    """Derivative of :func:`ln_gamma` for ``x > 0``."""
    arr = _check_positive(x, "digamma")
    out = _sp.digamma(arr)
    return float(out) if out.ndim == 0 else out
