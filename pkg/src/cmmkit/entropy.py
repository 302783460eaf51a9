"""Entropies of the second-order (parameter) distributions."""

import numpy as np

from .errors import ParameterError
from .special import digamma, ln_gamma


def dirichlet_entropy(eps):
    """Differential entropy of Dir(eps) on the probability simplex."""
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 1 or eps.size < 2 or np.any(eps <= 0):
        raise ParameterError(f"Dirichlet parameters must be a vector of >= 2 positive reals, got {eps!r}")
    total = eps.sum()
    ln_c = ln_gamma(total) - np.sum(ln_gamma(eps))
    return float(-np.sum((eps - 1.0) * (digamma(eps) - digamma(total))) - ln_c)


def normal_wishart_entropy(beta, nu, W):
    """Joint entropy of (mu, Sigma) under a Gaussian-inverse-Wishart posterior.

    Parametrized as in variational GMM training: the precision
    ``Sigma^-1`` is Wishart(W, nu) and ``mu | Sigma ~ N(m, Sigma / beta)``.
    The ``log|W|`` coefficient is ``-(D + 2) / 2``; it collects the Wishart
    term, the Jacobian of ``Sigma = Lambda^-1`` and the conditional Gaussian.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    D = W.shape[0] if W.size else 0
    if D == 0:
        return 0.0
    if beta <= 0:
        raise ParameterError(f"beta must be > 0, got {beta}")
    if nu <= D - 1:
        raise ParameterError(f"nu must exceed D - 1 = {D - 1}, got {nu}")
    try:
        L = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise ParameterError("W must be positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    half = (nu + 1.0 - np.arange(1, D + 1)) / 2.0
    return float(
        -0.5 * D * np.log(beta)
        + D * (D + 1) / 4.0 * np.log(np.pi / 4.0)
        - 0.5 * (D + 2) * logdet
        + 0.5 * D * (nu + 1.0)
        - 0.5 * (nu + D + 2.0) * np.sum(digamma(half))
        + np.sum(ln_gamma(half))
    )


def component_uncertainty(beta, nu, W, eps_list=(), cont_weight=1.0, cat_weight=1.0):
    """Summed parameter entropy of one component (mixing weights excluded)."""
    h = cont_weight * normal_wishart_entropy(beta, nu, W)
    for eps in eps_list:
        h += cat_weight * dirichlet_entropy(eps)
    return h
