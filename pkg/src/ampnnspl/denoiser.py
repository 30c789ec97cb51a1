"""Bernoulli-Gaussian MMSE denoiser for the scalar channel ``R = x + w``,
``w ~ N(0, Sigma)``.

The posterior of ``x`` is ``(1 - pi) delta(x) + pi N(x; m, V)``. ``pi`` is
evaluated as ``logistic(logit(lambda) + L)`` where ``L`` is the log
likelihood ratio between the slab and the spike, so it never overflows.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .model import InvalidModelError

# |logit(lambda) + L| beyond this is saturated; L grows like R**2 / (2 Sigma).
LOGIT_CLIP = 500.0


class PosteriorMoments(NamedTuple):
    pi: np.ndarray
    m: np.ndarray
    v: np.ndarray
    ga: np.ndarray
    gc: np.ndarray


def _moments(r, sigma, mu0, tau0, lam):
    v = tau0 * sigma / (sigma + tau0)
    m = (tau0 * r + sigma * mu0) / (sigma + tau0)
    llr = (
        -0.5 * np.log1p(tau0 / sigma)
        + r * r / (2.0 * sigma)
        - (r - mu0) ** 2 / (2.0 * (sigma + tau0))
    )
    with np.errstate(divide="ignore"):
        logit_lam = np.log(lam) - np.log1p(-lam)
    arg = np.clip(logit_lam + llr, -LOGIT_CLIP, LOGIT_CLIP)
    pi = expit(arg)
    ga = pi * m
    # pi*(m^2 + V) - ga^2, rearranged so nothing cancels when pi ~ 1
    gc = pi * v + pi * expit(-arg) * m * m
    return PosteriorMoments(pi, m, v, ga, gc)


def posterior(r: float, sigma: float, mu0: float, tau0: float, lam: float) -> PosteriorMoments:
    """Posterior of one coefficient observed through ``r`` with noise variance ``sigma``.

    Returns scalar :class:`PosteriorMoments`: support probability, slab mean
    and variance, and the posterior mean ``ga`` and variance ``gc``.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidModelError(f"channel variance must be positive and finite, got {sigma}")
    if not (np.isfinite(tau0) and tau0 > 0):
        raise InvalidModelError(f"slab variance must be positive and finite, got {tau0}")
    if not np.isfinite(r):
        raise InvalidModelError("channel observation must be finite")
    if not 0 <= lam <= 1:
        raise InvalidModelError(f"sparse ratio must lie in [0, 1], got {lam}")
    out = _moments(np.float64(r), np.float64(sigma), np.float64(mu0), np.float64(tau0), np.float64(lam))
    return PosteriorMoments(*(float(a) for a in out))


def posterior_batch(R, Sigma, mu0: float, tau0: float, lam) -> PosteriorMoments:
    """Element-wise :func:`posterior` over vectors ``R``, ``Sigma`` and ``lam``.

    ``lam`` may be a scalar or a vector of the same length as ``R``.
    """
    R = np.asarray(R, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), R.shape)
    if R.shape != Sigma.shape:
        raise InvalidModelError(f"R{R.shape} and Sigma{Sigma.shape} differ in shape")
    if not (np.isfinite(tau0) and tau0 > 0):
        raise InvalidModelError(f"slab variance must be positive and finite, got {tau0}")
    bad = ~(np.isfinite(Sigma) & (Sigma > 0)) | ~np.isfinite(R) | ~((lam >= 0) & (lam <= 1))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InvalidModelError(
            f"invalid channel at index {i}: R={R[i]}, Sigma={Sigma[i]}, lambda={lam[i]}"
        )
    return _moments(R, Sigma, float(mu0), float(tau0), lam)
