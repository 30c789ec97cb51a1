"""Reference computations that share no code with the package."""

import math

import numpy as np
from scipy.integrate import trapezoid


def _log_normal(x, mean, var):
    return -0.5 * np.log(2 * np.pi * var) - (x - mean) ** 2 / (2 * var)


def quadrature_moments(r, sigma, mu0, tau0, lam, npts=20001):
    """Posterior support probability, mean and variance by direct integration.

    The unnormalized posterior is the prior (atom at zero plus Gaussian slab)
    times the Gaussian likelihood N(x; r, sigma). The slab part is integrated
    with the trapezoid rule on a grid of +-12 slab-posterior deviations.
    Vectorized over the leading axis of the inputs.
    """
    r, sigma, mu0, tau0, lam = (np.atleast_1d(np.asarray(a, float))[:, None]
                                for a in (r, sigma, mu0, tau0, lam))
    v = tau0 * sigma / (tau0 + sigma)
    m = (tau0 * r + sigma * mu0) / (tau0 + sigma)
    u = np.linspace(-12.0, 12.0, npts)[None, :]
    x = m + np.sqrt(v) * u
    log_slab = np.log(lam) + _log_normal(x, mu0, tau0) + _log_normal(x, r, sigma)
    log_spike = (np.log1p(-lam) + _log_normal(0.0, r, sigma))[:, 0]
    shift = np.maximum(log_slab.max(axis=1), log_spike)
    dens = np.exp(log_slab - shift[:, None])
    w_spike = np.exp(log_spike - shift)
    w_slab = trapezoid(dens, x, axis=1)
    total = w_slab + w_spike
    mean = trapezoid(x * dens, x, axis=1) / total
    var = (trapezoid((x - mean[:, None]) ** 2 * dens, x, axis=1) + w_spike * mean**2) / total
    return w_slab / total, mean, var


def loop_factor_update(A, xhat, nu, y, Z_prev, V_prev, delta0):
    M, N = len(A), len(A[0])
    V = [sum(A[a][i] ** 2 * nu[i] for i in range(N)) for a in range(M)]
    Z = [sum(A[a][i] * xhat[i] for i in range(N)) - V[a] / (delta0 + V_prev[a]) * (y[a] - Z_prev[a])
         for a in range(M)]
    return V, Z


def loop_variable_update(A, xhat, y, Z, V, delta0):
    M, N = len(A), len(A[0])
    Sigma = [1.0 / sum(A[a][i] ** 2 / (delta0 + V[a]) for a in range(M)) for i in range(N)]
    R = [xhat[i] + Sigma[i] * sum(A[a][i] * (y[a] - Z[a]) / (delta0 + V[a]) for a in range(M))
         for i in range(N)]
    return Sigma, R


def maximal_runs(x):
    """Number of maximal runs of nonzero entries."""
    runs, inside = 0, False
    for v in x:
        if v != 0 and not inside:
            runs += 1
        inside = v != 0
    return runs


def flood_components(mask):
    """4-connected components of a boolean image (list of pixel lists)."""
    rows, cols = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for q in range(rows):
        for l in range(cols):
            if mask[q, l] and not seen[q, l]:
                stack, comp = [(q, l)], []
                seen[q, l] = True
                while stack:
                    a, b = stack.pop()
                    comp.append((a, b))
                    for da, db in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                        c, d = a + da, b + db
                        if 0 <= c < rows and 0 <= d < cols and mask[c, d] and not seen[c, d]:
                            seen[c, d] = True
                            stack.append((c, d))
                comps.append(comp)
    return comps


def binomial_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)
