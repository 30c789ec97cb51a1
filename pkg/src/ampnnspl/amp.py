"""AMP iterations with EM hyperparameter learning and nearest-neighbor
sparse-ratio smoothing (AMP-NNSPL).

One sweep consists of the factor-node update, the variable-node update and
posterior denoising, the sparse-ratio update, and finally the slab-mean,
slab-variance and noise-variance updates.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .denoiser import posterior_batch
from .learning import (
    NeighborTopology,
    init_hyperparams,
    topology_for,
    update_lambda,
    update_noise,
    update_slab,
)
from .model import DimensionError, Hyperparams, InvalidModelError, MeasurementModel, SolverConfig

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DIVERGED = "diverged"


class DegenerateMatrixError(DimensionError):
    """A column of A is zero, so its effective channel variance is infinite."""


@dataclass(frozen=True)
class AmpState:
    xhat: np.ndarray
    nu: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    Sigma: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    pi: Optional[np.ndarray] = None
    m_post: Optional[np.ndarray] = None
    v_post: Optional[np.ndarray] = None
    t: int = 1

    def is_finite(self) -> bool:
        arrays = (self.xhat, self.nu, self.V, self.Z, self.Sigma, self.R, self.pi)
        return all(a is None or bool(np.all(np.isfinite(a))) for a in arrays)


@dataclass
class SolveResult:
    xhat: np.ndarray
    hp_final: Hyperparams
    iterations: int
    status: Status
    trajectory: Optional[list] = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


class _Workspace:
    """Cached per-problem quantities (A squared, its transposes)."""

    def __init__(self, mm: MeasurementModel):
        self.A = mm.A
        self.y = mm.y
        self.A2 = mm.A * mm.A
        colsq = self.A2.sum(axis=0)
        if np.any(colsq == 0):
            j = int(np.flatnonzero(colsq == 0)[0])
            raise DegenerateMatrixError(f"column {j} of A is zero")


def _ws(mm, ws):
    return ws if ws is not None else _Workspace(mm)


def init_state(mm: MeasurementModel, hp: Hyperparams) -> AmpState:
    """Prior mean and variance as the first estimate; ``V = 1`` and ``Z = y``."""
    if hp.lam.shape != (mm.n,):
        raise DimensionError(f"lambda has shape {hp.lam.shape}, expected ({mm.n},)")
    xhat = hp.lam * hp.mu0
    nu = hp.lam * (hp.mu0**2 + hp.tau0) - xhat**2
    return AmpState(xhat=xhat, nu=nu, V=np.ones(mm.m), Z=mm.y.copy(), t=1)


def factor_update(state: AmpState, mm: MeasurementModel, hp: Hyperparams, ws=None):
    """Return the new factor variances ``V`` and Onsager-corrected means ``Z``."""
    ws = _ws(mm, ws)
    V = ws.A2 @ state.nu
    Z = ws.A @ state.xhat - V / (hp.delta0 + state.V) * (ws.y - state.Z)
    return V, Z


def variable_update(state: AmpState, mm: MeasurementModel, hp: Hyperparams, ws=None):
    """Return the scalar-channel variances ``Sigma`` and observations ``R``.

    ``state.V`` and ``state.Z`` must already hold the current factor update.
    """
    ws = _ws(mm, ws)
    denom = hp.delta0 + state.V
    if np.any(~(denom > 0)):
        raise DimensionError("noise variance plus factor variance must be positive")
    Sigma = 1.0 / (ws.A2.T @ (1.0 / denom))
    R = state.xhat + Sigma * (ws.A.T @ ((ws.y - state.Z) / denom))
    return Sigma, R


def iterate_once(
    state: AmpState,
    mm: MeasurementModel,
    hp: Hyperparams,
    topology: NeighborTopology,
    config: Optional[SolverConfig] = None,
    ws=None,
):
    """Run one full sweep; returns ``(new_state, new_hyperparams)``.

    The returned state carries ``V, Z, Sigma, R, pi, m_post, v_post`` of the
    sweep just run and the next estimate ``xhat, nu``; its ``t`` is advanced.
    """
    config = config or SolverConfig()
    ws = _ws(mm, ws)
    V, Z = factor_update(state, mm, hp, ws)
    s = replace(state, V=V, Z=Z)
    Sigma, R = variable_update(s, mm, hp, ws)
    post = posterior_batch(R, Sigma, hp.mu0, hp.tau0, hp.lam)
    beta = config.damping
    if beta == 1.0:
        xhat, nu = post.ga, post.gc
    else:
        xhat = beta * post.ga + (1.0 - beta) * state.xhat
        nu = beta * post.gc + (1.0 - beta) * state.nu
    lam = update_lambda(post.pi, topology, config.lambda_eps)
    mu0, tau0 = update_slab(post.pi, post.m, post.v, hp.mu0, hp.tau0, config.var_floor)
    delta0 = update_noise(mm.y, Z, V, hp.delta0, config.var_floor)
    new_state = AmpState(
        xhat=xhat, nu=nu, V=V, Z=Z, Sigma=Sigma, R=R,
        pi=post.pi, m_post=post.m, v_post=post.v, t=state.t + 1,
    )
    return new_state, Hyperparams(mu0=mu0, tau0=tau0, delta0=delta0, lam=lam)


def solve(
    mm: MeasurementModel,
    config: Optional[SolverConfig] = None,
    topology: Optional[NeighborTopology] = None,
    hp: Optional[Hyperparams] = None,
) -> SolveResult:
    """Recover ``x`` from ``mm`` with AMP-NNSPL.

    Stops when ``||x_new - x_old|| < eps_toc * ||x_old||``, after ``t_max``
    sweeps, or when the iterate stops being finite (status DIVERGED).
    """
    config = config or SolverConfig()
    ws = _Workspace(mm)
    if topology is None:
        topology = topology_for(config, mm.n)
    elif topology.n != mm.n:
        raise DimensionError(f"topology covers {topology.n} coefficients, A has {mm.n} columns")
    if hp is None:
        hp = init_hyperparams(mm, config)
    state = init_state(mm, hp)
    trajectory = [] if config.record_trajectory else None
    status = Status.MAX_ITERATIONS
    iterations = 0
    xhat_out, hp_out = state.xhat, hp

    for _ in range(config.t_max):
        iterations += 1
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                new_state, new_hp = iterate_once(state, mm, hp, topology, config, ws)
        except InvalidModelError:
            # non-finite channel or hyperparameter produced mid-sweep
            status = Status.DIVERGED
            break
        x_old, x_new = state.xhat, new_state.xhat
        new_norm = float(np.linalg.norm(x_new))
        if not new_state.is_finite() or not np.isfinite(new_hp.delta0) or new_norm > config.diverge_norm:
            logger.debug("diverged at iteration %d", iterations)
            status = Status.DIVERGED
            break
        state, hp = new_state, new_hp
        xhat_out, hp_out = x_new, new_hp
        old_norm = float(np.linalg.norm(x_old))
        change = float(np.linalg.norm(x_new - x_old))
        if trajectory is not None:
            rel = change / old_norm if old_norm > 0 else (0.0 if change == 0 else float("inf"))
            trajectory.append((rel, hp.delta0, hp.mean_lambda))
        if old_norm > 0:
            done = change < config.eps_toc * old_norm
        else:
            done = new_norm == 0
        if done:
            status = Status.CONVERGED
            break

    return SolveResult(
        xhat=np.array(xhat_out), hp_final=hp_out, iterations=iterations,
        status=status, trajectory=trajectory,
    )
