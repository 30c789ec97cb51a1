"""Linear Gaussian measurement model, spike-and-slab hyperparameters and
solver configuration.

The measurement model is ``y = A x + w`` with ``w ~ N(0, delta0 I)``; each
coefficient follows ``(1 - lambda_i) delta(x_i) + lambda_i N(x_i; mu0, tau0)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

# Floors that keep EM updates away from degenerate values (noiseless runs
# drive the noise variance to zero, saturated ratios break the logit).
VAR_FLOOR = 1e-12
LAMBDA_EPS = 1e-8


class InvalidModelError(ValueError):
    """Raised for malformed or non-finite model inputs."""


class DimensionError(InvalidModelError):
    """Raised when array shapes do not agree."""


class TopologyKind(str, enum.Enum):
    INDEPENDENT = "indep"
    FULLSET = "fullset"
    CHAIN1D = "nnspl1d"
    GRID2D = "nnspl2d"
    CUSTOM = "custom"


def make_rng(seed: Union[int, Sequence[int], None]) -> np.random.Generator:
    """Return a PCG64 generator seeded from ``seed``.

    Tuples such as ``(base_seed, ratio_index, trial_index)`` are hashed through
    :class:`numpy.random.SeedSequence`, giving independent sub-streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class MeasurementModel:
    """The pair ``(A, y)`` of an underdetermined linear system."""

    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"A must be a non-empty 2-D array, got shape {A.shape}")
        if y.ndim != 1 or y.shape[0] != A.shape[0]:
            raise DimensionError(
                f"y must have length {A.shape[0]} to match A, got shape {y.shape}"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise InvalidModelError("A and y must be finite")
        A.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Prior and noise parameters learned by EM.

    ``lam`` holds one sparse ratio per coefficient.
    """

    mu0: float
    tau0: float
    delta0: float
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        if lam.ndim != 1:
            raise DimensionError("lam must be a 1-D array")
        if not (self.tau0 > 0 and self.delta0 > 0):
            raise InvalidModelError(
                f"tau0 and delta0 must be positive (tau0={self.tau0}, delta0={self.delta0})"
            )
        if np.any((lam < 0) | (lam > 1)) or not np.all(np.isfinite(lam)):
            raise InvalidModelError("sparse ratios must lie in [0, 1]")
        object.__setattr__(self, "mu0", float(self.mu0))
        object.__setattr__(self, "tau0", float(self.tau0))
        object.__setattr__(self, "delta0", float(self.delta0))
        object.__setattr__(self, "lam", lam)

    @property
    def mean_lambda(self) -> float:
        return float(np.mean(self.lam)) if self.lam.size else float("nan")


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`ampnnspl.amp.solve`.

    ``topology`` is a :class:`TopologyKind` (or its string value);
    ``grid_shape`` is required for GRID2D and ``adjacency`` for CUSTOM.
    ``damping`` mixes the new posterior moments with the previous ones
    (1.0 disables damping).
    """

    t_max: int = 200
    eps_toc: float = 1e-6
    topology: TopologyKind = TopologyKind.CHAIN1D
    grid_shape: Optional[tuple] = None
    adjacency: Optional[Sequence[Sequence[int]]] = None
    damping: float = 1.0
    snr0: float = 100.0
    lambda_eps: float = LAMBDA_EPS
    var_floor: float = VAR_FLOOR
    record_trajectory: bool = False
    diverge_norm: float = 1e12

    def __post_init__(self):
        object.__setattr__(self, "topology", TopologyKind(self.topology))
        if int(self.t_max) < 1:
            raise ValueError("t_max must be a positive integer")
        if not self.eps_toc > 0:
            raise ValueError("eps_toc must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.snr0 > 0:
            raise ValueError("snr0 must be positive")
        if not 0 <= self.lambda_eps < 0.5:
            raise ValueError("lambda_eps must lie in [0, 0.5)")
        if self.topology is TopologyKind.GRID2D and self.grid_shape is None:
            raise ValueError("GRID2D topology needs grid_shape=(rows, cols)")
        if self.topology is TopologyKind.CUSTOM and self.adjacency is None:
            raise ValueError("CUSTOM topology needs an adjacency list")


def generate_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``m x n`` standard Gaussian matrix with unit-norm columns."""
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got ({m}, {n})")
    A = rng.standard_normal((m, n))
    norms = np.linalg.norm(A, axis=0)
    for j in np.flatnonzero(norms == 0):
        while norms[j] == 0:
            A[:, j] = rng.standard_normal(m)
            norms[j] = np.linalg.norm(A[:, j])
    A /= norms
    return A


def measure(
    A: np.ndarray,
    x: np.ndarray,
    delta: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Return ``A @ x`` plus i.i.d. Gaussian noise of variance ``delta``."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot apply A{A.shape} to x{x.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(x))) or not np.isfinite(delta):
        raise InvalidModelError("measure() needs finite inputs")
    if delta < 0:
        raise InvalidModelError("noise variance must be non-negative")
    y = A @ x
    if delta > 0:
        if rng is None:
            raise ValueError("a random generator is required when delta > 0")
        y = y + np.sqrt(delta) * rng.standard_normal(A.shape[0])
    return y
