"""EM hyperparameter learning and nearest-neighbor sparse-ratio smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    LAMBDA_EPS,
    VAR_FLOOR,
    DimensionError,
    Hyperparams,
    MeasurementModel,
    SolverConfig,
    TopologyKind,
)


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NeighborTopology:
    """Neighbor sets stored in CSR form.

    The neighbors of ``i`` are ``indices[indptr[i]:indptr[i + 1]]``. FULLSET
    stores nothing; every index (itself included) is a neighbor of every other.
    """

    kind: TopologyKind
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    shape: Optional[tuple] = None

    def neighbors(self, i: int) -> np.ndarray:
        if self.kind is TopologyKind.FULLSET:
            return np.arange(self.n)
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        if self.kind is TopologyKind.FULLSET:
            return np.full(self.n, self.n, dtype=np.int64)
        return np.diff(self.indptr)

    def as_lists(self) -> list:
        return [self.neighbors(i).tolist() for i in range(self.n)]

    def __repr__(self):
        return f"NeighborTopology(kind={self.kind.value}, n={self.n})"


def _from_lists(kind, lists, shape=None) -> NeighborTopology:
    lengths = [len(nb) for nb in lists]
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    if indptr[-1]:
        indices = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in lists])
    else:
        indices = np.zeros(0, dtype=np.int64)
    return NeighborTopology(TopologyKind(kind), len(lists), indptr, indices, shape)


def _chain(n):
    lists = []
    for i in range(n):
        lists.append([j for j in (i - 1, i + 1) if 0 <= j < n])
    return lists


def _grid(rows, cols):
    lists = []
    for q in range(rows):
        for l in range(cols):
            nb = []
            for dq, dl in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                qq, ll = q + dq, l + dl
                if 0 <= qq < rows and 0 <= ll < cols:
                    nb.append(qq * cols + ll)
            lists.append(nb)
    return lists


def build_topology(
    kind,
    n: int,
    shape: Optional[Sequence[int]] = None,
    adjacency: Optional[Sequence[Iterable[int]]] = None,
) -> NeighborTopology:
    """Build the neighbor map for ``n`` coefficients.

    GRID2D needs ``shape=(rows, cols)`` and linearizes row-major; CUSTOM
    takes explicit ``adjacency`` lists.
    """
    kind = TopologyKind(kind)
    if n < 1:
        raise TopologyError("topology size must be positive")
    if kind is TopologyKind.INDEPENDENT:
        return _from_lists(kind, [[i] for i in range(n)])
    if kind is TopologyKind.FULLSET:
        empty = np.zeros(0, dtype=np.int64)
        return NeighborTopology(kind, n, empty, empty)
    if kind is TopologyKind.CHAIN1D:
        return _from_lists(kind, _chain(n))
    if kind is TopologyKind.GRID2D:
        if shape is None:
            raise TopologyError("a 2-D grid topology needs (rows, cols)")
        rows, cols = (int(s) for s in shape)
        if rows < 1 or cols < 1 or rows * cols != n:
            raise TopologyError(f"grid {rows}x{cols} does not cover {n} coefficients")
        return _from_lists(kind, _grid(rows, cols), (rows, cols))
    # CUSTOM
    if adjacency is None:
        raise TopologyError("a custom topology needs an adjacency list")
    lists = [list(map(int, nb)) for nb in adjacency]
    if len(lists) != n:
        raise TopologyError(f"adjacency has {len(lists)} entries, expected {n}")
    for i, nb in enumerate(lists):
        for j in nb:
            if not 0 <= j < n:
                raise TopologyError(f"neighbor {j} of index {i} out of range [0, {n})")
            if j == i:
                raise TopologyError(f"index {i} lists itself as a neighbor")
    return _from_lists(kind, lists)


def topology_for(config: SolverConfig, n: int) -> NeighborTopology:
    return build_topology(config.topology, n, config.grid_shape, config.adjacency)


def update_lambda(pi, topology: NeighborTopology, lambda_eps: float = LAMBDA_EPS) -> np.ndarray:
    """Set each sparse ratio to the mean support probability of its neighbors."""
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (topology.n,):
        raise DimensionError(f"pi has shape {pi.shape}, topology covers {topology.n}")
    if topology.kind is TopologyKind.FULLSET:
        lam = np.full(topology.n, np.mean(pi))
    else:
        deg = topology.degrees()
        if np.any(deg == 0):
            i = int(np.flatnonzero(deg == 0)[0])
            raise TopologyError(f"index {i} has no neighbors")
        rows = np.repeat(np.arange(topology.n), deg)
        lam = np.bincount(rows, weights=pi[topology.indices], minlength=topology.n) / deg
    if lambda_eps > 0:
        np.clip(lam, lambda_eps, 1.0 - lambda_eps, out=lam)
    return lam


def update_noise(y, Z, V, delta_prev: float, var_floor: float = VAR_FLOOR) -> float:
    """EM update of the noise variance from the AMP factor-node quantities."""
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if not (y.shape == Z.shape == V.shape) or y.ndim != 1:
        raise DimensionError("y, Z and V must be vectors of equal length")
    resid = y - Z
    terms = resid**2 / (1.0 + V / delta_prev) ** 2 + delta_prev * V / (delta_prev + V)
    return max(float(np.mean(terms)), var_floor)


def update_slab(pi, m_post, v_post, mu_prev: float, tau_prev: float, var_floor: float = VAR_FLOOR):
    """EM update of the slab mean and variance.

    The variance update uses the previous mean ``mu_prev``. When every
    support probability is zero the previous values are returned unchanged.
    """
    pi = np.asarray(pi, dtype=np.float64)
    m_post = np.asarray(m_post, dtype=np.float64)
    v_post = np.asarray(v_post, dtype=np.float64)
    total = float(np.sum(pi))
    if not total > 0:
        return float(mu_prev), float(tau_prev)
    mu = float(np.sum(pi * m_post)) / total
    tau = float(np.sum(pi * ((mu_prev - m_post) ** 2 + v_post))) / total
    return mu, max(tau, var_floor)


def init_hyperparams(mm: MeasurementModel, config: Optional[SolverConfig] = None) -> Hyperparams:
    """Initial hyperparameters: ratios 0.5, noise from the SNR guess, zero mean."""
    config = config or SolverConfig()
    lam0 = 0.5
    fro2 = float(np.sum(mm.A * mm.A))
    if not fro2 > 0:
        raise DimensionError("measurement matrix is identically zero")
    ysq = float(mm.y @ mm.y)
    delta0 = max(ysq / (mm.m * (config.snr0 + 1.0)), config.var_floor)
    tau0 = max((ysq - mm.m * delta0) / (lam0 * fro2), config.var_floor)
    return Hyperparams(mu0=0.0, tau0=tau0, delta0=delta0, lam=np.full(mm.n, lam0))
