"""Synthetic clustered-sparse signals, recovery metrics, and M/N sweeps."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .amp import Status, solve
from .model import MeasurementModel, SolverConfig, TopologyKind, generate_matrix, make_rng

logger = logging.getLogger(__name__)

NMSE_FLOOR_DB = -400.0
SUCCESS_NMSE_DB = -60.0
SUPPORT_TOL = 1e-4


class ExcludedTrialError(ValueError):
    """The reference signal is zero, so the NMSE is undefined."""


@dataclass(frozen=True)
class BlockSparseSpec:
    """``k`` nonzeros split into ``l`` separated blocks in a length-``n`` signal."""

    n: int = 100
    k: int = 25
    l: int = 4
    mu0: float = 3.0
    tau0: float = 1.0

    def __post_init__(self):
        if not 1 <= self.l <= self.k <= self.n:
            raise ValueError(f"need 1 <= l <= k <= n, got n={self.n}, k={self.k}, l={self.l}")
        if self.k + self.l - 1 > self.n:
            raise ValueError(
                f"{self.l} separated blocks of total size {self.k} do not fit in {self.n}"
            )

    @property
    def shape(self):
        return None

    def generate(self, rng):
        return generate_block_sparse(self, rng)


@dataclass(frozen=True)
class ClusterImageSpec:
    """Synthetic 2-D image made of a few connected blobs."""

    rows: int = 32
    cols: int = 32
    sparsity: float = 0.12
    mu0: float = 3.0
    tau0: float = 1.0

    @property
    def n(self):
        return self.rows * self.cols

    @property
    def shape(self):
        return (self.rows, self.cols)

    def generate(self, rng):
        return generate_cluster_image(self.rows, self.cols, self.sparsity, rng, self.mu0, self.tau0)


@dataclass(frozen=True)
class FixedSignal:
    """A user-supplied signal (e.g. an image read from disk)."""

    x: np.ndarray
    shape: Optional[tuple] = None

    @property
    def n(self):
        return self.x.shape[0]

    def generate(self, rng):
        return np.array(self.x, dtype=np.float64)


def _composition(total, parts, rng):
    # uniform over compositions of `total` into `parts` positive integers
    if parts == 1:
        return np.array([total])
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate(([0], cuts, [total])))


def generate_block_sparse(spec: BlockSparseSpec, rng: np.random.Generator) -> np.ndarray:
    """Block-sparse vector with uniformly random block sizes and positions.

    Block sizes form a uniform composition of ``k`` into ``l`` parts.
    Consecutive blocks are separated by at least one zero so the support
    has exactly ``l`` maximal runs; the free zeros are distributed over the
    ``l + 1`` gaps uniformly at random.
    """
    sizes = _composition(spec.k, spec.l, rng)
    free = spec.n - spec.k - (spec.l - 1)
    # distribute `free` zeros over l+1 gaps (weak composition)
    gaps = _composition(free + spec.l + 1, spec.l + 1, rng) - 1
    x = np.zeros(spec.n)
    pos = gaps[0]
    for b, size in enumerate(sizes):
        x[pos : pos + size] = rng.normal(spec.mu0, math.sqrt(spec.tau0), size)
        pos += size + 1 + gaps[b + 1]
    return x


def generate_cluster_image(
    rows: int,
    cols: int,
    target_sparsity: float,
    rng: np.random.Generator,
    mu0: float = 3.0,
    tau0: float = 1.0,
    n_clusters: Optional[int] = None,
) -> np.ndarray:
    """Row-major image of connected blobs covering ``target_sparsity`` of the pixels.

    Each blob starts as a pair of adjacent pixels and grows by repeatedly
    adding a random 4-neighbor of the current support, so every nonzero
    pixel touches another one. Growth stops at the target count or when the
    image is full.
    """
    if not 0 < target_sparsity < 1:
        raise ValueError("target sparsity must lie in (0, 1)")
    n = rows * cols
    target = max(1, int(round(target_sparsity * n)))
    if n_clusters is None:
        n_clusters = int(rng.integers(2, 6))
    n_clusters = max(1, min(n_clusters, target // 2))

    def nbrs(p):
        q, l = divmod(p, cols)
        if l > 0:
            yield p - 1
        if l < cols - 1:
            yield p + 1
        if q > 0:
            yield p - cols
        if q < rows - 1:
            yield p + cols

    support = np.zeros(n, dtype=bool)
    frontier: List[int] = []
    count = 0

    def add(p):
        nonlocal count
        support[p] = True
        count += 1
        frontier.extend(nb for nb in nbrs(p) if not support[nb])

    for c in rng.choice(n, size=n_clusters, replace=False):
        if count >= target:
            break
        if support[c]:
            continue
        add(int(c))
        free_nb = [nb for nb in nbrs(int(c)) if not support[nb]]
        if free_nb and count < target:
            add(free_nb[int(rng.integers(len(free_nb)))])

    while count < target and frontier:
        idx = int(rng.integers(len(frontier)))
        p = frontier[idx]
        frontier[idx] = frontier[-1]
        frontier.pop()
        if not support[p]:
            add(p)

    if count < target:
        logger.warning("cluster image saturated at %d of %d requested pixels", count, target)
    x = np.zeros(n)
    idx = np.flatnonzero(support)
    x[idx] = rng.normal(mu0, math.sqrt(tau0), idx.size)
    return x


def nmse_db(xhat, x) -> float:
    """``20 log10(||xhat - x|| / ||x||)``; exact recovery reports -400 dB."""
    x = np.asarray(x, dtype=np.float64)
    ref = float(np.linalg.norm(x))
    if ref == 0:
        raise ExcludedTrialError("reference signal is zero; NMSE undefined")
    err = float(np.linalg.norm(np.asarray(xhat, dtype=np.float64) - x))
    if err == 0:
        return NMSE_FLOOR_DB
    return max(20.0 * math.log10(err / ref), NMSE_FLOOR_DB)


def pattern_match(xhat, x, tol: float = SUPPORT_TOL) -> bool:
    """True iff the supports ``{|v| >= tol}`` of both vectors coincide."""
    xhat = np.asarray(xhat)
    x = np.asarray(x)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    return bool(np.array_equal(np.abs(xhat) >= tol, np.abs(x) >= tol))


def add_noise_at_snr(Ax: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add Gaussian noise rescaled so ``20 log10(||Ax|| / ||w||)`` is exactly ``snr_db``."""
    w = rng.standard_normal(Ax.shape[0])
    target = float(np.linalg.norm(Ax)) * 10.0 ** (-snr_db / 20.0)
    wn = float(np.linalg.norm(w))
    if wn == 0 or target == 0:
        return Ax.copy()
    return Ax + w * (target / wn)


@dataclass
class TrialRecord:
    seed: tuple
    ratio_index: int
    trial: int
    m_over_n: float
    snr_db: Optional[float]
    algo: str
    nmse_db: Optional[float]
    success: bool
    pattern_success: bool
    iterations: int
    status: str
    wall_seconds: float

    def key(self):
        return (self.ratio_index, self.algo, self.trial)


@dataclass
class AggregateRow:
    ratio: float
    algo: str
    trials: int
    success_rate: float
    pattern_rate: float
    mean_nmse_db: float
    mean_iters: float
    mean_seconds: float


def _algo_config(algo, base: SolverConfig, shape):
    kind = TopologyKind(algo)
    grid = shape if kind is TopologyKind.GRID2D else None
    if kind is TopologyKind.GRID2D and grid is None:
        raise ValueError("the nnspl2d algorithm needs a 2-D signal shape")
    return SolverConfig(
        t_max=base.t_max, eps_toc=base.eps_toc, topology=kind, grid_shape=grid,
        adjacency=base.adjacency if kind is TopologyKind.CUSTOM else None,
        damping=base.damping, snr0=base.snr0, lambda_eps=base.lambda_eps,
        var_floor=base.var_floor, diverge_norm=base.diverge_norm,
    )


def make_problem(signal, ratio: float, seed, snr_db: Optional[float] = None):
    """Draw ``x`` from ``signal`` and an ``round(ratio * n) x n`` measurement of it.

    Returns ``(x, MeasurementModel)``; everything is drawn from ``make_rng(seed)``.
    """
    rng = make_rng(seed)
    n = signal.n
    m = max(1, int(round(ratio * n)))
    x = signal.generate(rng)
    A = generate_matrix(m, n, rng)
    Ax = A @ x
    y = Ax if snr_db is None else add_noise_at_snr(Ax, snr_db, rng)
    return x, MeasurementModel(A, y)


def run_trial(
    ratio_index: int,
    ratio: float,
    trial: int,
    signal,
    algos: Sequence[str],
    base_seed: int,
    snr_db: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    success_db: float = SUCCESS_NMSE_DB,
    support_tol: float = SUPPORT_TOL,
    timing: bool = True,
) -> List[TrialRecord]:
    """Generate one problem instance and solve it with every algorithm.

    All algorithms see the same ``A``, ``x`` and noise, drawn from the
    sub-stream ``(base_seed, ratio_index, trial)``.
    """
    config = config or SolverConfig()
    seed = (int(base_seed), int(ratio_index), int(trial))
    x, mm = make_problem(signal, ratio, seed, snr_db)
    out = []
    for algo in algos:
        cfg = _algo_config(algo, config, signal.shape)
        t0 = time.perf_counter()
        res = solve(mm, cfg)
        elapsed = time.perf_counter() - t0 if timing else 0.0
        try:
            nm = nmse_db(res.xhat, x)
        except ExcludedTrialError:
            nm = None
        ok = res.status is not Status.DIVERGED
        success = ok and nm is not None and nm < success_db
        out.append(
            TrialRecord(
                seed=seed, ratio_index=ratio_index, trial=trial, m_over_n=float(ratio),
                snr_db=snr_db, algo=TopologyKind(algo).value, nmse_db=nm, success=success,
                pattern_success=ok and pattern_match(res.xhat, x, support_tol),
                iterations=res.iterations, status=res.status.value, wall_seconds=elapsed,
            )
        )
    return out


def _run_trial_args(args):
    return run_trial(*args[:-1], **args[-1])


def aggregate(records: Iterable[TrialRecord]) -> List[AggregateRow]:
    """Per-(ratio, algo) means, independent of record order.

    Trials whose NMSE is undefined count as failures and are left out of the
    NMSE mean.
    """
    records = sorted(records, key=TrialRecord.key)
    groups: dict = {}
    for r in records:
        groups.setdefault((r.ratio_index, r.algo), []).append(r)
    rows = []
    for (_, algo), recs in sorted(groups.items()):
        nm = [r.nmse_db for r in recs if r.nmse_db is not None]
        rows.append(
            AggregateRow(
                ratio=recs[0].m_over_n,
                algo=algo,
                trials=len(recs),
                success_rate=sum(r.success for r in recs) / len(recs),
                pattern_rate=sum(r.pattern_success for r in recs) / len(recs),
                mean_nmse_db=float(np.mean(nm)) if nm else float("nan"),
                mean_iters=float(np.mean([r.iterations for r in recs])),
                mean_seconds=float(np.mean([r.wall_seconds for r in recs])),
            )
        )
    return rows


def run_sweep(
    ratios: Sequence[float],
    trials: int,
    signal=None,
    snr_db: Optional[float] = None,
    algos: Sequence[str] = ("nnspl1d", "indep"),
    base_seed: int = 0,
    config: Optional[SolverConfig] = None,
    jobs: int = 1,
    success_db: float = SUCCESS_NMSE_DB,
    support_tol: float = SUPPORT_TOL,
    timing: bool = True,
):
    """Run ``trials`` problems per measurement ratio for every algorithm.

    Returns ``(records, aggregate_rows)``; records are sorted by
    ``(ratio_index, algo, trial)`` whatever the execution order.
    """
    if not len(ratios):
        raise ValueError("ratio grid is empty")
    signal = signal if signal is not None else BlockSparseSpec()
    kw = dict(snr_db=snr_db, config=config, success_db=success_db,
              support_tol=support_tol, timing=timing)
    tasks = [
        (ri, float(r), t, signal, tuple(algos), base_seed, kw)
        for ri, r in enumerate(ratios)
        for t in range(trials)
    ]
    records: List[TrialRecord] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(_run_trial_args, tasks, chunksize=max(1, len(tasks) // (4 * jobs))):
                records.extend(recs)
    else:
        for task in tasks:
            records.extend(_run_trial_args(task))
    records.sort(key=TrialRecord.key)
    return records, aggregate(records)


def record_dict(r: TrialRecord) -> dict:
    d = asdict(r)
    d["seed"] = ":".join(str(s) for s in r.seed)
    return d
