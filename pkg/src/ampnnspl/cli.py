"""Command-line front end.

Subcommands::

    ampnnspl recover  --matrix A.csv --measurements y.csv --out xhat.csv
    ampnnspl sweep    --out results.csv [--trials-out trials.csv]
    ampnnspl image    (--pgm img.pgm | --synthetic 32x32) --out recon.pgm --metrics m.csv
    ampnnspl generate --ratio 0.6 --matrix A.csv --signal x.csv --measurements y.csv

Settings come from an optional ``--config`` file of ``key = value`` lines,
overridden by ``--set key=value`` and by the dedicated flags. Exit codes:
0 success, 1 divergence, 2 usage or dimension error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import fileio
from .amp import Status, solve
from .bench import (
    BlockSparseSpec,
    ClusterImageSpec,
    ExcludedTrialError,
    FixedSignal,
    make_problem,
    nmse_db,
    pattern_match,
    record_dict,
    run_sweep,
)
from .model import LAMBDA_EPS, VAR_FLOOR, InvalidModelError, MeasurementModel, SolverConfig, TopologyKind

logger = logging.getLogger("ampnnspl")

EXIT_OK, EXIT_DIVERGED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

SWEEP_HEADER = [
    "ratio", "algo", "trials", "success_rate", "pattern_rate",
    "mean_nmse_db", "mean_iters", "mean_seconds",
]
TRIAL_HEADER = [
    "seed", "ratio", "trial", "algo", "snr_db", "nmse_db", "success",
    "pattern_success", "iterations", "status", "wall_seconds",
]
IMAGE_HEADER = [
    "ratio", "trial", "algo", "snr_db", "nmse_db", "success",
    "pattern_success", "iterations", "status",
]

ALGO_CHOICES = [k.value for k in TopologyKind if k is not TopologyKind.CUSTOM] + ["custom"]


class UsageError(Exception):
    pass


def _floats(text):
    text = text.strip()
    return [float(t) for t in text.split(",") if t.strip()] if text else []


def _strs(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _opt_float(text):
    text = text.strip().lower()
    return None if text in ("", "none", "noiseless") else float(text)


def _opt_str(text):
    text = text.strip()
    return text or None


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _shape(text):
    text = text.strip().lower()
    if not text or text == "none":
        return None
    r, _, c = text.partition("x")
    return (int(r), int(c))


@dataclass
class RunConfig:
    """Every setting the CLI understands; defaults follow the published protocol."""

    t_max: int = 200
    eps_toc: float = 1e-6
    snr0: float = 100.0
    damping: float = 1.0
    lambda_eps: float = LAMBDA_EPS
    var_floor: float = VAR_FLOOR
    algo: List[str] = field(default_factory=lambda: ["nnspl1d", "indep"])
    grid: Optional[tuple] = None
    adjacency: Optional[str] = None
    n: int = 100
    k: int = 25
    l: int = 4
    mu0: float = 3.0
    tau0: float = 1.0
    ratios: List[float] = field(
        default_factory=lambda: [0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6]
    )
    trials: int = 100
    snr_db: Optional[float] = None
    seed: int = 0
    jobs: int = 1
    nmse_threshold: float = -60.0
    support_tol: float = 1e-4
    timing: bool = True
    rows: int = 32
    cols: int = 32
    sparsity: float = 0.12
    out: Optional[str] = None
    trials_out: Optional[str] = None
    metrics: Optional[str] = None

    _PARSERS = {
        "t_max": int, "eps_toc": float, "snr0": float, "damping": float,
        "lambda_eps": float, "var_floor": float, "algo": _strs, "grid": _shape,
        "adjacency": _opt_str, "n": int, "k": int, "l": int, "mu0": float,
        "tau0": float, "ratios": _floats, "trials": int, "snr_db": _opt_float,
        "seed": int, "jobs": int, "nmse_threshold": float, "support_tol": float,
        "timing": _bool, "rows": int, "cols": int, "sparsity": float,
        "out": _opt_str, "trials_out": _opt_str, "metrics": _opt_str,
    }

    def update(self, key, text, where="--set"):
        key = key.strip().replace("-", "_")
        if key not in self._PARSERS:
            raise UsageError(f"{where}: unknown config key {key!r}")
        try:
            setattr(self, key, self._PARSERS[key](text))
        except ValueError as exc:
            raise UsageError(f"{where}: bad value for {key}: {exc}") from None

    def solver_config(self, algo=None, grid=None, adjacency=None) -> SolverConfig:
        algo = algo or self.algo[0]
        return SolverConfig(
            t_max=self.t_max, eps_toc=self.eps_toc, topology=algo,
            grid_shape=grid if grid is not None else self.grid,
            adjacency=adjacency, damping=self.damping, snr0=self.snr0,
            lambda_eps=self.lambda_eps, var_floor=self.var_floor,
        )


def load_config(args, **defaults) -> RunConfig:
    """Defaults, then the config file, then ``--set``, then dedicated flags."""
    cfg = RunConfig(**defaults)
    if getattr(args, "config", None):
        for key, (value, lineno) in fileio.read_config(args.config).items():
            cfg.update(key, value, where=f"{args.config}:{lineno}")
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        cfg.update(key, value)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    for a in cfg.algo:
        if a not in ALGO_CHOICES:
            raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(ALGO_CHOICES)}")
    return cfg


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return fileio.format_float(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _summary(res) -> str:
    hp = res.hp_final
    return (
        f"iterations={res.iterations} status={res.status.value} "
        f"mu0={fileio.format_float(hp.mu0)} tau0={fileio.format_float(hp.tau0)} "
        f"delta0={fileio.format_float(hp.delta0)} mean_lambda={fileio.format_float(hp.mean_lambda)}"
    )


# -- subcommands -------------------------------------------------------------


def cmd_recover(args) -> int:
    cfg = load_config(args, algo=[TopologyKind.CHAIN1D.value])
    A = fileio.read_array(args.matrix)
    y = fileio.read_vector(args.measurements)
    if A.shape[0] != y.shape[0]:
        raise InvalidModelError(
            f"{args.matrix} has {A.shape[0]} rows but {args.measurements} has {y.shape[0]} entries"
        )
    mm = MeasurementModel(A, y)
    algo = cfg.algo[0]
    adjacency = None
    if algo == TopologyKind.CUSTOM.value:
        if not cfg.adjacency:
            raise UsageError("--algo custom needs --adjacency FILE")
        adjacency = fileio.read_adjacency(cfg.adjacency)
    res = solve(mm, cfg.solver_config(algo, adjacency=adjacency))
    if cfg.out:
        fileio.write_array(cfg.out, res.xhat)
    print(_summary(res))
    return EXIT_DIVERGED if res.status is Status.DIVERGED else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    if not cfg.out:
        raise UsageError("sweep needs --out FILE")
    rows, records = [], []
    if cfg.ratios and cfg.trials > 0:
        for a in cfg.algo:
            if a in (TopologyKind.GRID2D.value, TopologyKind.CUSTOM.value):
                raise UsageError(f"algorithm {a} is not available for 1-D block-sparse sweeps")
        spec = BlockSparseSpec(n=cfg.n, k=cfg.k, l=cfg.l, mu0=cfg.mu0, tau0=cfg.tau0)
        records, agg = run_sweep(
            cfg.ratios, cfg.trials, spec, snr_db=cfg.snr_db, algos=cfg.algo,
            base_seed=cfg.seed, config=cfg.solver_config(cfg.algo[0]), jobs=cfg.jobs,
            success_db=cfg.nmse_threshold, support_tol=cfg.support_tol, timing=cfg.timing,
        )
        rows = [[getattr(r, h) for h in SWEEP_HEADER] for r in agg]
    _write_csv(cfg.out, SWEEP_HEADER, rows)
    if cfg.trials_out:
        trial_rows = []
        for r in records:
            d = record_dict(r)
            d["ratio"] = r.m_over_n
            trial_rows.append([d[h] for h in TRIAL_HEADER])
        _write_csv(cfg.trials_out, TRIAL_HEADER, trial_rows)
    for r in rows:
        logger.info("ratio=%s algo=%s success=%s nmse=%s", *(_fmt(v) for v in (r[0], r[1], r[3], r[5])))
    return EXIT_OK


def cmd_image(args) -> int:
    cfg = load_config(args, algo=[TopologyKind.GRID2D.value], ratios=[0.5], trials=1)
    if args.pgm:
        pixels, maxval = fileio.read_pgm(args.pgm)
        shape = pixels.shape
        signal = FixedSignal(fileio.image_to_signal(pixels, maxval), shape)
    else:
        shape = args.synthetic or (cfg.rows, cfg.cols)
        signal = ClusterImageSpec(shape[0], shape[1], cfg.sparsity, cfg.mu0, cfg.tau0)
    adjacency = fileio.read_adjacency(cfg.adjacency) if cfg.adjacency else None

    rows = []
    recon = None
    diverged = False
    for ri, ratio in enumerate(cfg.ratios):
        for trial in range(cfg.trials):
            x, mm = make_problem(signal, ratio, (cfg.seed, ri, trial), cfg.snr_db)
            for algo in cfg.algo:
                res = solve(mm, cfg.solver_config(algo, grid=shape, adjacency=adjacency))
                if recon is None:
                    recon = res.xhat
                diverged |= res.status is Status.DIVERGED
                try:
                    nm = nmse_db(res.xhat, x)
                except ExcludedTrialError as exc:
                    print(f"ratio={ratio} trial={trial} algo={algo}: excluded ({exc})", file=sys.stderr)
                    nm = None
                ok = res.status is not Status.DIVERGED
                rows.append([
                    ratio, trial, algo, cfg.snr_db, nm,
                    ok and nm is not None and nm < cfg.nmse_threshold,
                    ok and pattern_match(res.xhat, x, cfg.support_tol),
                    res.iterations, res.status.value,
                ])
                print(f"ratio={_fmt(ratio)} trial={trial} algo={algo} nmse_db={_fmt(nm)} {_summary(res)}")
    if cfg.out and recon is not None:
        fileio.write_pgm(cfg.out, fileio.signal_to_image(recon, shape))
    if cfg.metrics:
        _write_csv(cfg.metrics, IMAGE_HEADER, rows)
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args)
    spec = BlockSparseSpec(n=cfg.n, k=cfg.k, l=cfg.l, mu0=cfg.mu0, tau0=cfg.tau0)
    x, mm = make_problem(spec, args.ratio, cfg.seed, cfg.snr_db)
    fileio.write_array(args.matrix, mm.A)
    fileio.write_array(args.measurements, mm.y)
    if args.signal:
        fileio.write_array(args.signal, x)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def _shape_arg(text):
    try:
        shape = _shape(text)
    except ValueError:
        shape = None
    if shape is None or min(shape) < 1:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}")
    return shape


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampnnspl",
        description="Clustered sparse recovery with AMP and nearest-neighbor sparsity learning.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, algo_help):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
        p.add_argument("--seed", type=int)
        p.add_argument("--algo", type=_strs, metavar="ALGO[,ALGO...]", help=algo_help)
        p.add_argument("--out")
        p.add_argument("--t-max", dest="t_max", type=int)
        p.add_argument("--eps-toc", dest="eps_toc", type=float)
        p.add_argument("--damping", type=float)

    p = sub.add_parser("recover", help="recover x from a matrix and measurement file")
    common(p, "topology: nnspl1d, nnspl2d (with --grid), fullset, indep, custom (with --adjacency)")
    p.add_argument("--matrix", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--grid", type=_shape_arg, metavar="ROWSxCOLS")
    p.add_argument("--adjacency", help="adjacency list file ('i: j k ...' per line)")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("sweep", help="success rate / NMSE versus M/N on block-sparse signals")
    common(p, "comma-separated algorithms (nnspl1d, fullset, indep)")
    p.add_argument("--ratios", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--trials-out", dest="trials_out")
    p.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="write zeros for wall time so output is byte-reproducible")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("image", help="recover a 2-D image with the grid topology")
    common(p, "comma-separated algorithms (default nnspl2d)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--pgm", help="8-bit grayscale PGM (P2 or P5)")
    src.add_argument("--synthetic", type=_shape_arg, metavar="ROWSxCOLS")
    p.add_argument("--sparsity", type=float)
    p.add_argument("--ratios", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--adjacency")
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("generate", help="write a seeded block-sparse test problem")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, default=0.6)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--matrix", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--signal")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, InvalidModelError, fileio.FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
