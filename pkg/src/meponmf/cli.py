"""Command-line interface: ``fit``, ``true-k``, ``bench`` and ``datagen``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 solver error, 4 too few phase transitions for model selection. Messages
go to standard error; results go to files only.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import mu_nmf
from .core import (
    DataMatrix,
    Orientation,
    SolverConfig,
    format_float,
    load_matrix,
    write_matrix_csv,
)
from .datagen import GammaSpec, clustered_synthetic, gamma_synthetic, hierarchical_spec
from .errors import ConfigError, DataError, InsufficientTransitions, OnmfError, SolverError
from .facade import fit
from .metrics import evaluate, timed
from .selection import critical_beta_rows, persistence

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER, EXIT_TRANSITIONS = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved here for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    config: dict
    input: str | None
    output_dir: str
    command: str
    started: str
    finished: str = ""
    tool_version: str = __version__
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def solver_config(self) -> SolverConfig:
        return SolverConfig.from_dict(self.config)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _add_solver_flags(p, k_flag="--k-max", k_default=None):
    p.add_argument(k_flag, dest="k_max", type=int, default=k_default, required=k_default is None)
    p.add_argument("--orthogonal", choices=["h", "w"], default="h")
    p.add_argument("--variant", choices=["optimal", "capacity"], default="optimal")
    p.add_argument("--capacities", type=_float_list)
    p.add_argument("--beta-init", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--growth", type=float, default=1.05, help="geometric temperature step")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--delta", type=float, default=1e-4, help="split perturbation, relative to data scale")
    p.add_argument("--seed", type=int, default=0)


def _config_from_args(args, variant=None) -> SolverConfig:
    variant = variant or args.variant
    caps = args.capacities
    if variant == "capacity" and caps is None:
        raise UsageError("--variant capacity requires --capacities")
    return SolverConfig(
        k_max=args.k_max,
        beta_init=args.beta_init,
        beta_max=args.beta_max,
        gamma=args.growth,
        inner_tol=args.tol,
        inner_max_iters=args.max_iters,
        perturb_delta=args.delta,
        variant=variant,
        capacities=caps if variant == "capacity" else None,
        orientation=args.orthogonal,
        seed=args.seed,
    )


def _load_input(path, weights_path=None) -> DataMatrix:
    return load_matrix(path, weights_path or None)


def _write_critical_betas(path: Path, transitions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "beta_cr", "log_ratio"])
        for m, b, lr in critical_beta_rows(transitions):
            w.writerow([m, format_float(b), "" if lr is None else format_float(lr)])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_fit(args) -> int:
    manifest_in = None
    if args.config:
        try:
            manifest_in = RunManifest.from_json(Path(args.config).read_text())
        except (OSError, ValueError, TypeError) as exc:
            raise DataError(f"cannot read manifest {args.config}: {exc}") from exc
        cfg = manifest_in.solver_config()
    else:
        if args.k_max is None:
            raise UsageError("--k-max is required unless --config is given")
        cfg = _config_from_args(args)
    input_path = args.input or (manifest_in.input if manifest_in else None)
    if not input_path:
        raise UsageError("--input is required")
    out = Path(args.out)
    started = _now()
    X = _load_input(input_path, args.weights)
    result = fit(X, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "W.csv", result.W)
    write_matrix_csv(out / "H.csv", result.H)
    metrics = result.metrics.to_dict()
    metrics.update(
        k=cfg.k_max,
        k_distinct=result.k_distinct,
        variant=cfg.variant.value,
        orientation=cfg.orientation.value,
        seed=cfg.seed,
        constrained_factor="H" if cfg.orientation is Orientation.H_ORTHOGONAL else "W",
    )
    if result.capacity_residuals is not None:
        metrics["capacity_residuals"] = result.capacity_residuals
        metrics["max_capacity_residual_over_schedule"] = max(
            r.capacity_residual for r in result.run.reports if r.capacity_residual is not None)
    _write_json(out / "metrics.json", metrics)
    _write_critical_betas(out / "critical_betas.csv", result.transitions)
    manifest = RunManifest(cfg.to_dict(), str(input_path), str(out), "fit", started, _now())
    (out / "manifest.json").write_text(manifest.to_json() + "\n")
    return EXIT_OK


def cmd_true_k(args) -> int:
    if args.k_max < 2:
        raise UsageError("true-k needs --k-max >= 2")
    cfg = _config_from_args(args)
    X = _load_input(args.input, args.weights)
    result = fit(X, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_critical_betas(out / "critical_betas.csv", result.transitions)
    report = persistence(result.transitions)
    _write_json(out / "persistence.json", report.to_dict())
    return EXIT_OK


def _bench_matrix(args) -> DataMatrix:
    if args.input:
        return _load_input(args.input)
    if args.gamma_d is None or args.gamma_n is None:
        raise UsageError("bench needs --input or both --gamma-d and --gamma-n")
    return gamma_synthetic(GammaSpec(args.gamma_d, args.gamma_n, noise_amplitude=args.noise,
                                     seed=args.data_seed))


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if any(v not in ("optimal", "capacity") for v in variants):
        raise UsageError(f"unknown variant in --variants {args.variants!r}")
    X = _bench_matrix(args)
    if "capacity" in variants and args.capacities is None:
        # equal l0 budget per feature
        args.capacities = tuple([1.0 / args.k_max] * args.k_max)
    rows = []
    for v in variants:
        cfg = _config_from_args(args, variant=v)
        runs = [fit(X, SolverConfig.from_dict({**cfg.to_dict(), "seed": cfg.seed + r})).metrics
                for r in range(args.reps)]
        rows.append(("MEP_ONMF" if v == "optimal" else "MEP_ONMF_capacity", runs))
    orientation = Orientation(args.orthogonal)
    if args.mu_iters > 0:
        runs = []
        for r in range(args.reps):
            pair, secs = timed(mu_nmf, X, args.k_max, iters=args.mu_iters, seed=args.seed + r,
                               orientation=orientation)
            runs.append(evaluate(X, pair, secs))
        rows.append(("NMF", runs))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "E_pct", "O_pct", "S_pct", "T_sec"])
        for name, runs in rows:
            vals = np.mean([[m.recon_error_pct, m.orthogonality_pct, m.sparsity_pct,
                             m.elapsed_seconds] for m in runs], axis=0)
            w.writerow([name, *(format_float(v) for v in vals)])
    return EXIT_OK


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def cmd_datagen(args) -> int:
    out = Path(args.out)
    if args.kind == "gamma":
        spec = GammaSpec(args.d, args.n, args.shape, args.scale, args.noise, args.seed)
        X = gamma_synthetic(spec)
        meta = {"kind": "gamma", "spec": spec.to_dict(), "seed": args.seed,
                "generator": "numpy Philox4x64"}
    else:
        if args.centers < 1 or args.sub < 0 or args.per_leaf < 1:
            raise UsageError("--centers and --per-leaf must be >= 1, --sub >= 0")
        spec = hierarchical_spec(args.centers, args.sub, args.per_leaf, args.spread,
                                 args.sub_offset, args.baseline, args.seed)
        data = clustered_synthetic(spec)
        X = data.matrix
        labels_path = out.with_suffix(".labels.csv")
        meta = {"kind": "clusters", "spec": spec.to_dict(), "seed": args.seed,
                "generator": "numpy Philox4x64", "labels": labels_path.name}
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out, X.original())
    if args.kind == "clusters":
        # row 0: top-level label, row 1: sub-cluster label, one column per point
        np.savetxt(labels_path, np.vstack([data.labels, data.sub_labels]), fmt="%d", delimiter=",")
    _write_json(_sidecar(out), meta)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meponmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="factor a matrix")
    p.add_argument("--input")
    p.add_argument("--weights", help="single-line CSV of column weights summing to 1")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="manifest.json of an earlier run; its config replaces solver flags")
    _add_solver_flags(p, k_default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_fit, k_max=None)

    p = sub.add_parser("true-k", help="estimate the number of features from persistence")
    p.add_argument("--input", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_true_k)

    p = sub.add_parser("bench", help="compare against multiplicative-update NMF")
    p.add_argument("--input")
    p.add_argument("--gamma-d", type=int)
    p.add_argument("--gamma-n", type=int)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--data-seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--variants", default="optimal", help="comma list of optimal,capacity")
    p.add_argument("--mu-iters", type=int, default=1000, help="0 skips the NMF baseline")
    p.add_argument("--out", required=True)
    _add_solver_flags(p, k_flag="--k")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("datagen", help="write a synthetic matrix")
    kinds = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    g = kinds.add_parser("gamma")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--shape", type=float, default=10.0)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    c = kinds.add_parser("clusters")
    c.add_argument("--centers", type=int, default=3)
    c.add_argument("--sub", type=int, default=3, help="sub-clusters per centre; 0 for flat")
    c.add_argument("--per-leaf", type=int, default=20)
    c.add_argument("--spread", type=float, default=0.01)
    c.add_argument("--sub-offset", type=float, default=0.15)
    c.add_argument("--baseline", type=float, default=0.1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    for q in (g, c):
        q.set_defaults(func=cmd_datagen)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientTransitions as exc:
        print(f"model selection failed: {exc}; the data showed no resolvable feature structure "
              "below --k-max", file=sys.stderr)
        return EXIT_TRANSITIONS
    except (DataError, OSError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OnmfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
