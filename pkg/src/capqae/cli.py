"""Command-line front end.

Subcommands:

* ``run``: price the dataset's cap with the chosen methods over a grid of path
  counts and trials, writing ``summary.csv``, ``convergence.csv``,
  ``qubits.csv`` (plus ``sweep.csv`` with ``--sweep``) and SVG figures.
* ``qubits``: write the qubit-count table for ranges of ``n`` and ``T``.
* ``replay``: re-run the configuration embedded in an artifact.

Every flag of ``run`` can also be set through an environment variable named
``CAPQAE_`` plus the upper-cased flag name (``CAPQAE_PATHS=100,1000``);
command-line flags take precedence.  Failures print one JSON object to stderr
and exit with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import plotting, report
from .datasets import benchmark_path, parse_dataset
from .errors import CapacityError, CapQaeError, ContractViolation, DatasetError, EstimationError
from .lmm import CapSpec, black76_cap
from .pricers import MethodConfig, qubit_count, qubit_sweep_experiment, run_trials

ENV_PREFIX = "CAPQAE_"
METHOD_CHOICES = ("classical", "hybrid", "pure", "all")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a ``run``; embedded in every artifact."""

    dataset: str = "benchmark"
    dataset_sha256: str = ""
    methods: tuple = ("classical",)
    paths: tuple = (1000,)
    qubits: int = 3
    epsilon: float = 0.01
    alpha: float = 0.05
    trials: int = 1
    seed: int = 0
    mode: str = "exact"
    shots: int = 100
    encoding: str = "exact"
    strike: float = None
    first: int = None
    last: int = None
    sweep: tuple = ()
    sweep_trials: int = 10
    allow_large: bool = False
    plots: bool = True
    qubit_n_max: int = 6
    qubit_t_max: int = 10

    def __post_init__(self):
        for name in ("methods", "paths", "sweep"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.methods or any(m not in ("classical", "hybrid", "pure") for m in self.methods):
            raise ContractViolation("methods must be drawn from classical, hybrid, pure")
        if not self.paths or any(int(m) < 1 for m in self.paths):
            raise ContractViolation("paths must be positive integers")
        if self.trials < 1:
            raise ContractViolation("trials must be >= 1")
        if self.sweep and self.sweep_trials < 2:
            raise ContractViolation("sweep needs at least 2 trials")
        if not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be an unsigned 64-bit integer")
        # surface invalid estimator settings before any work starts
        self.method_config()

    def method_config(self, method="classical"):
        return MethodConfig(method=method, n_qubits=self.qubits, epsilon=self.epsilon,
                            alpha=self.alpha, seed=self.seed, mode=self.mode, shots=self.shots,
                            encoding=self.encoding)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ContractViolation(f"unknown run_config keys {sorted(unknown)}")
        return cls(**data)


def _resolve_dataset(name):
    if name == "benchmark":
        return benchmark_path().read_text(encoding="utf-8")
    try:
        return Path(name).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {name}: {exc.strerror}") from exc


def _cap_spec(cfg, dataset):
    base = dataset.cap
    if base is None:
        if cfg.strike is None:
            raise ContractViolation("dataset has no cap; pass --strike")
        base = CapSpec(strike=cfg.strike)
    return CapSpec(
        strike=base.strike if cfg.strike is None else cfg.strike,
        first=base.first if cfg.first is None else cfg.first,
        last=base.last if cfg.last is None else cfg.last,
        notional=base.notional,
    )


def execute(cfg, out_dir, workers=1):
    """Run ``cfg`` and write its artifacts to ``out_dir``; returns the written paths.

    If ``cfg.dataset_sha256`` is set the dataset text must hash to it.
    """
    text = _resolve_dataset(cfg.dataset)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if cfg.dataset_sha256 and cfg.dataset_sha256 != digest:
        raise DatasetError("dataset content differs from the recorded run", "dataset_sha256")
    cfg = RunConfig.from_dict({**cfg.to_dict(), "dataset_sha256": digest})
    dataset = parse_dataset(text, allow_large=cfg.allow_large)
    spec = _cap_spec(cfg, dataset)
    analytic = black76_cap(dataset, spec)
    config = cfg.to_dict()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_trials(dataset, spec, cfg.methods, cfg.paths, cfg.trials, cfg.seed,
                         cfg.method_config(), workers=workers)
    written = {}
    written["convergence"] = out / "convergence.csv"
    report.write_csv(written["convergence"], config, report.CONVERGENCE_COLUMNS,
                     report.convergence_rows(records))
    written["summary"] = out / "summary.csv"
    report.write_csv(written["summary"], config, report.SUMMARY_COLUMNS,
                     report.summary_rows(records, analytic))
    counts = [((n, T), qubit_count(n, T)) for n in range(1, cfg.qubit_n_max + 1)
              for T in range(1, cfg.qubit_t_max + 1)]
    written["qubits"] = out / "qubits.csv"
    report.write_csv(written["qubits"], config, report.QUBIT_COLUMNS, report.qubit_rows(counts))
    sweep = None
    if cfg.sweep:
        sweep = qubit_sweep_experiment(dataset, spec, cfg.sweep, cfg.sweep_trials,
                                       cfg.method_config("pure"), seed=cfg.seed)
        written["sweep"] = out / "sweep.csv"
        report.write_csv(written["sweep"], config, report.SWEEP_COLUMNS, report.sweep_rows(sweep))
    if cfg.plots:
        written["errors_plot"] = out / "errors.svg"
        plotting.plot_error_curves(records, written["errors_plot"])
        written["price_plot"] = out / "price.svg"
        plotting.plot_price_vs_m(records, analytic, written["price_plot"])
        if sweep:
            written["sweep_plot"] = out / "sweep.svg"
            plotting.plot_qubit_sweep(sweep, written["sweep_plot"])
    return written


def _ints(text):
    return tuple(int(float(t)) for t in str(text).split(",") if t.strip())


def _range(text):
    lo, _, hi = str(text).partition("-")
    return range(int(lo), int(hi or lo) + 1)


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _flag(value):
    return str(value).lower() in ("1", "true", "yes", "on")


def build_parser():
    parser = argparse.ArgumentParser(prog="capqae", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="price a cap and write CSV/SVG artifacts")
    run.add_argument("--dataset", default=_env("dataset", "benchmark"),
                     help="dataset YAML path or 'benchmark' (bundled)")
    run.add_argument("--method", default=_env("method", "all"), choices=METHOD_CHOICES)
    run.add_argument("--paths", default=_env("paths", "100,1000"), type=_ints,
                     help="comma-separated path counts M")
    run.add_argument("--qubits", default=_env("qubits", 3), type=int)
    run.add_argument("--epsilon", default=_env("epsilon", 0.01), type=float)
    run.add_argument("--alpha", default=_env("alpha", 0.05), type=float)
    run.add_argument("--trials", default=_env("trials", 2), type=int)
    run.add_argument("--seed", default=_env("seed", 0), type=int)
    run.add_argument("--mode", default=_env("mode", "exact"), choices=("exact", "shots"))
    run.add_argument("--shots", default=_env("shots", 100), type=int)
    run.add_argument("--encoding", default=_env("encoding", "exact"), choices=("exact", "linear"))
    run.add_argument("--strike", default=_env("strike", None), type=float)
    run.add_argument("--first", default=_env("first", None), type=int)
    run.add_argument("--last", default=_env("last", None), type=int)
    run.add_argument("--sweep", default=_env("sweep", ""), type=_ints,
                     help="qubit counts for a pure-quantum shot-mode sweep")
    run.add_argument("--sweep-trials", default=_env("sweep_trials", 10), type=int)
    run.add_argument("--threads", default=_env("threads", 1), type=int)
    run.add_argument("--allow-large", action="store_true",
                     default=_flag(_env("allow_large", "false")),
                     help="accept rates or vols above 1.0")
    run.add_argument("--no-plots", action="store_true", default=_flag(_env("no_plots", "false")))
    run.add_argument("--out", default=_env("out", "capqae-out"))

    qub = sub.add_parser("qubits", help="write the qubit-count table")
    qub.add_argument("--n", default="1-6", type=_range, help="range such as 1-6")
    qub.add_argument("--T", default="1-10", type=_range, help="range such as 1-10")
    qub.add_argument("--out", default="qubits.csv")

    rep = sub.add_parser("replay", help="re-run the configuration embedded in an artifact")
    rep.add_argument("artifact")
    rep.add_argument("--threads", default=1, type=int)
    rep.add_argument("--out", required=True)
    return parser


def _config_from_args(args):
    methods = ("classical", "hybrid", "pure") if args.method == "all" else (args.method,)
    return RunConfig(
        dataset=args.dataset, methods=methods, paths=tuple(args.paths), qubits=args.qubits,
        epsilon=args.epsilon, alpha=args.alpha, trials=args.trials, seed=args.seed,
        mode=args.mode, shots=args.shots, encoding=args.encoding, strike=args.strike,
        first=args.first, last=args.last, sweep=tuple(args.sweep),
        sweep_trials=args.sweep_trials, allow_large=args.allow_large, plots=not args.no_plots,
    )


def _error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, CapacityError):
        rec["required_qubits"] = exc.required_qubits
    if isinstance(exc, EstimationError):
        rec["interval"] = list(exc.interval)
        rec["rounds"] = exc.rounds
    return rec


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            written = execute(_config_from_args(args), args.out, workers=args.threads)
        elif args.command == "qubits":
            counts = [((n, T), qubit_count(n, T)) for n in args.n for T in args.T]
            config = {"command": "qubits", "n": [args.n.start, args.n.stop - 1],
                      "T": [args.T.start, args.T.stop - 1]}
            report.write_csv(args.out, config, report.QUBIT_COLUMNS, report.qubit_rows(counts))
            written = {"qubits": Path(args.out)}
        else:
            cfg = RunConfig.from_dict(report.read_config(args.artifact))
            written = execute(cfg, args.out, workers=args.threads)
    except (CapQaeError, ValueError, OSError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return 1
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
