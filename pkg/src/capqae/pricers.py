"""Cap pricing by classical Monte Carlo, hybrid MC + QAE, and pure QAE.

Seed derivation: one experiment seed drives everything.  Run ``(trial, M)``
owns ``RngStream(seed, (trial, M))``; caplet ``i`` of that run draws its paths
from ``.child(i)`` whichever method is used, so the hybrid pricer's classical
prefix reuses the classical estimator's draws for the first ``i - 1`` periods
(common random numbers).  Shot noise of QAE draws from ``.child(i, 1 + path)``
(hybrid) and ``.child(i, 0)`` (pure quantum).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import ndtri

from .amplitude import (
    DEFAULT_FLOOR,
    DEFAULT_WIDTH,
    CapletProblemBuilder,
    discretize_lognormal,
    iqae,
    postprocess_payoff,
)
from .errors import CapacityError, ContractViolation, EstimationError
from .lmm import black76_cap, caplet_vol
from .montecarlo import PriceEstimate, RngStream, mc_cap_price, simulate_forward

__all__ = [
    "MethodConfig",
    "ConvergenceRecord",
    "SweepResult",
    "analytic_cap_price",
    "classical_cap_price",
    "hybrid_cap_price",
    "pure_quantum_cap_price",
    "price",
    "qubit_count",
    "convergence_experiment",
    "run_trials",
    "qubit_sweep_experiment",
]

METHOD_TAGS = {"classical": "classical", "hybrid": "hybrid", "pure": "pure-quantum",
               "pure-quantum": "pure-quantum"}
METHOD_ORDER = ("classical", "hybrid", "pure-quantum")
DEFAULT_MAX_QUBITS = 24


@dataclass(frozen=True)
class MethodConfig:
    """Settings of one estimator.

    Attributes:
        method: ``classical``, ``hybrid`` or ``pure-quantum`` (``pure`` accepted).
        n_paths: Monte Carlo paths (classical and hybrid).
        n_qubits: qubits per year of maturity.
        epsilon: IQAE target half-width.
        alpha: IQAE failure probability.
        mode: ``exact`` or ``shots``.
        shots: shots per IQAE round in shots mode.
        c_approx: payoff encoding scale.
        encoding: ``exact`` per-state angles or ``linear`` small-angle encoding.
        width: grid half-width in standard deviations.
        floor: lower grid bound.
        max_qubits: statevector budget per problem.
    """

    method: str = "classical"
    n_paths: int = 1000
    n_qubits: int = 3
    epsilon: float = 0.01
    alpha: float = 0.05
    seed: int = 0
    mode: str = "exact"
    shots: int = 100
    c_approx: float = 0.25
    encoding: str = "exact"
    width: float = DEFAULT_WIDTH
    floor: float = DEFAULT_FLOOR
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        if self.method not in METHOD_TAGS:
            raise ContractViolation(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", METHOD_TAGS[self.method])
        if self.n_qubits < 1:
            raise ContractViolation("n_qubits must be >= 1")
        if self.n_paths < 1:
            raise ContractViolation("n_paths must be >= 1")
        if self.mode not in ("exact", "shots"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if self.encoding not in ("exact", "linear"):
            raise ContractViolation(f"unknown encoding {self.encoding!r}")
        if not 0.0 < self.epsilon < 0.5 or not 0.0 < self.alpha < 1.0:
            raise ContractViolation("need 0 < epsilon < 0.5 and 0 < alpha < 1")

    def builder(self):
        return CapletProblemBuilder(self.c_approx, exact=self.encoding == "exact")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ConvergenceRecord:
    method: str
    M: int
    trial: int
    estimate: float
    abs_error: float

    def __post_init__(self):
        if not self.abs_error >= 0.0:
            raise ContractViolation("abs_error must be non-negative")


@dataclass(frozen=True)
class SweepResult:
    n_qubits: int
    trials: int
    mean: float
    std: float
    ci_low: float
    ci_high: float
    analytic: float


def analytic_cap_price(dataset, spec):
    return PriceEstimate(black76_cap(dataset, spec), 0.0, 0, "analytic")


def classical_cap_price(dataset, spec, cfg, rng=None):
    rng = RngStream(cfg.seed) if rng is None else rng
    return mc_cap_price(dataset, spec, cfg.n_paths, rng)


def _qae_rng(rng, cfg, *ids):
    return rng.child(*ids).generator() if cfg.mode == "shots" else None


def _solve(dist, strike, cfg, builder, rng):
    """Undiscounted ``E[(X - K)^+]`` and its standard error for one problem."""
    op, encoding, prepared = builder.build(dist, strike)
    result = iqae(op, cfg.epsilon, cfg.alpha, cfg.mode, cfg.shots, rng, prepared=prepared)
    est = postprocess_payoff(result, encoding, 1.0, 1.0)
    return est.value, est.std_error, result.oracle_calls


def hybrid_cap_price(dataset, spec, cfg, rng=None):
    """Monte Carlo to the second-last reset, QAE over the final period.

    For caplet ``i`` each path of ``F_i`` is simulated through periods
    ``1..i-1``; the last period is the lognormal
    ``ln F_i(T_{i-1}) ~ N(ln F_path - s^2 / 2, s^2)`` with
    ``s^2 = sigma_{i,i}^2 (T_{i-1} - T_{i-2})``, discretized on ``cfg.n_qubits``
    qubits and estimated by IQAE.  Caplet 1 has no Monte Carlo stage.  The
    reported standard error combines the path dispersion with the mean
    per-path QAE error.
    """
    spec.check(dataset.tenor)
    if cfg.n_qubits + 2 > cfg.max_qubits:
        raise CapacityError(f"hybrid problem needs {cfg.n_qubits + 2} qubits", cfg.n_qubits + 2)
    rng = RngStream(cfg.seed) if rng is None else rng
    tenor = dataset.tenor
    builder = cfg.builder()
    values, errors = [], []
    calls = 0
    for i in spec.caplets:
        start, end = tenor.period_bounds(i)
        s = dataset.vols.sigma(i, i) * math.sqrt(end - start)
        stream = rng.child(i)
        if i == 1:
            prefix = np.array([dataset.curve[1]])
        else:
            prefix = simulate_forward(dataset, i, stream, cfg.n_paths, n_periods=i - 1)
        payoffs = np.empty(prefix.size)
        qae_se = np.empty(prefix.size)
        for path, f in enumerate(prefix):
            dist = discretize_lognormal(math.log(f) - 0.5 * s * s, s, cfg.n_qubits,
                                        cfg.width, cfg.floor)
            try:
                payoffs[path], qae_se[path], c = _solve(
                    dist, spec.strike, cfg, builder, _qae_rng(stream, cfg, 1 + path)
                )
            except EstimationError as exc:
                raise EstimationError(f"caplet {i}, path {path}: {exc}", exc.interval,
                                      exc.rounds) from exc
            calls += c
        weight = spec.notional * tenor.tau(i) * dataset.discount.pay(i)
        if payoffs.min() == payoffs.max():
            mean, mc_se = float(payoffs[0]), 0.0
        else:
            mean = float(np.mean(payoffs))
            mc_se = float(np.std(payoffs, ddof=1)) / math.sqrt(payoffs.size)
        values.append(weight * mean)
        errors.append(weight * math.hypot(mc_se, float(np.mean(qae_se))))
    return PriceEstimate(
        value=math.fsum(values),
        std_error=math.sqrt(math.fsum(e * e for e in errors)),
        n_samples=max(1, calls),
        method="hybrid",
    )


def pure_quantum_cap_price(dataset, spec, cfg, rng=None):
    """Full-horizon QAE per caplet, summed.

    Caplet ``i`` loads the terminal lognormal of ``F_i(T_{i-1})`` (log-variance
    ``v_i^2``) on ``n * i`` qubits.

    Raises:
        CapacityError: if a caplet register plus ancilla and objective exceeds
            ``cfg.max_qubits``.
    """
    spec.check(dataset.tenor)
    required = cfg.n_qubits * spec.last + 2
    if required > cfg.max_qubits:
        raise CapacityError(
            f"pure-quantum caplet {spec.last} needs {required} qubits, budget {cfg.max_qubits}",
            required,
        )
    rng = RngStream(cfg.seed) if rng is None else rng
    tenor = dataset.tenor
    builder = cfg.builder()
    values, errors = [], []
    calls = 0
    for i in spec.caplets:
        v = 0.0 if tenor.reset(i) == 0.0 else caplet_vol(dataset.vols, tenor, i)
        dist = discretize_lognormal(math.log(dataset.curve[i]) - 0.5 * v * v, v,
                                    cfg.n_qubits * i, cfg.width, cfg.floor)
        payoff, se, c = _solve(dist, spec.strike, cfg, builder, _qae_rng(rng, cfg, i, 0))
        weight = spec.notional * tenor.tau(i) * dataset.discount.pay(i)
        values.append(weight * payoff)
        errors.append(weight * se)
        calls += c
    return PriceEstimate(
        value=math.fsum(values),
        std_error=math.sqrt(math.fsum(e * e for e in errors)),
        n_samples=max(1, calls),
        method="pure-quantum",
    )


def price(dataset, spec, cfg, rng=None):
    """Dispatch on ``cfg.method``."""
    rng = RngStream(cfg.seed) if rng is None else rng
    if cfg.method == "classical":
        return classical_cap_price(dataset, spec, cfg, rng)
    if cfg.method == "hybrid":
        return hybrid_cap_price(dataset, spec, cfg, rng)
    return pure_quantum_cap_price(dataset, spec, cfg, rng)


def qubit_count(n, T):
    """Qubits of the joint pure-quantum circuit for ``T`` annual caplets.

    The loading registers hold ``n, 2n, ..., nT`` qubits; the comparator adds
    one ancilla; the payoff rotation one objective qubit.  Sampling qubits of
    a phase-estimation readout are not included.
    """
    if n < 1 or T < 1:
        raise ContractViolation("need n >= 1 and T >= 1")
    loading = (n + n * T) * T // 2
    comparator = loading + 1
    rotation = 1
    return {"loading": loading, "comparator": comparator, "rotation": rotation,
            "total": loading + comparator + rotation}


def _run_unit(args):
    dataset, spec, cfg, method, M, trial, seed, reference = args
    # pure quantum has no paths; M sets its shots per round (ignored in exact mode)
    if method == "pure-quantum":
        unit_cfg = replace(cfg, method=method, shots=M)
    else:
        unit_cfg = replace(cfg, method=method, n_paths=M)
    est = price(dataset, spec, unit_cfg, RngStream(seed, (trial, M)))
    return ConvergenceRecord(method, M, trial, est.value, abs(est.value - reference))


def convergence_experiment(dataset, spec, methods, m_grid, trials, seed, cfg=None, workers=1):
    """Absolute errors against Black-76 for every ``(method, M, trial)``.

    Trial ``t`` at size ``M`` uses ``RngStream(seed, (t, M))`` for every method.
    Records come back sorted by method, ``M`` and trial regardless of
    ``workers``.
    """
    if trials < 2:
        raise ContractViolation("need at least 2 trials")
    return run_trials(dataset, spec, methods, m_grid, trials, seed, cfg, workers)


def run_trials(dataset, spec, methods, m_grid, trials, seed, cfg=None, workers=1):
    """:func:`convergence_experiment` without the two-trial minimum."""
    if trials < 1:
        raise ContractViolation("need at least 1 trial")
    tags = [METHOD_TAGS.get(m) for m in methods]
    if None in tags:
        raise ContractViolation(f"unknown method in {methods!r}")
    cfg = MethodConfig() if cfg is None else cfg
    reference = black76_cap(dataset, spec)
    units = [(dataset, spec, cfg, method, int(M), trial, seed, reference)
             for method in dict.fromkeys(tags) for M in m_grid for trial in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_unit, units, chunksize=max(1, len(units) // (4 * workers))))
    else:
        records = [_run_unit(u) for u in units]
    records.sort(key=lambda r: (METHOD_ORDER.index(r.method), r.M, r.trial))
    return records


def qubit_sweep_experiment(dataset, spec, n_values, trials, cfg=None, seed=0):
    """Pure-quantum price statistics for each qubit count.

    Each trial ``t`` uses ``RngStream(seed, (t, n))``.  The confidence interval
    is ``mean +/- z_{0.975} std / sqrt(trials)``.
    """
    if trials < 2:
        raise ContractViolation("need at least 2 trials")
    cfg = MethodConfig(method="pure-quantum", mode="shots") if cfg is None else cfg
    reference = black76_cap(dataset, spec)
    z = float(ndtri(0.975))
    out = []
    for n in n_values:
        unit_cfg = replace(cfg, method="pure-quantum", n_qubits=int(n))
        vals = np.array([
            pure_quantum_cap_price(dataset, spec, unit_cfg, RngStream(seed, (t, int(n)))).value
            for t in range(trials)
        ])
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1))
        half = z * std / math.sqrt(trials)
        out.append(SweepResult(int(n), trials, mean, std, mean - half, mean + half, reference))
    return out
