"""Classical Monte Carlo caplet/cap pricing under the forward measures.

Randomness comes from :class:`RngStream`, a counter-based (Philox) stream keyed by
``(seed, stream_id)``.  Gaussian draws are produced by the inverse-CDF transform
of 53-bit uniforms taken in stream order, so a draw is a pure function of
``(seed, stream_id, counter)``.  Path simulations consume the stream
period-major: all paths' draws for period 1, then period 2, and so on.  Path
``p`` of period ``j`` therefore always sits at counter ``(j - 1) * n_paths + p``,
and a simulation over the first ``q`` periods reuses exactly the draws of a
longer one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ContractViolation, InsufficientSamplesError
from .lmm import MarketDataset

__all__ = [
    "RngStream",
    "PriceEstimate",
    "gbm_step",
    "simulate_forward",
    "simulate_caplet_terminal",
    "caplet_payoff",
    "mc_caplet_price",
    "mc_cap_price",
    "mc_error_model",
    "validate_correlation",
    "simulate_terminal_measure",
]

METHODS = ("classical", "hybrid", "pure-quantum", "analytic")


def _key(stream_id):
    if isinstance(stream_id, (tuple, list)):
        return tuple(int(s) for s in stream_id)
    return (int(stream_id),)


@dataclass(frozen=True)
class RngStream:
    """Reproducible random substream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ContractViolation("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", _key(self.stream_id))

    def child(self, *ids):
        return RngStream(self.seed, self.stream_id + _key(ids))

    def generator(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(seq))

    def uniforms(self, size):
        """Uniforms on the open interval (0, 1), 53-bit resolution."""
        raw = self.generator().bit_generator.random_raw(int(np.prod(size)))
        return (((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53).reshape(size)

    def normals(self, size):
        return ndtri(self.uniforms(size))


@dataclass(frozen=True)
class PriceEstimate:
    """A price from any of the estimators, with its dispersion."""

    value: float
    std_error: float
    n_samples: int
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method tag {self.method!r}")
        if not self.std_error >= 0.0:
            raise ContractViolation("std_error must be non-negative")
        if self.method != "analytic" and self.n_samples < 1:
            raise ContractViolation("sampled estimates need n_samples >= 1")


def gbm_step(F, sigma, dt, Z):
    """Exact lognormal step ``F * exp(sqrt(dt) sigma Z - sigma^2 dt / 2)``."""
    return F * np.exp(math.sqrt(dt) * sigma * Z - 0.5 * sigma * sigma * dt)


def simulate_forward(dataset, i, rng, n_paths, n_periods=None):
    """Simulate ``F_i`` under its own forward measure through ``n_periods`` periods.

    Returns an array of ``n_paths`` values of ``F_i`` at the end of period
    ``n_periods`` (default ``i``, i.e. the reset date ``T_{i-1}``).
    """
    tenor = dataset.tenor
    n_periods = i if n_periods is None else n_periods
    if not 0 <= n_periods <= i:
        raise ContractViolation(f"caplet {i} has only {i} volatility periods")
    f0 = dataset.curve[i]
    paths = np.full(n_paths, f0)
    if n_periods == 0:
        return paths
    Z = rng.normals((n_periods, n_paths))
    for j in range(1, n_periods + 1):
        start, end = tenor.period_bounds(j)
        dt = end - start
        if dt > 0.0:
            paths = gbm_step(paths, dataset.vols.sigma(i, j), dt, Z[j - 1])
    return paths


def simulate_caplet_terminal(dataset, i, rng, n_paths=1):
    """Draws of the reset rate ``F_i(T_{i-1})`` under the ``T_i``-forward measure."""
    return simulate_forward(dataset, i, rng, n_paths)


def caplet_payoff(L, K, tau):
    """Caplet cash flow ``tau * (L - K)^+``."""
    if not tau > 0.0:
        raise ContractViolation("year fraction must be positive")
    return tau * np.maximum(np.asarray(L, dtype=float) - K, 0.0)


def mc_caplet_price(dataset, i, strike, n_paths, rng, notional=1.0):
    """Forward-measure Monte Carlo price of caplet ``i``: ``(value, std_error)``."""
    if n_paths < 2:
        raise InsufficientSamplesError(f"need at least 2 paths, got {n_paths}")
    terminal = simulate_caplet_terminal(dataset, i, rng, n_paths)
    weight = notional * dataset.discount.pay(i)
    payoff = caplet_payoff(terminal, strike, dataset.tenor.tau(i))
    if payoff.min() == payoff.max():
        # constant sample, e.g. zero volatility; np.std would report roundoff
        return weight * float(payoff[0]), 0.0
    value = weight * float(np.mean(payoff))
    std_error = weight * float(np.std(payoff, ddof=1)) / math.sqrt(n_paths)
    return value, std_error


def mc_cap_price(dataset: MarketDataset, spec, n_paths, rng) -> PriceEstimate:
    """Cap price as a sum of independently simulated caplets.

    Caplet ``i`` draws from ``rng.child(i)``.  Standard errors of the caplets are
    combined in root-sum-square since their path sets are independent.
    """
    spec.check(dataset.tenor)
    if n_paths < 2:
        raise InsufficientSamplesError(f"need at least 2 paths, got {n_paths}")
    values, errors = [], []
    for i in spec.caplets:
        v, se = mc_caplet_price(dataset, i, spec.strike, n_paths, rng.child(i), spec.notional)
        values.append(v)
        errors.append(se)
    return PriceEstimate(
        value=math.fsum(values),
        std_error=math.sqrt(math.fsum(e * e for e in errors)),
        n_samples=n_paths,
        method="classical",
    )


def mc_error_model(sample_stdev, M):
    """Scale ``sigma / sqrt(M)`` of the CLT error ``sigma * nu / sqrt(M)``."""
    if M < 1:
        raise ContractViolation("M must be >= 1")
    return sample_stdev / math.sqrt(M)


def validate_correlation(rho, size=None, tol=1e-10):
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractViolation("correlation matrix must be square")
    if size is not None and rho.shape[0] != size:
        raise ContractViolation(f"correlation matrix must be {size}x{size}")
    if not np.allclose(rho, rho.T, atol=tol, rtol=0.0):
        raise ContractViolation("correlation matrix must be symmetric")
    if not np.allclose(np.diag(rho), 1.0, atol=tol, rtol=0.0):
        raise ContractViolation("correlation matrix must have unit diagonal")
    eig = np.linalg.eigvalsh(rho)
    if eig.min() < -tol:
        raise ContractViolation(
            f"correlation matrix is not positive semidefinite (min eigenvalue {eig.min():.3g})"
        )
    return rho


def _psd_sqrt(rho):
    # eigen-factor so semidefinite matrices (e.g. all-ones) are accepted
    w, v = np.linalg.eigh(rho)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_terminal_measure(dataset, rho, n_paths, rng):
    """Joint log-Euler simulation of all forwards under the terminal measure ``Q^M``.

    Each forward ``F_k`` carries the drift ``-sigma_k sum_{j>k} rho_kj tau_j sigma_j
    F_j / (1 + tau_j F_j)`` and is frozen once it resets.  Steps run period by
    period.

    Returns:
        Array of shape ``(n_paths, M)``; column ``k-1`` holds ``F_k(T_{k-1})``.
    """
    m = dataset.n_forwards
    rho = validate_correlation(rho, m)
    root = _psd_sqrt(rho)
    tenor = dataset.tenor
    taus = np.array(tenor.fractions)
    logf = np.tile(np.log(np.array(dataset.curve.forwards)), (n_paths, 1))
    xi = rng.normals((m, n_paths, m))
    for j in range(1, m + 1):
        start, end = tenor.period_bounds(j)
        dt = end - start
        if dt <= 0.0:
            continue
        alive = np.arange(j - 1, m)
        sig = np.array([dataset.vols.sigma(k + 1, j) for k in range(m)])
        f = np.exp(logf)
        g = taus * sig * f / (1.0 + taus * f)
        # sum_{l>k} rho_kl g_l  via strictly-upper-triangular part of rho
        drift = -sig * (g @ np.triu(rho, 1).T)
        dz = xi[j - 1] @ root.T
        step = (drift - 0.5 * sig**2) * dt + sig * math.sqrt(dt) * dz
        logf[:, alive] += step[:, alive]
    return np.exp(logf)
