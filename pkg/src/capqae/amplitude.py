"""Caplet pricing as an amplitude-estimation problem.

Register layout for an ``n``-qubit distribution (little-endian):

* qubits ``0..n-1``: index register, basis state ``|i>`` stands for grid value ``x_i``;
* qubit ``n``: comparator ancilla, set to 1 iff ``x_i >= K``;
* qubit ``n + 1``: objective qubit whose one-probability encodes the payoff.

The payoff enters through the normalized value ``f(x) = (x - K) / (x_max - K)``
on in-the-money states (``f = 0`` elsewhere).  The objective one-probability is
``1/2 + c (2 f - 1)`` (``encoding="exact"``, per-state rotation angles) or
``sin^2(c (2 f - 1) + pi/4)`` (``encoding="linear"``, one rotation per index
bit).  Both are inverted with ``E[f] = (a - 1/2) / (2 c) + 1/2``, which is exact
for the first and carries a small-angle linearization error for the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ContractViolation, EstimationError
from .montecarlo import PriceEstimate
from .qsim import (
    AmplitudeOperator,
    Circuit,
    _apply_inplace,
    mcry,
    mcx,
    probability_of_one,
    ry,
    run_circuit,
    x,
)

__all__ = [
    "DiscretizedDistribution",
    "PayoffEncoding",
    "QaeResult",
    "discretize_lognormal",
    "load_distribution",
    "comparator",
    "payoff_rotation",
    "build_caplet_problem",
    "CapletProblemBuilder",
    "iqae",
    "qae_error_bound",
    "postprocess_payoff",
]

DEFAULT_FLOOR = 1e-9
DEFAULT_WIDTH = 3.0
# relative spacing of the placeholder grid of a zero-variance distribution
_DEGENERATE_SPACING = 2.0**-20
# grids narrower than this (relative to the mean) are treated as a single atom
_MIN_RELATIVE_WIDTH = 1e-12


@dataclass(frozen=True, eq=False)
class DiscretizedDistribution:
    grid: np.ndarray
    probs: np.ndarray
    n_qubits: int
    log_mean: float
    log_stdev: float

    def __post_init__(self):
        if self.grid.shape != (1 << self.n_qubits,) or self.probs.shape != self.grid.shape:
            raise ContractViolation("grid and probabilities must have 2^n entries")
        if np.any(np.diff(self.grid) <= 0.0) or self.grid[0] <= 0.0:
            raise ContractViolation("grid must be positive and strictly increasing")
        if np.any(self.probs < 0.0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ContractViolation("probabilities must be non-negative and sum to 1")

    @property
    def size(self):
        return self.grid.size

    @property
    def x_max(self):
        return float(self.grid[-1])

    def mean(self):
        return float(self.probs @ self.grid)

    def variance(self):
        return float(self.probs @ (self.grid - self.mean()) ** 2)

    def skewness(self):
        var = self.variance()
        if var == 0.0:
            return 0.0
        return float(self.probs @ (self.grid - self.mean()) ** 3) / var**1.5

    def expected_call(self, strike):
        """``sum_i p_i (x_i - K)^+``: the classical value the circuit encodes."""
        return float(self.probs @ np.maximum(self.grid - strike, 0.0))


def discretize_lognormal(log_mean, log_stdev, n_qubits, width=DEFAULT_WIDTH, floor=DEFAULT_FLOOR):
    """Discretize ``exp(N(log_mean, log_stdev^2))`` on ``2^n`` equally spaced points.

    The grid spans ``[max(floor, m - width*s), m + width*s]`` with ``m``, ``s`` the
    lognormal mean and standard deviation, and the weights are the density at
    the grid points renormalized to one.  A zero ``log_stdev`` puts all mass on
    ``x_0 = exp(log_mean)``; so does a spread too small to resolve in double
    precision.
    """
    if n_qubits < 1:
        raise ContractViolation("need at least one qubit")
    if log_stdev < 0.0:
        raise ContractViolation("log_stdev must be non-negative")
    size = 1 << n_qubits
    m = math.exp(log_mean + 0.5 * log_stdev**2)
    r = math.sqrt(math.expm1(log_stdev**2))
    if width * r < _MIN_RELATIVE_WIDTH:
        grid = m * (1.0 + _DEGENERATE_SPACING * np.arange(size))
        probs = np.zeros(size)
        probs[0] = 1.0
        return DiscretizedDistribution(grid, probs, n_qubits, float(log_mean), float(log_stdev))
    # work on u = x / m so the weights depend on log_stdev alone whenever the
    # floor is inactive; all members of a scale family then share them bitwise
    u = np.linspace(max(floor / m, 1.0 - width * r), 1.0 + width * r, size)
    z = (np.log(u) + 0.5 * log_stdev**2) / log_stdev
    pdf = np.exp(-0.5 * z * z) / u
    total = pdf.sum()
    if not total > 0.0:
        # every grid point underflowed; fall back to the point nearest the median
        pdf = np.zeros(size)
        pdf[int(np.argmin(np.abs(z)))] = 1.0
        total = 1.0
    return DiscretizedDistribution(m * u, pdf / total, n_qubits, float(log_mean), float(log_stdev))


def load_distribution(dist):
    """Circuit taking ``|0...0>`` to ``sum_i sqrt(p_i) |i>``.

    Binary tree from the most significant index qubit down: at each level the
    mass of every prefix is split between its two children by a rotation
    controlled on the prefix bits.
    """
    n = dist.n_qubits
    circ = Circuit(n)
    probs = dist.probs
    for level in range(n):
        q = n - 1 - level
        split = probs.reshape(1 << level, 2, 1 << q).sum(axis=2)
        controls = tuple(range(q + 1, n))
        for prefix in range(1 << level):
            p0, p1 = split[prefix]
            if p1 <= 0.0:
                continue
            theta = 2.0 * math.atan2(math.sqrt(p1), math.sqrt(p0))
            if level == 0:
                circ.append(ry(theta, q))
            else:
                state = tuple((prefix >> b) & 1 for b in range(level))
                circ.append(mcry(theta, controls, q, state))
    return circ


def threshold_index(dist, strike):
    """First index with ``x_i >= K`` (``2^n`` if none)."""
    return int(np.searchsorted(dist.grid, strike, side="left"))


def comparator(dist, strike):
    """Fragment flipping the ancilla (qubit ``n``) on every index with ``x_i >= K``.

    The threshold index ``t`` is computed classically.  The set ``{i >= t}`` is
    covered by at most ``n + 1`` aligned blocks, one multi-controlled X each.

    Returns:
        ``(circuit, ancilla)``.
    """
    n = dist.n_qubits
    ancilla = n
    circ = Circuit(n + 1)
    t = threshold_index(dist, strike)
    if t >= dist.size:
        return circ, ancilla
    if t == 0:
        circ.append(x(ancilla))
        return circ, ancilla
    for b in range(n - 1, -1, -1):
        if (t >> b) & 1 == 0:
            # indices sharing t's bits above b and having bit b set
            controls = tuple(range(b, n))
            state = (1,) + tuple((t >> c) & 1 for c in range(b + 1, n))
            circ.append(mcx(controls, ancilla, state))
    circ.append(mcx(tuple(range(n)), ancilla, tuple((t >> c) & 1 for c in range(n))))
    return circ, ancilla


@dataclass(frozen=True)
class PayoffEncoding:
    """Affine map ``f = slope * x + offset`` of in-the-money payoffs onto ``[0, 1]``."""

    strike: float
    threshold: int
    slope: float
    offset: float
    c_approx: float = 0.25
    exact: bool = True
    zero: bool = False

    def __post_init__(self):
        if not 0.0 < self.c_approx <= 0.5:
            raise ContractViolation("c_approx must lie in (0, 0.5]")

    @classmethod
    def for_strike(cls, dist, strike, c_approx=0.25, exact=True):
        t = threshold_index(dist, strike)
        span = dist.x_max - strike
        if span <= 0.0:
            return cls(strike, t, 0.0, 0.0, c_approx, exact, zero=True)
        return cls(strike, t, 1.0 / span, -strike / span, c_approx, exact)

    def normalized(self, grid):
        """``f(x_i)``, zero below the strike."""
        if self.zero:
            return np.zeros_like(grid)
        return np.where(grid >= self.strike, self.slope * grid + self.offset, 0.0)

    def probability(self, f):
        """Objective one-probability for normalized payoff ``f``."""
        y = self.c_approx * (2.0 * np.asarray(f) - 1.0)
        if self.exact:
            return 0.5 + y
        return np.sin(y + math.pi / 4.0) ** 2

    def angle(self, f):
        return 2.0 * np.arcsin(np.sqrt(np.clip(self.probability(f), 0.0, 1.0)))

    @property
    def zero_point(self):
        """Amplitude that maps back to zero payoff."""
        return 0.0 if self.zero else float(self.probability(0.0))

    def invert(self, a):
        """Expected normalized payoff from the estimated amplitude."""
        if self.zero:
            return 0.0
        return (a - 0.5) / (2.0 * self.c_approx) + 0.5

    def payoff(self, a):
        """Expected ``(x - K)^+`` from the estimated amplitude."""
        if self.zero:
            return 0.0
        return self.invert(a) / self.slope

    def linearization_bound(self):
        """Worst-case payoff error of the inversion, zero for the exact encoding."""
        if self.zero or self.exact:
            return 0.0
        c = self.c_approx
        return (c - 0.5 * math.sin(2.0 * c)) / (2.0 * c) / self.slope


def payoff_rotation(dist, strike, encoding):
    """Rotations on the objective (qubit ``n + 1``) conditioned on the ancilla (qubit ``n``)."""
    n = dist.n_qubits
    anc, obj = n, n + 1
    circ = Circuit(n + 2)
    if encoding.zero:
        return circ
    base = float(encoding.angle(0.0))
    circ.append(ry(base, obj))
    t = encoding.threshold
    if t >= dist.size:
        return circ
    if encoding.exact:
        angles = encoding.angle(encoding.normalized(dist.grid))
        index_qubits = tuple(range(n))
        for i in range(t, dist.size):
            state = (1,) + tuple((i >> b) & 1 for b in index_qubits)
            circ.append(mcry(float(angles[i]) - base, (anc,) + index_qubits, obj, state))
    else:
        # angle(i) = base + 4 c (slope x_0 + offset) + sum_b 4 c slope h 2^b bit_b(i)
        c = encoding.c_approx
        x0 = float(dist.grid[0])
        h = float(dist.grid[1] - dist.grid[0])
        if not np.allclose(np.diff(dist.grid), h, rtol=1e-9, atol=0.0):
            raise ContractViolation("the linear encoding needs an equally spaced grid")
        circ.append(mcry(4.0 * c * (encoding.slope * x0 + encoding.offset), (anc,), obj))
        for b in range(n):
            circ.append(mcry(4.0 * c * encoding.slope * h * (1 << b), (anc, b), obj))
    return circ


def build_caplet_problem(dist, strike, c_approx=0.25, exact=True):
    """``(AmplitudeOperator, PayoffEncoding)`` for ``E[(X - K)^+]`` under ``dist``."""
    encoding = PayoffEncoding.for_strike(dist, strike, c_approx, exact)
    n = dist.n_qubits
    circ = load_distribution(dist).widened(n + 2)
    if not encoding.zero:
        circ.compose(comparator(dist, strike)[0])
        circ.compose(payoff_rotation(dist, strike, encoding))
    return AmplitudeOperator(circ, objective=n + 1), encoding


class CapletProblemBuilder:
    """Builds caplet problems and ``A|0>``, reusing loaded states across problems.

    The loading circuit depends only on the probability vector, which is the
    same for every grid of a scale family (e.g. per-path conditional
    distributions), so the loaded statevector is cached on it.
    """

    def __init__(self, c_approx=0.25, exact=True, max_cache=64):
        self.c_approx = c_approx
        self.exact = exact
        self.max_cache = max_cache
        self._cache = {}

    def _loaded(self, dist):
        key = (dist.n_qubits, dist.probs.tobytes())
        entry = self._cache.get(key)
        if entry is None:
            circ = load_distribution(dist).widened(dist.n_qubits + 2)
            entry = (circ, run_circuit(circ))
            if len(self._cache) >= self.max_cache:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = entry
        return entry

    def build(self, dist, strike):
        """Returns ``(operator, encoding, prepared_state)``."""
        encoding = PayoffEncoding.for_strike(dist, strike, self.c_approx, self.exact)
        n = dist.n_qubits
        load, loaded = self._loaded(dist)
        prepared = loaded.copy()
        circ = Circuit(n + 2)
        circ.gates = list(load.gates)
        if not encoding.zero:
            tail = comparator(dist, strike)[0].gates + payoff_rotation(dist, strike, encoding).gates
            for g in tail:
                _apply_inplace(prepared.amplitudes, n + 2, g)
            circ.gates.extend(tail)
        return AmplitudeOperator(circ, objective=n + 1), encoding, prepared


@dataclass(frozen=True)
class QaeResult:
    """Outcome of iterative amplitude estimation.

    ``oracle_calls`` counts every application of ``A`` or ``Q`` over all shots
    (``sum_rounds shots * (2k + 1)``).  ``samples`` is ``sum_rounds (2k + 1)``, the
    coherent oracle calls of a single shot sequence, which is the ``M`` used with
    :func:`qae_error_bound`.
    """

    estimate: float
    ci_low: float
    ci_high: float
    oracle_calls: int
    samples: int
    rounds: int
    powers: tuple
    epsilon: float
    alpha: float
    mode: str
    shots: int

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)


def _chernoff(p, shots, max_rounds, alpha):
    eps = math.sqrt(3.0 * math.log(2.0 * max_rounds / alpha) / shots)
    return max(0.0, p - eps), min(1.0, p + eps)


def _find_next_k(k, upper, theta_lo, theta_hi, min_ratio=2.0):
    """Largest power whose scaled interval stays inside one half-plane."""
    old_scaling = 4 * k + 2
    max_scaling = int(1.0 / (2.0 * (theta_hi - theta_lo)))
    scaling = max_scaling - (max_scaling - 2) % 4
    while scaling >= min_ratio * old_scaling:
        lo = scaling * theta_lo - int(scaling * theta_lo)
        hi = scaling * theta_hi - int(scaling * theta_hi)
        if lo <= hi <= 0.5 and lo <= 0.5:
            return (scaling - 2) // 4, True
        if hi >= 0.5 and hi >= lo >= 0.5:
            return (scaling - 2) // 4, False
        scaling -= 4
    return k, upper


def iqae(problem, epsilon, alpha, mode="exact", shots=100, rng=None, prepared=None,
         min_ratio=2.0, max_iterations=10_000):
    """Iterative amplitude estimation (no phase estimation).

    The angle ``theta`` with ``a = sin^2(2 pi theta)``, ``theta in [0, 1/4]`` is kept
    in a confidence interval.  Each round picks the largest Grover power ``k``
    whose scaled interval ``(4k+2) [theta_lo, theta_hi]`` lies within a half
    circle, measures ``Q^k A|0>`` and intersects the implied interval with the
    current one.  Rounds that repeat a power pool their shots.

    Args:
        problem: the ``AmplitudeOperator``.
        epsilon: target half-width of the interval on ``a``, in (0, 0.5).
        alpha: failure probability, in (0, 1).
        mode: ``"exact"`` reads the objective probability from the amplitudes
            (the interval collapses after one round); ``"shots"`` draws
            ``shots`` binomial samples per round with Chernoff intervals.
        rng: numpy ``Generator`` (shots mode only).
        prepared: optional precomputed ``A|0>``.

    Raises:
        EstimationError: if ``max_iterations`` is reached before convergence.
    """
    if not 0.0 < epsilon < 0.5:
        raise ContractViolation(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if not 0.0 < alpha < 1.0:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    if mode not in ("exact", "shots"):
        raise ContractViolation(f"unknown mode {mode!r}")
    if mode == "shots":
        if rng is None:
            raise ContractViolation("shots mode needs an rng")
        if shots < 1:
            raise ContractViolation("shots must be >= 1")
    state = problem.prepare() if prepared is None else prepared.copy()
    max_rounds = int(math.log(min_ratio * math.pi / 8.0 / epsilon) / math.log(min_ratio)) + 1

    theta_lo, theta_hi = 0.0, 0.25
    upper = True
    powers, ones, counts = [], [], []
    current_k = 0
    oracle_calls = 0
    samples = 0
    while theta_hi - theta_lo > epsilon / math.pi:
        if len(powers) >= max_iterations:
            raise EstimationError(
                "amplitude estimation did not converge",
                (math.sin(2 * math.pi * theta_lo) ** 2, math.sin(2 * math.pi * theta_hi) ** 2),
                len(powers),
            )
        k, upper = _find_next_k(current_k, upper, theta_lo, theta_hi, min_ratio)
        for _ in range(k - current_k):
            problem.grover_step(state.amplitudes)
        current_k = k
        p = probability_of_one(state, problem.objective)
        powers.append(k)
        samples += 2 * k + 1
        if mode == "exact":
            oracle_calls += 2 * k + 1
            a_lo = a_hi = p
        else:
            n_one = int(rng.binomial(shots, p))
            oracle_calls += shots * (2 * k + 1)
            ones.append(n_one)
            counts.append(shots)
            pooled_ones, pooled_shots = n_one, shots
            j = len(powers) - 2
            while j >= 0 and powers[j] == k:
                pooled_ones += ones[j]
                pooled_shots += counts[j]
                j -= 1
            a_lo, a_hi = _chernoff(pooled_ones / pooled_shots, pooled_shots, max_rounds, alpha)
        if upper:
            t_lo = math.acos(1.0 - 2.0 * a_lo) / (2.0 * math.pi)
            t_hi = math.acos(1.0 - 2.0 * a_hi) / (2.0 * math.pi)
        else:
            t_lo = 1.0 - math.acos(1.0 - 2.0 * a_hi) / (2.0 * math.pi)
            t_hi = 1.0 - math.acos(1.0 - 2.0 * a_lo) / (2.0 * math.pi)
        scaling = 4 * k + 2
        # both endpoints live in the period of theta_lo; an upper endpoint sitting
        # exactly on a period boundary must not be promoted to the next period
        period = int(scaling * theta_lo)
        new_lo = (period + t_lo) / scaling
        new_hi = (period + t_hi) / scaling
        if mode == "exact":
            theta_lo = theta_hi = min(max(new_lo, theta_lo), theta_hi)
        else:
            theta_lo, theta_hi = max(theta_lo, new_lo), min(theta_hi, new_hi)
            if theta_lo > theta_hi:
                # disjoint intervals: keep the fresh one, pooled statistics win
                theta_lo, theta_hi = min(new_lo, new_hi), max(new_lo, new_hi)

    a_lo = math.sin(2.0 * math.pi * theta_lo) ** 2
    a_hi = math.sin(2.0 * math.pi * theta_hi) ** 2
    return QaeResult(
        estimate=0.5 * (a_lo + a_hi),
        ci_low=a_lo,
        ci_high=a_hi,
        oracle_calls=oracle_calls,
        samples=samples,
        rounds=len(powers),
        powers=tuple(powers),
        epsilon=epsilon,
        alpha=alpha,
        mode=mode,
        shots=shots if mode == "shots" else 0,
    )


def qae_error_bound(M):
    """``pi / M + pi^2 / M^2``."""
    if M < 1:
        raise ContractViolation("M must be >= 1")
    return math.pi / M + math.pi**2 / M**2


def postprocess_payoff(result, encoding, tau, discount, notional=1.0, method="pure-quantum"):
    """Discounted caplet value ``tau * p * E[(X - K)^+]`` from a QAE result.

    The interval endpoints go through the same inversion; ``std_error`` is the
    mapped half-width divided by the two-sided normal quantile at ``alpha``.
    """
    weight = notional * tau * discount
    value = weight * encoding.payoff(result.estimate)
    lo = weight * encoding.payoff(result.ci_low)
    hi = weight * encoding.payoff(result.ci_high)
    z = float(ndtri(1.0 - result.alpha / 2.0))
    std_error = abs(hi - lo) / 2.0 / z
    return PriceEstimate(value=value, std_error=std_error, n_samples=max(1, result.oracle_calls),
                         method=method)
