"""Market data, curve arithmetic and Black-76 pricing under the LIBOR market model.

Conventions used throughout the package:

* Times are in years, valuation time is ``t = 0`` unless stated otherwise.
* The tenor structure holds ``T_0 < T_1 < ... < T_M``.  Caplet ``i`` (1-based,
  ``1 <= i <= M``) resets at ``T_{i-1}`` on the forward ``F_i`` for the interval
  ``(T_{i-1}, T_i]`` and pays ``tau_i * (F_i(T_{i-1}) - K)^+`` at ``T_i``.
* Volatility *period* ``j`` (1-based) is the interval ``(T_{j-2}, T_{j-1}]`` with
  ``T_{-1} = 0``.  Row ``i`` of the volatility table holds ``sigma_{i,1..i}``, the
  piecewise-constant instantaneous volatility of ``F_i`` over the periods in
  which it is alive.  For an annual tenor starting at ``T_0 = 1`` period ``j`` is
  simply calendar year ``j``.
* Rates, strikes and volatilities are decimals (0.0469, never 4.69).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import ContractViolation, DomainError, ExpiredCapletError

__all__ = [
    "TenorStructure",
    "ForwardCurve",
    "VolSurface",
    "DiscountCurve",
    "CapSpec",
    "MarketDataset",
    "norm_cdf",
    "bond_prices",
    "caplet_vol",
    "normalized_caplet_vol",
    "black76_caplet",
    "black76_cap",
    "drift_mu",
]

_FRACTION_TOL = 1e-12


def norm_cdf(x):
    """Standard normal CDF (absolute error well below 1e-15)."""
    return ndtr(x)


@dataclass(frozen=True)
class TenorStructure:
    """Reset/payment dates ``T_0..T_M`` and year fractions ``tau_1..tau_M``."""

    dates: tuple
    fractions: tuple = None

    def __post_init__(self):
        dates = tuple(float(d) for d in self.dates)
        if len(dates) < 2:
            raise ContractViolation("tenor structure needs at least T_0 and T_1")
        if dates[0] < 0.0:
            raise ContractViolation("T_0 must be non-negative")
        diffs = [b - a for a, b in zip(dates, dates[1:])]
        if any(d <= 0.0 for d in diffs):
            raise ContractViolation("tenor dates must be strictly increasing")
        if self.fractions is None:
            fractions = tuple(diffs)
        else:
            fractions = tuple(float(f) for f in self.fractions)
            if len(fractions) != len(diffs):
                raise ContractViolation(
                    f"expected {len(diffs)} year fractions, got {len(fractions)}"
                )
            for k, (f, d) in enumerate(zip(fractions, diffs), start=1):
                if f <= 0.0:
                    raise ContractViolation(f"year fraction tau_{k} must be positive")
                if abs(f - d) > _FRACTION_TOL:
                    raise ContractViolation(
                        f"tau_{k}={f!r} inconsistent with date difference {d!r}"
                    )
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "fractions", fractions)

    @classmethod
    def annual(cls, n_intervals, start=1.0):
        return cls(tuple(start + k for k in range(n_intervals + 1)))

    @property
    def n_intervals(self):
        return len(self.fractions)

    @property
    def stub(self):
        """Year fraction ``tau_0`` from valuation time to ``T_0``."""
        return self.dates[0]

    def reset(self, i):
        """Reset date ``T_{i-1}`` of caplet ``i``."""
        self._check_caplet(i)
        return self.dates[i - 1]

    def tau(self, i):
        self._check_caplet(i)
        return self.fractions[i - 1]

    def period_bounds(self, j):
        """Start and end of volatility period ``j``: ``(T_{j-2}, T_{j-1}]``."""
        self._check_caplet(j)
        start = 0.0 if j == 1 else self.dates[j - 2]
        return start, self.dates[j - 1]

    def period_at(self, t):
        """Volatility period containing ``t`` (clamped to ``M``)."""
        for j in range(1, self.n_intervals + 1):
            if t < self.dates[j - 1]:
                return j
        return self.n_intervals

    def _check_caplet(self, i):
        if not 1 <= i <= self.n_intervals:
            raise ContractViolation(
                f"caplet index {i} outside 1..{self.n_intervals}"
            )


@dataclass(frozen=True)
class ForwardCurve:
    """Initial simply-compounded forwards ``F_1(0)..F_M(0)``."""

    forwards: tuple

    def __post_init__(self):
        forwards = tuple(float(f) for f in self.forwards)
        if not forwards:
            raise ContractViolation("forward curve is empty")
        if any(not f > 0.0 for f in forwards):
            raise ContractViolation("all forward rates must be positive")
        object.__setattr__(self, "forwards", forwards)

    def __len__(self):
        return len(self.forwards)

    def __getitem__(self, i):
        """Forward ``F_i(0)`` for caplet ``i`` (1-based)."""
        if not 1 <= i <= len(self.forwards):
            raise ContractViolation(f"forward index {i} outside 1..{len(self.forwards)}")
        return self.forwards[i - 1]


@dataclass(frozen=True)
class VolSurface:
    """Lower-triangular table: ``table[i-1][j-1] = sigma_{i,j}`` for ``j <= i``."""

    table: tuple

    def __post_init__(self):
        rows = []
        for i, row in enumerate(self.table, start=1):
            row = tuple(float(s) for s in row)
            if len(row) != i:
                raise ContractViolation(
                    f"vol table row {i} has {len(row)} entries, expected {i}"
                )
            if any(not (s >= 0.0 and math.isfinite(s)) for s in row):
                raise ContractViolation(f"vol table row {i} has a negative or non-finite entry")
            rows.append(row)
        if not rows:
            raise ContractViolation("vol table is empty")
        object.__setattr__(self, "table", tuple(rows))

    @classmethod
    def constant_rows(cls, vols):
        """Rows ``sigma_{i,1} = ... = sigma_{i,i} = vols[i-1]``."""
        return cls(tuple((float(v),) * i for i, v in enumerate(vols, start=1)))

    def __len__(self):
        return len(self.table)

    def sigma(self, i, j):
        """``sigma_{i,j}``; periods past the reset are clamped to the last entry."""
        if not 1 <= i <= len(self.table):
            raise ContractViolation(f"vol row {i} outside 1..{len(self.table)}")
        if j < 1:
            raise ContractViolation(f"vol period {j} must be >= 1")
        row = self.table[i - 1]
        return row[min(j, i) - 1]

    def row(self, i):
        return self.table[i - 1]

    @property
    def rows_constant(self):
        return all(len(set(row)) == 1 for row in self.table)


@dataclass(frozen=True)
class DiscountCurve:
    """Zero-coupon bond prices ``p(0, T_0), ..., p(0, T_M)``."""

    bonds: tuple

    def __post_init__(self):
        bonds = tuple(float(b) for b in self.bonds)
        if any(not 0.0 < b <= 1.0 for b in bonds):
            raise ContractViolation("bond prices must lie in (0, 1]")
        object.__setattr__(self, "bonds", bonds)

    def pay(self, i):
        """Discount factor to the payment date ``T_i`` of caplet ``i``."""
        return self.bonds[i]


@dataclass(frozen=True)
class CapSpec:
    """Cap on caplets ``first..last`` (inclusive, 1-based) with strike ``strike``."""

    strike: float
    first: int = 1
    last: int = 1
    notional: float = 1.0

    def __post_init__(self):
        if not self.strike > 0.0:
            raise ContractViolation("strike must be positive")
        if self.first < 1 or self.last < self.first:
            raise ContractViolation(
                f"caplet range {self.first}..{self.last} is empty or invalid"
            )
        if not self.notional > 0.0:
            raise ContractViolation("notional must be positive")

    @property
    def caplets(self):
        return range(self.first, self.last + 1)

    def check(self, tenor):
        if self.last > tenor.n_intervals:
            raise ContractViolation(
                f"cap references caplet {self.last} but tenor has {tenor.n_intervals}"
            )


@dataclass(frozen=True)
class MarketDataset:
    """Calibrated model inputs: tenor, initial forwards, volatility table.

    ``stub_rate`` is the simple rate over ``[0, T_0]``; when omitted the first
    forward is used.  ``correlation`` is only consumed by the terminal-measure
    simulator and the drift terms; caps never need it.
    """

    tenor: TenorStructure
    curve: ForwardCurve
    vols: VolSurface
    stub_rate: Optional[float] = None
    correlation: Optional[tuple] = None
    name: str = ""
    provenance: str = ""
    cap: Optional[CapSpec] = None
    expected_value: Optional[float] = None
    extras: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        m = self.tenor.n_intervals
        if len(self.curve) != m:
            raise ContractViolation(
                f"{len(self.curve)} forwards for {m} tenor intervals"
            )
        if len(self.vols) != m:
            raise ContractViolation(f"vol table has {len(self.vols)} rows for {m} forwards")
        if self.stub_rate is not None and not self.stub_rate >= 0.0:
            raise ContractViolation("stub rate must be non-negative")
        if self.correlation is not None:
            rho = tuple(tuple(float(x) for x in row) for row in self.correlation)
            if len(rho) != m or any(len(r) != m for r in rho):
                raise ContractViolation(f"correlation matrix must be {m}x{m}")
            object.__setattr__(self, "correlation", rho)
        if self.cap is not None:
            self.cap.check(self.tenor)

    @property
    def n_forwards(self):
        return self.tenor.n_intervals

    @cached_property
    def discount(self):
        return bond_prices(self.curve, self.tenor, self.stub_rate)

    def correlation_matrix(self):
        if self.correlation is None:
            return np.eye(self.n_forwards)
        return np.array(self.correlation, dtype=float)


def bond_prices(curve, tenor, stub_rate=None):
    """Zero-coupon bonds from the forward curve.

    ``p(0,T_0) = 1 / (1 + tau_0 * r_stub)`` and
    ``p(0,T_i) = p(0,T_{i-1}) / (1 + tau_i * F_i(0))``.
    """
    if len(curve) != tenor.n_intervals:
        raise ContractViolation(
            f"{len(curve)} forwards for {tenor.n_intervals} tenor intervals"
        )
    rate = curve.forwards[0] if stub_rate is None else float(stub_rate)
    p = 1.0 / (1.0 + tenor.stub * rate)
    bonds = [p]
    for tau, fwd in zip(tenor.fractions, curve.forwards):
        p = p / (1.0 + tau * fwd)
        bonds.append(p)
    return DiscountCurve(tuple(bonds))


def _integrated_variance(surface, tenor, i, t):
    total = 0.0
    for j in range(1, i + 1):
        start, end = tenor.period_bounds(j)
        overlap = end - max(start, t)
        if overlap > 0.0:
            total += surface.sigma(i, j) ** 2 * overlap
    return total


def caplet_vol(surface, tenor, i, t=0.0):
    """Total volatility ``v_i = sqrt(int_t^{T_{i-1}} sigma_i(s)^2 ds)``.

    Raises:
        ExpiredCapletError: if ``t >= T_{i-1}``.
    """
    reset = tenor.reset(i)
    if t >= reset:
        raise ExpiredCapletError(f"caplet {i} reset at {reset} <= t={t}")
    return math.sqrt(_integrated_variance(surface, tenor, i, t))


def normalized_caplet_vol(surface, tenor, i):
    """``T_{i-1}``-caplet volatility: root of the time-averaged variance on ``[0, T_{i-1}]``."""
    reset = tenor.reset(i)
    if reset == 0.0:
        raise ZeroDivisionError(f"caplet {i} has zero horizon; normalized vol undefined")
    return math.sqrt(_integrated_variance(surface, tenor, i, 0.0) / reset)


def black76_caplet(F, K, v, tau=1.0, p=1.0):
    """Black-76 caplet value ``tau * p * (F N(d1) - K N(d2))``.

    Args:
        F: forward rate.
        K: strike.
        v: total (not annualized) volatility ``v_i``.
        tau: accrual year fraction.
        p: discount factor to the payment date.

    At ``v == 0`` the intrinsic value ``tau * p * max(F - K, 0)`` is returned.
    """
    if v < 0.0:
        raise DomainError(f"total volatility must be non-negative, got {v}")
    if v == 0.0:
        return tau * p * max(F - K, 0.0)
    if F <= 0.0 or K <= 0.0:
        raise DomainError(f"Black-76 needs F > 0 and K > 0, got F={F}, K={K}")
    d1 = (math.log(F / K) + 0.5 * v * v) / v
    d2 = d1 - v
    return float(tau * p * (F * norm_cdf(d1) - K * norm_cdf(d2)))


def black76_cap(dataset, spec):
    """Sum of Black-76 caplets with per-caplet total vol and discount factor."""
    spec.check(dataset.tenor)
    tenor = dataset.tenor
    total = 0.0
    for i in spec.caplets:
        if tenor.reset(i) == 0.0:
            v = 0.0
        else:
            v = caplet_vol(dataset.vols, tenor, i)
        total += black76_caplet(
            dataset.curve[i], spec.strike, v, tenor.tau(i), dataset.discount.pay(i)
        )
    return spec.notional * total


def drift_mu(k, i, forwards, surface, tenor, rho=None, t=0.0):
    """Drift coefficient ``mu_k^i`` of ``dF_k / F_k`` under the ``T_i``-forward measure.

    ``forwards`` holds the current values ``F_1(t)..F_M(t)``.
    """
    m = tenor.n_intervals
    if not (1 <= k <= m and 1 <= i <= m):
        raise ContractViolation(f"indices k={k}, i={i} outside 1..{m}")
    forwards = np.asarray(forwards, dtype=float)
    if forwards.shape != (m,):
        raise ContractViolation(f"expected {m} forwards, got shape {forwards.shape}")
    if np.any(forwards <= 0.0):
        raise ContractViolation("forwards must be positive")
    if k == i:
        return 0.0
    rho = np.eye(m) if rho is None else np.asarray(rho, dtype=float)
    period = tenor.period_at(t)
    sigma_k = surface.sigma(k, period)

    def term(j):
        tau_j = tenor.tau(j)
        f_j = forwards[j - 1]
        return tau_j * rho[k - 1, j - 1] * sigma_k * surface.sigma(j, period) * f_j / (1.0 + tau_j * f_j)

    if k < i:
        return -math.fsum(term(j) for j in range(k + 1, i + 1))
    return math.fsum(term(j) for j in range(i + 1, k + 1))
