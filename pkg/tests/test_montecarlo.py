import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from capqae.errors import ContractViolation, InsufficientSamplesError
from capqae.lmm import (
    CapSpec,
    ForwardCurve,
    MarketDataset,
    TenorStructure,
    VolSurface,
    black76_cap,
    black76_caplet,
    caplet_vol,
)
from capqae.montecarlo import (
    PriceEstimate,
    RngStream,
    caplet_payoff,
    gbm_step,
    mc_cap_price,
    mc_caplet_price,
    mc_error_model,
    simulate_caplet_terminal,
    simulate_forward,
    simulate_terminal_measure,
    validate_correlation,
)


def dataset(forwards, vols, start=1.0):
    n = len(forwards)
    return MarketDataset(TenorStructure.annual(n, start), ForwardCurve(tuple(forwards)),
                         VolSurface.constant_rows(tuple(vols)))


class TestRng:
    def test_replayable(self):
        a = RngStream(7, (1, 2)).normals(1000)
        b = RngStream(7, (1, 2)).normals(1000)
        assert np.array_equal(a, b)

    def test_substreams_differ(self):
        a = RngStream(7, (1,)).normals(100)
        assert not np.array_equal(a, RngStream(7, (2,)).normals(100))
        assert not np.array_equal(a, RngStream(8, (1,)).normals(100))
        assert np.array_equal(RngStream(7).child(1).normals(100), a)

    def test_prefix_stable(self):
        # counter-based: a shorter request is a prefix of a longer one
        s = RngStream(3, (9,))
        assert np.array_equal(s.normals(50), s.normals(500)[:50])

    def test_uniform_open_interval(self):
        u = RngStream(0).uniforms(100000)
        assert u.min() > 0.0 and u.max() < 1.0

    def test_normal_moments(self):
        z = RngStream(1).normals(200000)
        assert abs(z.mean()) < 4.0 / math.sqrt(z.size)
        assert abs(z.var() - 1.0) < 4.0 * math.sqrt(2.0 / z.size)
        assert stats.kstest(z, "norm").pvalue > 1e-3

    def test_rejects_bad_seed(self):
        with pytest.raises(ContractViolation):
            RngStream(-1)


class TestGbm:
    def test_zero_vol(self):
        assert gbm_step(0.05, 0.0, 1.0, 1.7) == 0.05

    def test_cancelling_draw(self):
        s, dt = 0.3, 2.0
        assert gbm_step(0.05, s, dt, s * math.sqrt(dt) / 2) == pytest.approx(0.05, rel=1e-15)

    def test_martingale_draws(self):
        z = RngStream(5).normals(10**6)
        f = gbm_step(0.05, 0.2, 1.0, z)
        assert abs(f.mean() - 0.05) < 3.0 * f.std(ddof=1) / math.sqrt(f.size)


class TestPayoff:
    def test_cases(self):
        assert caplet_payoff(0.04, 0.05, 1.0) == 0.0
        assert caplet_payoff(0.06, 0.05, 1.0) == pytest.approx(0.01)
        assert caplet_payoff(0.05, 0.05, 1.0) == 0.0

    def test_rejects_bad_tau(self):
        with pytest.raises(ContractViolation):
            caplet_payoff(0.06, 0.05, 0.0)

    @given(st.floats(0.0, 0.2), st.floats(0.0, 0.2), st.floats(0.0, 1.0), st.floats(0.001, 0.2))
    def test_convex(self, a, b, w, K):
        mid = caplet_payoff(w * a + (1 - w) * b, K, 1.0)
        assert mid <= w * caplet_payoff(a, K, 1.0) + (1 - w) * caplet_payoff(b, K, 1.0) + 1e-15


class TestSimulation:
    def test_zero_horizon(self):
        ds = dataset((0.05,), (0.2,), start=0.0)
        out = simulate_caplet_terminal(ds, 1, RngStream(0), 10)
        assert np.all(out == 0.05)

    def test_zero_vol(self):
        ds = dataset((0.05, 0.06), (0.0, 0.0))
        assert np.all(simulate_caplet_terminal(ds, 2, RngStream(0), 10) == 0.06)

    def test_prefix_periods_share_draws(self):
        ds = dataset((0.05, 0.06, 0.07), (0.2, 0.25, 0.3))
        rng = RngStream(4, (3,))
        part = simulate_forward(ds, 3, rng, 500, n_periods=2)
        z = rng.normals((3, 500))
        manual = gbm_step(gbm_step(np.full(500, 0.07), 0.3, 1.0, z[0]), 0.3, 1.0, z[1])
        assert np.array_equal(part, manual)

    @pytest.mark.parametrize("i", [1, 2, 3])
    def test_martingale_and_log_variance(self, benchmark, i):
        n = 10**5
        f = simulate_caplet_terminal(benchmark, i, RngStream(21, (i,)), n)
        f0 = benchmark.curve[i]
        assert abs(f.mean() - f0) < 4.0 * f.std(ddof=1) / math.sqrt(n)
        v2 = caplet_vol(benchmark.vols, benchmark.tenor, i) ** 2
        logvar = np.var(np.log(f), ddof=1)
        assert abs(logvar - v2) < 4.0 * v2 * math.sqrt(2.0 / (n - 1))


class TestPricing:
    def test_deterministic_limit(self):
        ds = dataset((0.05, 0.06, 0.07), (0.0, 0.0, 0.0))
        spec = CapSpec(0.04, 1, 3)
        est = mc_cap_price(ds, spec, 10, RngStream(0))
        p = ds.discount
        expect = sum(p.pay(i) * (f - 0.04) for i, f in enumerate((0.05, 0.06, 0.07), start=1))
        assert est.value == pytest.approx(expect, rel=1e-14)
        assert est.std_error == 0.0

    def test_converges_to_black(self, benchmark):
        spec = CapSpec(0.06, 2, 2)
        est = mc_cap_price(benchmark, spec, 2 * 10**5, RngStream(2))
        assert abs(est.value - black76_cap(benchmark, spec)) < 3.0 * est.std_error

    def test_bit_identical(self, benchmark):
        a = mc_cap_price(benchmark, benchmark.cap, 1000, RngStream(9))
        b = mc_cap_price(benchmark, benchmark.cap, 1000, RngStream(9))
        assert a == b

    def test_insufficient_samples(self, benchmark):
        with pytest.raises(InsufficientSamplesError):
            mc_cap_price(benchmark, benchmark.cap, 1, RngStream(0))

    def test_nonincreasing_in_strike(self, benchmark):
        vals = [mc_cap_price(benchmark, CapSpec(k, 1, 3), 2000, RngStream(3)).value
                for k in (0.04, 0.05, 0.06, 0.08, 0.1)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_root_sum_square_error(self, benchmark):
        rng = RngStream(6)
        est = mc_cap_price(benchmark, benchmark.cap, 500, rng)
        parts = [mc_caplet_price(benchmark, i, benchmark.cap.strike, 500, rng.child(i))[1]
                 for i in benchmark.cap.caplets]
        assert est.std_error == pytest.approx(math.sqrt(sum(p * p for p in parts)), rel=1e-14)

    def test_price_estimate_contract(self):
        with pytest.raises(ContractViolation):
            PriceEstimate(1.0, -1.0, 10, "classical")
        with pytest.raises(ContractViolation):
            PriceEstimate(1.0, 0.0, 0, "hybrid")
        with pytest.raises(ContractViolation):
            PriceEstimate(1.0, 0.0, 1, "magic")


class TestErrorModel:
    def test_scale(self):
        assert mc_error_model(0.0, 10) == 0.0
        assert mc_error_model(1.0, 400) == pytest.approx(mc_error_model(1.0, 100) / 2)

    def test_mean_abs_error(self):
        # E|N(0, s^2 / M)| = s sqrt(2/pi) / sqrt(M)
        F, K, s, M, trials = 0.05, 0.05, 0.2, 400, 400
        ds = dataset((F,), (s,))
        ref = black76_caplet(F, K, s, 1.0, ds.discount.pay(1))
        big = ds.discount.pay(1) * caplet_payoff(
            simulate_caplet_terminal(ds, 1, RngStream(99), 10**6), K, 1.0)
        sd = big.std(ddof=1)
        errs = [abs(mc_caplet_price(ds, 1, K, M, RngStream(100, (t,)))[0] - ref)
                for t in range(trials)]
        predicted = mc_error_model(sd, M) * math.sqrt(2.0 / math.pi)
        assert np.mean(errs) == pytest.approx(predicted, rel=0.1)


class TestTerminalMeasure:
    def test_correlation_validation(self):
        with pytest.raises(ContractViolation, match="symmetric"):
            validate_correlation([[1.0, 0.5], [0.4, 1.0]])
        with pytest.raises(ContractViolation, match="diagonal"):
            validate_correlation([[2.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ContractViolation, match="semidefinite"):
            validate_correlation([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        validate_correlation(np.ones((3, 3)))

    def test_last_forward_is_driftless(self, benchmark):
        n = 40000
        rho = np.full((10, 10), 0.5) + 0.5 * np.eye(10)
        joint = simulate_terminal_measure(benchmark, rho, n, RngStream(12))
        assert joint.shape == (n, 10)
        last = joint[:, -1]
        f0 = benchmark.curve[10]
        assert abs(last.mean() - f0) < 4.0 * last.std(ddof=1) / math.sqrt(n)
        v2 = caplet_vol(benchmark.vols, benchmark.tenor, 10) ** 2
        assert abs(np.var(np.log(last), ddof=1) - v2) < 4.0 * v2 * math.sqrt(2.0 / n)

    def test_last_caplet_matches_forward_measure(self, benchmark):
        n = 40000
        joint = simulate_terminal_measure(benchmark, np.eye(10), n, RngStream(13))
        K = 0.07
        pay = benchmark.discount.pay(10) * caplet_payoff(joint[:, -1], K, 1.0)
        ref = black76_caplet(benchmark.curve[10], K,
                             caplet_vol(benchmark.vols, benchmark.tenor, 10), 1.0,
                             benchmark.discount.pay(10))
        assert abs(pay.mean() - ref) < 3.0 * pay.std(ddof=1) / math.sqrt(n)

    def test_no_drift_without_other_vols(self):
        # identity correlation and zero vols elsewhere: every rate is a pure GBM
        ds = MarketDataset(TenorStructure.annual(3), ForwardCurve((0.05, 0.06, 0.07)),
                           VolSurface(((0.2,), (0.0, 0.0), (0.0, 0.0, 0.0))))
        joint = simulate_terminal_measure(ds, np.eye(3), 1000, RngStream(1))
        xi = RngStream(1).normals((3, 1000, 3))
        assert np.allclose(joint[:, 0], gbm_step(0.05, 0.2, 1.0, xi[0][:, 0]), rtol=1e-13)
        assert np.all(joint[:, 1] == 0.06) and np.all(joint[:, 2] == 0.07)
