import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from capqae.amplitude import (
    CapletProblemBuilder,
    DiscretizedDistribution,
    PayoffEncoding,
    build_caplet_problem,
    comparator,
    discretize_lognormal,
    iqae,
    load_distribution,
    payoff_rotation,
    postprocess_payoff,
    qae_error_bound,
)
from capqae.errors import ContractViolation, EstimationError
from capqae.qsim import AmplitudeOperator, Circuit, probability_of_one, run_circuit, ry


def random_dist(n, seed, uniform=False):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(1 << n, 0.7))
    if uniform:
        lo = rng.uniform(0.005, 0.05)
        grid = np.linspace(lo, lo + rng.uniform(0.01, 0.08), 1 << n)
    else:
        grid = np.sort(rng.uniform(0.01, 0.1, 1 << n))
        grid = grid + 1e-6 * np.arange(grid.size)  # strictly increasing
    return DiscretizedDistribution(grid, p / p.sum(), n, 0.0, 0.1)


def known_angle(a):
    return AmplitudeOperator(Circuit(1, [ry(2 * math.asin(math.sqrt(a)), 0)]), 0)


class TestDiscretize:
    @given(st.floats(-5, 0), st.floats(0.0, 1.0), st.integers(1, 6))
    def test_normalized(self, mu, s, n):
        d = discretize_lognormal(mu, s, n)
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert d.grid.size == 1 << n and np.all(np.diff(d.grid) > 0) and d.grid[0] > 0

    def test_degenerate(self):
        d = discretize_lognormal(math.log(0.05), 0.0, 3)
        assert d.probs[0] == 1.0 and d.grid[0] == pytest.approx(0.05, rel=1e-15)
        assert d.mean() == pytest.approx(0.05, rel=1e-15)

    def test_bounds(self):
        mu, s = math.log(0.05), 0.3
        d = discretize_lognormal(mu, s, 4)
        m = math.exp(mu + s * s / 2)
        sd = m * math.sqrt(math.expm1(s * s))
        assert d.grid[0] == pytest.approx(m - 3 * sd, rel=1e-12)
        assert d.grid[-1] == pytest.approx(m + 3 * sd, rel=1e-12)
        assert np.allclose(np.diff(d.grid), d.grid[1] - d.grid[0], rtol=1e-9)

    def test_floor(self):
        d = discretize_lognormal(math.log(0.05), 1.5, 3)
        assert d.grid[0] == pytest.approx(1e-9)

    def test_weights_follow_density(self):
        mu, s = math.log(0.06), 0.25
        d = discretize_lognormal(mu, s, 3)
        pdf = np.exp(-(np.log(d.grid) - mu) ** 2 / (2 * s * s)) / d.grid
        assert np.allclose(d.probs, pdf / pdf.sum(), rtol=1e-12)

    def test_scale_family_shares_weights(self):
        a = discretize_lognormal(math.log(0.05) - 0.02, 0.2, 3)
        b = discretize_lognormal(math.log(0.0731) - 0.02, 0.2, 3)
        assert a.probs.tobytes() == b.probs.tobytes()

    def test_mean_and_skew_bias(self):
        mu, s = math.log(0.07) - 0.02, 0.2
        d = discretize_lognormal(mu, s, 3)
        true_mean, _ = integrate.quad(
            lambda z: math.exp(mu + s * z - z * z / 2) / math.sqrt(2 * math.pi), -12, 12)
        true_skew = (math.exp(s * s) + 2) * math.sqrt(math.expm1(s * s))
        assert abs(d.mean() / true_mean - 1) < 0.02
        assert d.mean() < true_mean
        assert d.skewness() < true_skew

    def test_rejects(self):
        with pytest.raises(ContractViolation):
            discretize_lognormal(0.0, -0.1, 3)
        with pytest.raises(ContractViolation):
            discretize_lognormal(0.0, 0.1, 0)


class TestLoading:
    def test_identity_case(self):
        d = DiscretizedDistribution(np.array([1.0, 2.0]), np.array([1.0, 0.0]), 1, 0.0, 0.0)
        assert len(load_distribution(d)) == 0

    def test_even_split(self):
        d = DiscretizedDistribution(np.array([1.0, 2.0]), np.array([0.5, 0.5]), 1, 0.0, 0.1)
        s = run_circuit(load_distribution(d))
        assert np.allclose(s.amplitudes, [math.sqrt(0.5), math.sqrt(0.5)], atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_round_trip(self, n, seed):
        d = random_dist(n, seed)
        s = run_circuit(load_distribution(d))
        assert np.max(np.abs(s.probabilities - d.probs)) < 1e-9
        assert np.allclose(s.amplitudes, np.sqrt(d.probs), atol=1e-9)

    def test_sparse_distribution(self):
        p = np.zeros(8)
        p[[1, 6]] = [0.25, 0.75]
        d = DiscretizedDistribution(np.arange(1.0, 9.0), p, 3, 0.0, 0.1)
        assert np.allclose(run_circuit(load_distribution(d)).probabilities, p, atol=1e-12)


def ancilla_probability(d, K):
    circ, anc = comparator(d, K)
    return probability_of_one(run_circuit(load_distribution(d).widened(d.n_qubits + 1)
                                          .compose(circ)), anc)


class TestComparator:
    def test_extremes(self):
        d = random_dist(3, 1)
        assert ancilla_probability(d, 0.0) == pytest.approx(1.0, abs=1e-14)
        assert ancilla_probability(d, 1.0) == 0.0

    def test_random_instances(self):
        rng = np.random.default_rng(17)
        for k in range(100):
            n = int(rng.integers(1, 6))
            d = random_dist(n, 1000 + k)
            K = float(rng.choice(np.concatenate([d.grid, rng.uniform(0.0, 0.11, 4)])))
            tail = d.probs[d.grid >= K].sum()
            assert ancilla_probability(d, K) == pytest.approx(tail, abs=1e-12)

    def test_flips_exactly_the_tail(self):
        d = random_dist(4, 5)
        K = float(d.grid[11])
        circ, anc = comparator(d, K)
        for i in range(16):
            s = run_circuit(Circuit(5, [g for g in _basis(i)]).compose(circ))
            assert probability_of_one(s, anc) == (1.0 if i >= 11 else 0.0)


def _basis(i):
    from capqae.qsim import x

    return [x(q) for q in range(4) if (i >> q) & 1]


class TestPayoff:
    def test_encoding_invariants(self):
        d = random_dist(3, 2)
        enc = PayoffEncoding.for_strike(d, float(d.grid[3]))
        f = enc.normalized(d.grid)
        assert np.all((f >= 0) & (f <= 1)) and f[-1] == pytest.approx(1.0)
        with pytest.raises(ContractViolation):
            PayoffEncoding.for_strike(d, 0.05, c_approx=0.6)

    def test_zero_point(self):
        d = random_dist(3, 2)
        enc = PayoffEncoding.for_strike(d, 0.05)
        assert enc.payoff(enc.zero_point) == pytest.approx(0.0, abs=1e-15)
        enc = PayoffEncoding.for_strike(d, 0.05, exact=False)
        assert abs(enc.payoff(enc.zero_point)) <= enc.linearization_bound()

    def test_all_below_strike(self):
        d = random_dist(3, 3)
        op, enc = build_caplet_problem(d, 1.0)
        assert enc.zero
        assert probability_of_one(op.prepare(), op.objective) == 0.0
        assert enc.payoff(0.0) == 0.0

    @pytest.mark.parametrize("exact", [True, False])
    def test_single_atom(self, exact):
        d = discretize_lognormal(math.log(0.07), 0.0, 3)
        op, enc = build_caplet_problem(d, 0.05, exact=exact)
        a = probability_of_one(op.prepare(), op.objective)
        assert enc.payoff(a) == pytest.approx(0.07 - 0.05, abs=enc.linearization_bound() + 1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(0.0, 0.11))
    def test_classical_expectation(self, n, seed, K):
        d = random_dist(n, seed, uniform=True)
        for exact in (True, False):
            op, enc = build_caplet_problem(d, K, exact=exact)
            a = probability_of_one(op.prepare(), op.objective)
            tol = enc.linearization_bound() + 1e-12
            assert enc.payoff(a) == pytest.approx(d.expected_call(K), abs=tol)

    def test_exact_encoding_is_exact(self):
        d = discretize_lognormal(math.log(0.06), 0.2, 4)
        op, enc = build_caplet_problem(d, 0.065)
        a = probability_of_one(op.prepare(), op.objective)
        assert enc.payoff(a) == pytest.approx(d.expected_call(0.065), rel=1e-12)

    def test_linear_bound_is_attained_scale(self):
        enc = PayoffEncoding(0.05, 0, slope=100.0, offset=-5.0, exact=False)
        c = 0.25
        assert enc.linearization_bound() == pytest.approx((c - math.sin(2 * c) / 2) / (2 * c) / 100)

    def test_builder_matches_direct(self):
        b = CapletProblemBuilder()
        d = discretize_lognormal(math.log(0.06), 0.2, 3)
        op, enc, prepared = b.build(d, 0.065)
        direct, _ = build_caplet_problem(d, 0.065)
        assert np.allclose(prepared.amplitudes, direct.prepare().amplitudes, atol=1e-14)
        assert np.allclose(op.prepare().amplitudes, prepared.amplitudes, atol=1e-14)

    def test_monotone_in_strike(self):
        d = discretize_lognormal(math.log(0.06), 0.3, 4)
        vals = []
        for K in np.linspace(0.02, 0.12, 25):
            op, enc = build_caplet_problem(d, float(K))
            vals.append(enc.payoff(probability_of_one(op.prepare(), op.objective)))
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_linear_needs_uniform_grid(self):
        d = random_dist(3, 8)
        enc = PayoffEncoding.for_strike(d, float(d.grid[2]), exact=False)
        with pytest.raises(ContractViolation):
            payoff_rotation(d, float(d.grid[2]), enc)

    def test_rotation_needs_registers(self):
        d = random_dist(2, 4)
        enc = PayoffEncoding.for_strike(d, float(d.grid[1]))
        assert payoff_rotation(d, float(d.grid[1]), enc).n_qubits == 4


class TestIqae:
    def test_zero(self):
        op = AmplitudeOperator(Circuit(1), 0)
        for mode in ("exact", "shots"):
            r = iqae(op, 0.01, 0.05, mode, rng=np.random.default_rng(0))
            assert r.estimate <= 0.01 and r.ci_low == 0.0 and r.ci_high <= 0.01

    def test_one(self):
        op = AmplitudeOperator(Circuit(1, [ry(math.pi, 0)]), 0)
        assert iqae(op, 0.01, 0.05).estimate == pytest.approx(1.0, abs=1e-12)
        r = iqae(op, 0.01, 0.05, "shots", rng=np.random.default_rng(1))
        assert abs(r.estimate - 1.0) <= 0.01

    def test_exact_mode(self):
        r = iqae(known_angle(0.3), 1e-3, 0.05)
        assert r.estimate == pytest.approx(0.3, abs=1e-12)
        assert r.ci_low == r.ci_high and r.rounds == 1

    def test_coverage(self):
        op = known_angle(0.3)
        eps, alpha = 0.01, 0.05
        hits = 0
        for seed in range(200):
            r = iqae(op, eps, alpha, "shots", rng=np.random.default_rng(seed))
            assert r.ci_low <= r.estimate <= r.ci_high
            assert 0.0 <= r.ci_low and r.ci_high <= 1.0
            assert r.half_width <= eps + 1e-12
            hits += abs(r.estimate - 0.3) <= eps
        assert hits >= (1 - alpha) * 200

    def test_accounting(self):
        r = iqae(known_angle(0.42), 1e-3, 0.05, "shots", shots=50, rng=np.random.default_rng(3))
        assert r.samples == sum(2 * k + 1 for k in r.powers)
        assert r.oracle_calls == 50 * r.samples
        assert r.rounds == len(r.powers) and r.powers[0] == 0
        assert list(r.powers) == sorted(r.powers)

    def test_error_bound_on_known_angles(self):
        for a in (0.1, 0.5, 0.9):
            for eps in (0.05, 0.005, 0.0005):
                r = iqae(known_angle(a), eps, 0.05, "shots", rng=np.random.default_rng(11))
                assert abs(r.estimate - a) <= qae_error_bound(r.samples)

    def test_argument_checks(self):
        op = known_angle(0.3)
        with pytest.raises(ContractViolation):
            iqae(op, 0.0, 0.05)
        with pytest.raises(ContractViolation):
            iqae(op, 0.01, 1.0)
        with pytest.raises(ContractViolation):
            iqae(op, 0.01, 0.05, "shots")
        with pytest.raises(ContractViolation):
            iqae(op, 0.01, 0.05, "qft")

    def test_non_convergence(self):
        with pytest.raises(EstimationError) as err:
            iqae(known_angle(0.3), 1e-4, 0.05, "shots", rng=np.random.default_rng(0),
                 max_iterations=2)
        lo, hi = err.value.interval
        assert lo <= 0.3 + 0.1 and hi >= 0.3 - 0.1 and err.value.rounds == 2


class TestBoundAndPostprocess:
    def test_bound(self):
        assert qae_error_bound(1) == pytest.approx(math.pi + math.pi**2)
        assert qae_error_bound(10**9) < 1e-8
        with pytest.raises(ContractViolation):
            qae_error_bound(0)

    def test_degenerate_exact(self):
        d = discretize_lognormal(math.log(0.07), 0.0, 3)
        op, enc = build_caplet_problem(d, 0.05)
        est = postprocess_payoff(iqae(op, 0.01, 0.05), enc, 0.5, 0.9)
        assert est.value == pytest.approx(0.02 * 0.5 * 0.9, rel=1e-12)
        assert est.std_error == 0.0

    def test_shots_caplet(self):
        d = discretize_lognormal(math.log(0.06), 0.25, 3)
        K, eps = 0.06, 0.002
        op, enc = build_caplet_problem(d, K)
        r = iqae(op, eps, 0.05, "shots", rng=np.random.default_rng(2))
        est = postprocess_payoff(r, enc, 1.0, 0.95)
        expect = 0.95 * d.expected_call(K)
        scale = 0.95 * eps / (2 * enc.c_approx * enc.slope)
        assert abs(est.value - expect) <= scale
        assert est.std_error > 0.0
