import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microshell import diagnostics as diag
from microshell import observables as obs
from microshell import quadrature as quad
from microshell import sampler as smp
from microshell.errors import ArgumentError

S12 = obs.power_set([1, 2])
EXP1 = quad.tilted_density(S12, [0.0, 0.0])


def _fake_batch(states, n=None, a=(1.0, 3.0), delta=0.1):
    states = np.asarray(states, dtype=float)
    n = n or states.shape[1]
    spec = smp.ShellSpec(set=S12, n=n, delta=delta, a=a)
    return smp.SampleBatch(
        states=states,
        seed=0,
        acceptance_rate=1.0,
        shell_residuals=np.zeros(len(states)),
        spec=spec,
    )


class TestKSDistance:
    def test_exponential_draws_vs_exponential(self):
        rng = np.random.Generator(np.random.PCG64(42))
        draws = rng.standard_exponential(10000)
        # DKW at confidence 0.999 gives about 0.019 for 10^4 draws
        assert diag.ks_distance(draws, EXP1) <= 0.05

    def test_rate_two_reference(self):
        # sup_x |e^{-x} - e^{-2x}| = 1/4 attained at x = log 2
        rng = np.random.Generator(np.random.PCG64(43))
        draws = rng.standard_exponential(20000)
        d2 = quad.tilted_density(S12, [-1.0, 0.0])
        assert diag.ks_distance(draws, d2) == pytest.approx(0.25, abs=0.02)

    def test_self_distance_small(self):
        d = quad.tilted_density(S12, [0.3, -0.2])
        draws = smp.sample_tilted(d, n=1, count=20000, seed=1).ravel()
        assert diag.ks_distance(draws, d) <= 0.02

    def test_bounds(self):
        rng = np.random.Generator(np.random.PCG64(44))
        draws = rng.standard_exponential(100)
        val = diag.ks_distance(draws, EXP1)
        assert 0.0 <= val <= 1.0

    def test_empty_raises(self):
        with pytest.raises(ArgumentError):
            diag.ks_distance([], EXP1)

    def test_density_table_reference(self):
        spec = smp.ShellSpec(set=S12, n=2, delta=0.15, a=(1.0, 1.6))
        table = smp.brute_force_conditional(spec, grid_points=500)
        batch = smp.run_chain(
            spec, smp.ChainParams(burn_in=10000, thin=10, n_states=5000), seed=2
        )
        assert diag.ks_distance(batch.states.ravel(), table) <= 0.05


class TestMaxStats:
    def test_direct_evaluation(self):
        batch = _fake_batch([[1.0, 2.0]], a=(1.5, 2.5))
        (s,) = diag.max_stats(batch)
        assert s.M == pytest.approx(2.0)
        assert s.N == pytest.approx(0.5)
        assert s.argmax_index == 1

    def test_ties_give_m_equals_n_and_lowest_index(self):
        batch = _fake_batch([[2.0, 2.0, 2.0]], a=(2.0, 4.0))
        (s,) = diag.max_stats(batch)
        assert s.M == s.N
        assert s.argmax_index == 0

    def test_m_at_least_n(self):
        rng = np.random.Generator(np.random.PCG64(5))
        batch = _fake_batch(rng.random((50, 8)) + 0.1)
        for s in diag.max_stats(batch):
            assert s.M >= s.N >= 0

    @settings(max_examples=30, deadline=None)
    @given(st.permutations(list(range(6))))
    def test_permutation_invariant(self, perm):
        base = np.array([[0.5, 1.5, 0.7, 2.5, 0.2, 1.1]])
        batch1 = _fake_batch(base)
        batch2 = _fake_batch(base[:, perm])
        (a,), (b,) = diag.max_stats(batch1), diag.max_stats(batch2)
        assert a.M == b.M
        assert a.N == b.N

    def test_max_values_vector(self):
        batch = _fake_batch([[1.0, 3.0], [2.0, 1.0]], a=(1.0, 3.0))
        vals = diag.max_values(batch)
        assert np.allclose(vals, [4.5, 2.0])


class TestDefaultEpsilon:
    def test_extraneous_scale(self):
        assert diag.default_epsilon(3.0, 2.0) == pytest.approx(0.1)
        assert diag.default_epsilon(7.0, 2.0) == pytest.approx(0.5)

    def test_fallback(self):
        assert diag.default_epsilon(1.5, None) == pytest.approx(0.1)
        assert diag.default_epsilon(1.5, 2.0) == pytest.approx(0.1)


class TestTailRate:
    def _batches(self):
        rng = np.random.Generator(np.random.PCG64(6))
        out = []
        for n in (16, 32):
            states = rng.random((400, n)) + 0.05
            states[: 400 // (n // 8), -1] = math.sqrt(n)  # planted spikes
            out.append(_fake_batch(states, n=n))
        return out

    def test_requires_two_ns(self):
        with pytest.raises(ArgumentError):
            diag.tail_rate([self._batches()[0]], lambda s, sp: True, "LINEAR_N")

    def test_gamma_requires_gamma(self):
        with pytest.raises(ArgumentError):
            diag.tail_rate(self._batches(), lambda s, sp: True, "POWER_GAMMA")

    def test_estimates_nonpositive_and_ci_ordered(self):
        ests = diag.tail_rate(
            self._batches(), lambda s, sp: s.M >= 0.5, "LINEAR_N", event_label="big"
        )
        for e in ests:
            assert e.estimate <= 0.0
            assert e.ci[0] <= e.ci[1] <= 0.0

    def test_event_nesting_monotonicity(self):
        batches = self._batches()
        wide = diag.tail_rate(batches, lambda s, sp: s.M >= 0.2, "LINEAR_N")
        narrow = diag.tail_rate(batches, lambda s, sp: s.M >= 0.8, "LINEAR_N")
        for w, nrw in zip(wide, narrow):
            assert nrw.estimate <= w.estimate + 1e-12

    def test_censored_zero_count(self):
        ests = diag.tail_rate(
            self._batches(), lambda s, sp: s.M > 1e9, "LINEAR_N"
        )
        for e in ests:
            assert e.censored
            assert e.successes == 0
            assert e.estimate == pytest.approx(math.log(1.0 / e.trials) / e.n)

    def test_power_gamma_scaling(self):
        ests = diag.tail_rate(
            self._batches(), lambda s, sp: s.M >= 0.5, "POWER_GAMMA", gamma=0.5
        )
        for e in ests:
            assert e.gamma == 0.5
            assert e.estimate <= 0.0


class TestAppendixChecks:
    def test_exponential_closed_form_probability(self):
        # for exp(1) and phi_k = x^2 the interval probability has the
        # closed form e^{-sqrt((M-eps)n)} - e^{-sqrt((M+eps)n)}
        d = EXP1
        for M, n in [(1.0, 100), (0.5, 1000), (2.0, 100)]:
            lo = math.sqrt((M - 0.1) * n)
            hi = math.sqrt((M + 0.1) * n)
            expected = math.log(math.exp(-lo) - math.exp(-hi))
            got = quad.log_prob_interval(d, lo, hi)
            assert got == pytest.approx(expected, rel=1e-7)

    def test_report_for_exponential_small_levels(self):
        report = diag.appendix_checks(S12, EXP1, Ms=(0.5, 1.0))
        assert report.passed_decay_to_zero
        assert report.passed_gamma_bound
        assert report.passed_envelope
        assert report.rows

    def test_gamma_bound_finite_size_violation_is_reported(self):
        # at M=2, n=100 the closed form gives
        # log q = -sqrt(190) + log(1 - e^{-(sqrt(210)-sqrt(190))}) = -14.4636,
        # so (1/sqrt(n)) log q = -1.4464 < -sqrt(2): the asymptotic bound
        # genuinely fails at this finite n and the report must say so
        report = diag.appendix_checks(S12, EXP1, Ms=(2.0,), ns=(100, 1000, 10000))
        assert not report.passed_gamma_bound
        bad = [r for r in report.rows if r["n"] == 100]
        assert bad[0]["gamma_scaled"] == pytest.approx(-1.44636, abs=1e-4)
        assert bad[0]["gamma_scaled"] < bad[0]["gamma_bound"]

    def test_flag_consistent_with_rows(self):
        report = diag.appendix_checks(S12, EXP1)
        rows_ok = all(r["gamma_scaled"] >= r["gamma_bound"] for r in report.rows)
        assert report.passed_gamma_bound == rows_ok

    def test_halved_rate_reference(self):
        d = quad.tilted_density(S12, [0.5, 0.0])
        # coefficients (-0.5, 0): largest nonzero is c_1 < 0, still valid;
        # the bound holds at the larger n where the prefactor is negligible
        report = diag.appendix_checks(S12, d, Ms=(1.0,), ns=(1000, 10000))
        assert report.passed_gamma_bound

    def test_rejects_zero_tilt_coefficients(self):
        class Fake:
            lebesgue_coeffs = (0.0, 0.0)

        with pytest.raises(ArgumentError):
            diag.appendix_checks(S12, Fake())


class TestCSVWriters:
    def test_tail_rates_csv(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(7))
        batches = [
            _fake_batch(rng.random((50, n)) + 0.1, n=n) for n in (16, 32)
        ]
        ests = diag.tail_rate(batches, lambda s, sp: s.M > 0.1, "LINEAR_N",
                              event_label="e")
        path = tmp_path / "t.csv"
        diag.write_tail_rates_csv(ests, str(path), delta=0.1)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "n,delta,event,scaling,estimate,ci_lo,ci_hi"
        assert len(lines) == 3

    def test_summary_csv(self, tmp_path):
        rows = [{"n": 4, "delta": 0.1, "ks": 0.01, "mean_M": 0.5, "mean_N": 0.2}]
        path = tmp_path / "s.csv"
        diag.write_summary_csv(rows, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "n,delta,ks,mean_M,mean_N"
        assert lines[1].startswith("4,0.1,0.01")
