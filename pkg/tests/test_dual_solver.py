import math

import numpy as np
import pytest

from microshell import dual_solver as dual
from microshell import observables as obs
from microshell import quadrature as quad
from microshell.errors import ArgumentError, Infeasible, NoFullTilt

S12 = obs.power_set([1, 2])
S123 = obs.power_set([1, 2, 3])
S115 = obs.power_set([1, 1.5])
S2 = obs.power_set([2])


class TestReducedSolve:
    def test_exponential_fixed_point(self):
        # first moment 1 with zero second tilt is exp(1) itself
        sol = dual.solve_reduced(S12, (1.0,))
        assert sol.achieved[0] == pytest.approx(1.0, abs=1e-10)
        assert sol.achieved[1] == pytest.approx(2.0, abs=1e-8)
        assert abs(sol.p[0]) <= 1e-8
        assert sol.p[1] == 0.0

    def test_scaled_exponential(self):
        # mean 2 with zero second tilt: rate-1/2 exponential, E x^2 = 8
        sol = dual.solve_reduced(S12, (2.0,))
        assert sol.achieved[0] == pytest.approx(2.0, abs=1e-8)
        assert sol.achieved[1] == pytest.approx(8.0, abs=1e-7)

    def test_three_constraint_prefix(self):
        sol = dual.solve_reduced(S123, (1.0, 2.0))
        assert np.allclose(sol.achieved[:2], [1.0, 2.0], atol=1e-8)
        assert sol.achieved[2] == pytest.approx(6.0, abs=1e-6)
        assert sol.p[2] == 0.0

    def test_s2_prefix_infeasible(self):
        # second moment above twice the squared mean cannot be reached
        # with a nonpositive quadratic tilt
        with pytest.raises(Infeasible):
            dual.solve_reduced(S123, (1.0, 2.5))

    def test_k1_has_no_reduced_problem(self):
        with pytest.raises(ArgumentError):
            dual.solve_reduced(S2, ())


class TestFullSolve:
    def test_interior_two_constraints(self):
        sol = dual.solve_full(S12, (1.0, 1.5))
        assert np.allclose(sol.achieved, [1.0, 1.5], atol=1e-8)
        assert sol.p[1] < 0

    def test_no_full_tilt_in_extraneous_regime(self):
        with pytest.raises(NoFullTilt):
            dual.solve_full(S12, (1.0, 3.0))

    def test_three_constraints(self):
        sol = dual.solve_full(S123, (1.0, 2.5, 7.0))
        assert np.allclose(sol.achieved, [1.0, 2.5, 7.0], atol=1e-8)
        assert sol.p[2] < 0

    def test_k1(self):
        sol = dual.solve_full(S2, (2.0,))
        assert sol.achieved[0] == pytest.approx(2.0, abs=1e-7)
        # half-Gaussian with second moment 2 is the p = 3/4 tilt
        assert sol.p[0] == pytest.approx(0.75, abs=1e-7)


class TestPhaseFunctions:
    @pytest.mark.parametrize("v1", [0.5, 1.0, 2.0, 4.0])
    def test_g2_is_twice_square(self, v1):
        assert dual.g2(S12, (v1,)) == pytest.approx(2.0 * v1 * v1, abs=1e-6)

    def test_g2_three_constraints(self):
        assert dual.g2(S123, (1.0, 2.0)) == pytest.approx(6.0, abs=1e-6)

    def test_g1_power_pair(self):
        # floor of the second moment given the mean: v1^(e2/e1)
        assert dual.g1(S12, (1.5,)) == pytest.approx(2.25, rel=1e-9)
        assert dual.g1(S12, (1.0,)) == pytest.approx(1.0, rel=1e-9)

    def test_g1_cubic_family(self):
        # POWERS[1,2,3]: floor of the third moment is v2^2 / v1
        assert dual.g1(S123, (1.0, 2.0)) == pytest.approx(4.0, rel=1e-9)

    def test_g1_fractional_pair_numeric(self):
        s = obs.power_set([1, 1.5])
        assert dual.g1(s, (2.0,)) == pytest.approx(2.0 ** 1.5, rel=1e-3)

    def test_g1_below_g2(self):
        v1 = 1.3
        assert dual.g1(S12, (v1,)) < dual.g2(S12, (v1,))


class TestClassify:
    def test_extraneous(self):
        rep = dual.classify(S12, (1.0, 3.0))
        assert rep.regime == "EXTRANEOUS"
        assert rep.g2 == pytest.approx(2.0, abs=1e-6)

    def test_interior(self):
        rep = dual.classify(S12, (1.0, 1.5))
        assert rep.regime == "INTERIOR_S1"
        assert rep.full.p[1] < 0
        assert np.allclose(rep.full.achieved, [1.0, 1.5], atol=1e-8)

    def test_inadmissible(self):
        rep = dual.classify(S12, (1.0, 0.5))
        assert rep.regime == "INADMISSIBLE"

    def test_full_tilt_s2(self):
        rep = dual.classify(S123, (1.0, 2.5, 7.0))
        assert rep.regime == "FULL_TILT_S2"
        assert rep.full.p[2] < 0
        assert np.allclose(rep.full.achieved, [1.0, 2.5, 7.0], atol=1e-8)

    def test_boundary_value_is_extraneous(self):
        rep = dual.classify(S12, (1.0, 2.0))
        assert rep.regime == "EXTRANEOUS"

    def test_k1_always_binds(self):
        rep = dual.classify(S2, (2.0,))
        assert rep.regime == "FULL_TILT_S2"


class TestLimitingMarginal:
    def test_extraneous_marginal_is_reduced_tilt(self):
        d = dual.limiting_marginal(S12, (1.0, 3.0))
        m = quad.moments(S12, list(d.p))
        assert m[0] == pytest.approx(1.0, abs=1e-8)
        assert m[1] == pytest.approx(2.0, abs=1e-7)

    def test_interior_marginal_matches_all_targets(self):
        d = dual.limiting_marginal(S12, (1.0, 1.5))
        m = quad.moments(S12, list(d.p))
        assert np.allclose(m, [1.0, 1.5], atol=1e-8)

    def test_inadmissible_has_no_marginal(self):
        with pytest.raises(Infeasible):
            dual.limiting_marginal(S12, (1.0, 0.5))
