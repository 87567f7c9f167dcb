import math

import numpy as np
import pytest

from drcert.certificates import (
    CertificateReport,
    certificate_report,
    deterministic_generalization_gap,
    grad_dual_certificate,
    lipschitz_certificate,
    lower_bound,
    p_ordering_check,
    upper_bound,
)
from drcert.rates import CostConfig, LinearPowerRegression, maximal_rate


def linear_profile(theta, r=2.0, n_points=4, seed=0, alpha=1.0, grid=None):
    rng = np.random.default_rng(seed)
    loss = LinearPowerRegression(alpha, np.asarray(theta, dtype=float), CostConfig(r=r))
    data = [(rng.normal(size=len(theta)), float(rng.normal())) for _ in range(n_points)]
    g = grid if grid is not None else np.linspace(0, 4, 33)
    return maximal_rate(loss, data, g), loss


class TestLinearEquality:
    def test_lb_cc_equal_eps_norm(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            theta = rng.normal(size=3)
            prof, loss = linear_profile(theta, seed=int(rng.integers(1e6)))
            norm = loss.gain
            for eps in rng.uniform(0.05, 3.5, size=4):
                eps = float(eps)
                assert abs(lower_bound(prof, 1.0, eps) - eps * norm) < 1e-9
                assert abs(upper_bound(prof, 1.0, eps) - eps * norm) < 1e-9

    def test_lb_vanishes_with_budget(self):
        prof, _ = linear_profile([1.0, 2.0])
        vals = [lower_bound(prof, 1.0, e) for e in (1e-3, 1e-6, 1e-9)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-8


class TestFinitenessDichotomy:
    def test_alpha_two_p_one_infinite(self):
        prof, _ = linear_profile([1.0], alpha=2.0)
        for eps in (0.01, 0.5, 2.0):
            assert lower_bound(prof, 1.0, eps) == math.inf
            assert upper_bound(prof, 1.0, eps) == math.inf

    def test_alpha_two_p_two_finite(self):
        prof, _ = linear_profile([1.0], alpha=2.0)
        for eps in (0.01, 0.5, 2.0):
            assert math.isfinite(lower_bound(prof, 2.0, eps))
            assert math.isfinite(upper_bound(prof, 2.0, eps))

    def test_simultaneous_flags_in_report(self):
        prof, _ = linear_profile([1.0], alpha=2.0)
        rep1 = certificate_report(prof, 1.0, [0.1, 0.5], empirical_risk=0.0)
        rep2 = certificate_report(prof, 2.0, [0.1, 0.5], empirical_risk=0.0)
        assert not rep1.finite
        assert rep2.finite


class TestPOrdering:
    P_LIST = [1.0, 1.5, 2.0, 4.0, math.inf]

    def test_linear_alpha_one(self):
        prof, _ = linear_profile([2.0, -1.0])
        res = p_ordering_check(prof, 1.0, self.P_LIST)
        assert res.ok, res.first_violation

    def test_saturating_rate(self):
        grid = np.linspace(0, 6, 49)
        from drcert.curves import Curve
        from drcert.rates import profile_from_curves

        sat = Curve(grid, 2.0 * (1.0 - np.exp(-grid)))
        prof = profile_from_curves([sat])
        for eps in (0.25, 1.0, 3.0):
            res = p_ordering_check(prof, eps, self.P_LIST)
            assert res.ok, res.first_violation

    def test_single_sample_quadratic(self):
        prof, _ = linear_profile([1.0], n_points=1, alpha=2.0)
        res = p_ordering_check(prof, 0.5, [2.0, 3.0, 4.0, math.inf])
        assert res.ok, res.first_violation

    def test_detects_violation(self):
        # a artificially non-monotone sequence cannot arise from the real
        # evaluators; check the comparator by picking inf before finite
        prof, _ = linear_profile([1.0], alpha=2.0)
        res = p_ordering_check(prof, 0.5, [1.0, 2.0])
        assert res.ok  # inf (p=1) >= finite (p=2) is the correct order


class TestBaselineCertificates:
    def test_lipschitz_values(self):
        assert lipschitz_certificate(2.0, 0.5) == 1.0
        assert lipschitz_certificate(0.0, 3.0) == 0.0

    def test_grad_dual_max_norm(self):
        grads = [np.array([1.0, 0.0]), np.array([0.0, -1.0])]
        assert grad_dual_certificate(grads, 1.0, 0.1, r=2) == pytest.approx(0.1)

    def test_grad_dual_q_two(self):
        grads = [np.array([1.0, 0.0]), np.array([3.0, 0.0])]
        got = grad_dual_certificate(grads, 2.0, 1.0, r=2)
        assert got == pytest.approx(math.sqrt(5.0))
        assert got == pytest.approx(2.2360679, abs=1e-6)

    def test_grad_dual_zero(self):
        assert grad_dual_certificate([np.zeros(3)], 2.0, 1.0) == 0.0


class TestDeterministicGap:
    def test_linear_class_below_radius_bound(self):
        rng = np.random.default_rng(9)
        c = 2.0
        profiles = []
        for _ in range(8):
            theta = rng.normal(size=3)
            theta *= c * rng.uniform(0, 1) / np.linalg.norm(theta)
            prof, _ = linear_profile(theta, seed=int(rng.integers(1e6)))
            profiles.append(prof)
        eps = 0.7
        assert deterministic_generalization_gap(profiles, eps) <= c * eps + 1e-9

    def test_singleton_equals_cc1(self):
        prof, _ = linear_profile([1.5, 0.5])
        eps = 0.3
        assert deterministic_generalization_gap([prof], eps) == upper_bound(prof, 1.0, eps)

    def test_two_profiles_max(self):
        p1, _ = linear_profile([1.0])
        p2, _ = linear_profile([3.0])
        eps = 0.2
        got = deterministic_generalization_gap([p1, p2], eps)
        assert got == max(upper_bound(p1, 1.0, eps), upper_bound(p2, 1.0, eps))


class TestReport:
    def test_json_roundtrip_with_inf(self):
        prof, _ = linear_profile([1.0], alpha=2.0)
        rep = certificate_report(prof, 1.0, [0.1, 0.2], empirical_risk=1.5,
                                 L=4.0, grads=[np.array([1.0])])
        text = rep.to_json()
        assert '"inf"' in text
        back = CertificateReport.from_json(text)
        assert back.lb[0] == math.inf
        assert back.empirical_risk == 1.5
        assert np.allclose(back.lipschitz, rep.lipschitz)

    def test_columns_ordered(self):
        prof, loss = linear_profile([1.0, 1.0])
        L = loss.gain  # exact Lipschitz constant of the loss
        rep = certificate_report(prof, 1.0, np.linspace(0.1, 1.0, 5),
                                 empirical_risk=0.0, L=L)
        assert np.all(rep.lb <= rep.cc + 1e-9)
        assert np.all(rep.cc <= rep.lipschitz + 1e-9)

    def test_rejects_bad_grid(self):
        prof, _ = linear_profile([1.0])
        with pytest.raises(ValueError):
            certificate_report(prof, 1.0, [], empirical_risk=0.0)
        with pytest.raises(ValueError):
            certificate_report(prof, 1.0, [0.2, 0.1], empirical_risk=0.0)


class TestPInfty:
    def test_lb_inf_sums_rates(self):
        prof, loss = linear_profile([2.0])
        eps = prof.maximal.t[7]
        expected = sum(w * c.value(float(eps), side="left")
                       for w, c in zip(prof.weights, prof.per_sample))
        assert lower_bound(prof, math.inf, float(eps)) == pytest.approx(expected)

    def test_cc_inf_right_limit(self):
        prof, _ = linear_profile([2.0], grid=np.linspace(0, 4, 5))
        eps = 1.5  # between knots 1 and 2: next knot value is 2 * 2 = 4
        assert upper_bound(prof, math.inf, eps) == pytest.approx(4.0)
        assert upper_bound(prof, math.inf, 4.0) == pytest.approx(8.0)  # slope tail
