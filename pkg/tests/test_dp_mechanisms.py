import math

import numpy as np
import pytest

from latentpriv import dp_mechanisms as dp
from latentpriv.core_math import DiagonalGaussian
from latentpriv.divergences import kl_gaussian, kl_mc, renyi_gaussian_equal_cov

# mpmath, 30 digits
SIGMA_L1 = 5.07454496471807864042965177259
PROJ_SIGMA2 = 1.03004026395782423974448597326
PROJ_SIGMA = 1.01490899294361572808593035452
EXACT_KL_D4 = 0.64396927327769246297453474416
ADDITIVE_KL_UNIT = 0.153426409720027345291383939271


def test_project_examples():
    assert np.array_equal(dp.project_l2([0.3, 0.4], 1.0), [0.3, 0.4])
    assert np.allclose(dp.project_l2([3.0, 4.0], 1.0), [0.6, 0.8], atol=1e-15)
    x = dp.project_l2([7.0, -2.0, 1.0], 1.5)
    assert np.linalg.norm(x) <= 1.5 + 1e-12
    assert np.array_equal(dp.project_l2(x, 1.5), x)


def test_project_nonexpansive(rng):
    a = rng.normal(0, 3, (10_000, 4))
    b = rng.normal(0, 3, (10_000, 4))
    lhs = np.linalg.norm(dp.project_l2(a, 2.0) - dp.project_l2(b, 2.0), axis=1)
    assert np.all(lhs <= np.linalg.norm(a - b, axis=1) + 1e-12)


def test_sensitivity_examples():
    mech = dp.ProjectionMechanism(1.0, 10)
    assert dp.sensitivity_bound(mech, 0) == 0.0
    assert dp.sensitivity_bound(mech, 1) == pytest.approx(0.2, abs=1e-15)
    assert dp.sensitivity_bound(mech, 10) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ValueError):
        dp.sensitivity_bound(mech, 11)


def test_single_swap_never_exceeds_bound(rng):
    mech = dp.ProjectionMechanism(1.0, 10, d=3)
    worst = 0.0
    for _ in range(10_000):
        pts = rng.normal(0, 2, (10, 3))
        other = pts.copy()
        other[rng.integers(10)] = rng.normal(0, 2, 3)
        worst = max(worst, float(np.linalg.norm(mech.query(pts) - mech.query(other))))
    assert worst <= 0.2 + 1e-12


def test_antipodal_swap_is_tight(rng):
    mech = dp.ProjectionMechanism(1.0, 10, d=3)
    pts = rng.normal(0, 1, (10, 3))
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    other = pts.copy()
    pts[0], other[0] = 5 * u, -5 * u
    assert np.linalg.norm(mech.query(pts) - mech.query(other)) >= 0.95 * 0.2


def test_calibrate_approx_dp():
    b = dp.PrivacyBudget(0.5, 0.05)
    assert dp.calibrate_approx_dp(1.0, b).sigma == pytest.approx(SIGMA_L1, abs=1e-12)
    assert dp.calibrate_approx_dp(2.0, b).sigma == pytest.approx(2 * SIGMA_L1, abs=1e-12)


def test_projection_route():
    mech = dp.ProjectionMechanism(1.0, 10)
    b = dp.PrivacyBudget(0.5, 0.05)
    s2 = dp.projection_sigma2(mech, b)
    assert s2 == pytest.approx(PROJ_SIGMA2, abs=1e-12)
    assert math.sqrt(s2) == pytest.approx(PROJ_SIGMA, abs=1e-12)
    assert abs(s2 - dp.calibrate_approx_dp(0.2, b).sigma2) <= 1e-10


def test_sigma_monotone():
    sig = [dp.calibrate_approx_dp(1.0, dp.PrivacyBudget(e, 0.05)).sigma for e in (0.1, 0.3, 0.6, 0.9)]
    assert all(b < a for a, b in zip(sig, sig[1:]))
    sig = [dp.calibrate_approx_dp(1.0, dp.PrivacyBudget(0.5, d)).sigma for d in (1e-5, 1e-3, 0.05, 0.5)]
    assert all(b < a for a, b in zip(sig, sig[1:]))


@pytest.mark.parametrize("eps,delta", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 1.0)])
def test_budget_range(eps, delta):
    with pytest.raises(ValueError):
        dp.PrivacyBudget(eps, delta)


def test_renyi_calibration():
    mech = dp.ProjectionMechanism(1.0, 10)
    cal = dp.calibrate_renyi_dp(mech, 2.0, 0.1)
    assert cal.sigma2 == pytest.approx(0.4, abs=1e-15)
    assert cal.literal_sigma2 == pytest.approx(0.2, abs=1e-15)
    p = DiagonalGaussian([0.0, 0.0], [cal.sigma2] * 2)
    q = DiagonalGaussian([0.2, 0.0], [cal.sigma2] * 2)
    assert renyi_gaussian_equal_cov(p, q, 2.0) == pytest.approx(0.1, abs=1e-10)
    with pytest.raises(ValueError):
        dp.calibrate_renyi_dp(mech, 1.0, 0.1)


def test_literal_renyi_matches_standard_at_order_one():
    # the α-carrying formula collapses to the literal one when α = 1
    mech = dp.ProjectionMechanism(1.0, 10)
    assert 1.0 * mech.sensitivity() ** 2 / (2 * 0.1) == pytest.approx(dp.calibrate_renyi_dp(mech, 2.0, 0.1).literal_sigma2)


def test_additive_kl(rng):
    base = DiagonalGaussian.standard(1)
    assert dp.kl_of_additive_gaussian(base, 1.0) == pytest.approx(ADDITIVE_KL_UNIT, abs=1e-15)
    assert dp.kl_of_additive_gaussian(base, 1e-14) <= 1e-20
    est = kl_mc(DiagonalGaussian([0.0], [2.0]), base, rng, 1_000_000)
    assert abs(est.value - ADDITIVE_KL_UNIT) <= 3 * est.std_error
    b = DiagonalGaussian([0.3, -1.0, 2.0], [0.5, 1.7, 3.0])
    widened = DiagonalGaussian(b.mean, b.variance + 0.8)
    assert dp.kl_of_additive_gaussian(b, 0.8) == pytest.approx(kl_gaussian(widened, b), abs=1e-12)


def test_literal_additive_kl_can_go_negative():
    b = DiagonalGaussian([0.0, 0.0], [4.0, 4.0])
    assert dp.kl_of_additive_gaussian_literal(b, 1.0) < 0 < dp.kl_of_additive_gaussian(b, 1.0)


def test_sigma2_for_budget_inverts():
    b = DiagonalGaussian([0.0] * 3, [0.5, 1.0, 2.0])
    s2 = dp.sigma2_for_kl_budget(b, 0.37)
    assert dp.kl_of_additive_gaussian(b, s2) == pytest.approx(0.37, abs=1e-9)


def test_budget_verdicts():
    unit = DiagonalGaussian.standard(4)
    budget = dp.PrivacyBudget(0.5, 0.05)
    v = dp.budget_admits_dp(unit, 1.0, budget, 1e9)
    assert v.literal_admits and v.exact_admits
    v = dp.budget_admits_dp(unit, 0.2, budget, 1.0)
    assert v.exact_kl == pytest.approx(EXACT_KL_D4, abs=1e-12)
    assert v.literal_value == 0.0
    assert v.exact_admits and v.literal_admits
    v = dp.budget_admits_dp(unit, 1.0, budget, 0.5)
    assert v.literal_admits and not v.exact_admits
    assert v.readings_disagree


def test_privacy_loss_tail(rng):
    cal = dp.calibrate_approx_dp(1.0, dp.PrivacyBudget(0.5, 0.05))
    p, se = dp.privacy_loss_tail(cal.sigma, 1.0, 0.5, rng, 1_000_000)
    assert p + 3 * se <= 1.5 * 0.05
