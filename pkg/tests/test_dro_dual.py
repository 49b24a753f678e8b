import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentpriv.core_math import make_rng
from latentpriv.divergences import FGenerator, _f_array
from latentpriv.dro_dual import (
    AlphaDualSpec,
    DiscreteLossProblem,
    certificate_from_mu_tilde,
    conjugate,
    conjugate_alpha,
    conjugate_kl,
    conjugate_reverse_kl,
    corollary_minimum,
    corollary_objective,
    dual_minimum,
    dual_objective,
    duality_gap,
    kl_dual_reduced,
    optimal_lambda,
    primal_bruteforce,
    reparam_objective,
    solve_dual,
)

# mpmath, 30 digits
E_MINUS_1 = 1.71828182845904523536028747135
LOG_2 = 0.693147180559945309417232121458
CHI2_PRIMAL = 0.853553390593273762200422181052


def random_problem(seed, gen, delta=0.5, m=3):
    rng = make_rng(seed, "dro")
    return DiscreteLossProblem(rng.dirichlet(np.ones(m)), rng.normal(size=m), gen, delta)


def numeric_sup(gen, s, t):
    return np.max(s * t - _f_array(gen, t))


def test_conjugate_alpha_examples():
    for a in (0.5, 1.5, 2.0, 3.0):
        assert conjugate_alpha(a, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert conjugate_alpha(2.0, 1.0) == pytest.approx(1.5, abs=1e-15)
    assert conjugate_alpha(2.0, -2.0) == pytest.approx(-0.5, abs=1e-15)
    t = np.linspace(0, 20, 200_001)
    assert numeric_sup(FGenerator.from_alpha(2), 1.0, t) == pytest.approx(1.5, abs=1e-6)


def test_conjugate_kl_examples():
    assert conjugate_kl(0.0) == 0.0
    assert conjugate_kl(1.0) == pytest.approx(E_MINUS_1, abs=1e-15)
    assert conjugate_kl(-30.0) == pytest.approx(-1.0, abs=1e-12)
    t = np.linspace(1e-9, 10, 400_001)
    assert numeric_sup(FGenerator.kl(), 1.0, t) == pytest.approx(E_MINUS_1, abs=1e-6)


def test_conjugate_reverse_kl_examples():
    assert conjugate_reverse_kl(0.0) == 0.0
    assert conjugate_reverse_kl(0.5) == pytest.approx(LOG_2, abs=1e-15)
    with pytest.raises(ValueError):
        conjugate_reverse_kl(1.0)
    t = np.linspace(1e-6, 10, 400_001)
    assert numeric_sup(FGenerator.reverse_kl(), 0.5, t) == pytest.approx(LOG_2, abs=1e-6)


@pytest.mark.parametrize("gen", [FGenerator.kl(), FGenerator.reverse_kl(), FGenerator.chi2(),
                                 FGenerator.from_alpha(0.5), FGenerator.from_alpha(3.0)], ids=str)
def test_fenchel_young_on_grid(gen):
    s = np.linspace(-3, 0.9, 100)
    t = np.linspace(1e-3, 5, 100)
    fs = conjugate(gen, s)
    gap = fs[:, None] - (s[:, None] * t[None, :] - _f_array(gen, t)[None, :])
    assert gap.min() >= -1e-12


def test_dual_objective_constant_losses():
    prob = DiscreteLossProblem([0.3, 0.7], [2.0, 2.0], FGenerator.from_alpha(2), 0.4)
    assert dual_objective(prob, 0.8, 2.0) == pytest.approx(0.8 * 0.4 + 2.0, abs=1e-14)
    assert duality_gap(prob) <= 1e-10


def test_dual_objective_errors():
    prob = DiscreteLossProblem([0.5, 0.5], [0.0, 1.0], FGenerator.reverse_kl(), 0.3)
    with pytest.raises(ValueError):
        dual_objective(prob, 0.0, 0.0)
    with pytest.raises(ValueError):
        dual_objective(prob, 0.5, 0.0)


def test_kl_mu_reduction():
    for i in range(10):
        prob = random_problem(i, FGenerator.kl())
        for lam in (0.1, 0.7, 3.0):
            from latentpriv.dro_dual import _min_over_mu

            _, value = _min_over_mu(prob, lam)
            assert value == pytest.approx(kl_dual_reduced(prob, lam), abs=1e-8)


def test_optimal_lambda_example():
    spec = AlphaDualSpec(2.0, 0.5)
    prob = DiscreteLossProblem([0.5, 0.5], [0.0, 1.0], FGenerator.from_alpha(2), 0.5)
    assert optimal_lambda(spec, prob, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert optimal_lambda(spec, prob, 1.0) == 0.0
    assert optimal_lambda(spec, prob, 2.0) == 0.0


def test_spec_derived_fields():
    spec = AlphaDualSpec(3.0, 0.2)
    assert spec.a_tilde * (spec.alpha - 1) == pytest.approx(spec.alpha, abs=1e-12)
    with pytest.raises(ValueError):
        AlphaDualSpec(1.0, 0.2)
    with pytest.raises(ValueError):
        AlphaDualSpec(2.0, 0.0)


def test_certificate_reparameterization():
    spec = AlphaDualSpec(2.0, 0.5)
    prob = random_problem(3, FGenerator.from_alpha(2))
    cert = certificate_from_mu_tilde(spec, prob, -0.4)
    assert cert.lam >= 0
    assert cert.mu_tilde + cert.lam / (spec.alpha - 1) == pytest.approx(cert.mu, abs=1e-10)
    assert cert.dual_value == pytest.approx(corollary_objective(spec, prob, -0.4), abs=1e-8)


def test_corollary_constant_losses():
    spec = AlphaDualSpec(2.0, 0.5)
    prob = DiscreteLossProblem([0.5, 0.5], [1.0, 1.0], FGenerator.from_alpha(2), 0.5)
    assert corollary_objective(spec, prob, 0.25) == pytest.approx(spec.c_alpha_delta * 0.75 + 0.25, abs=1e-14)
    assert corollary_objective(spec, prob, 1.0 - 1e-12) == pytest.approx(1.0, abs=1e-10)


def test_chi2_primal_closed_form():
    prob = DiscreteLossProblem([0.5, 0.5], [0.0, 1.0], FGenerator.chi2(), 0.25)
    value, w = primal_bruteforce(prob)
    assert value == pytest.approx(CHI2_PRIMAL, abs=1e-6)
    variance_form = 0.5 + math.sqrt(2 * 0.25 * 0.25)
    assert variance_form == pytest.approx(CHI2_PRIMAL, abs=1e-15)
    assert dual_minimum(prob) == pytest.approx(CHI2_PRIMAL, abs=1e-6)


def test_primal_limits():
    losses = [0.2, -1.0, 0.9]
    probs = [0.2, 0.5, 0.3]
    zero = DiscreteLossProblem(probs, losses, FGenerator.kl(), 0.0)
    assert primal_bruteforce(zero)[0] == pytest.approx(np.dot(probs, losses), abs=1e-12)
    big = DiscreteLossProblem(probs, losses, FGenerator.chi2(), 1e6)
    assert primal_bruteforce(big)[0] == pytest.approx(0.9, abs=1e-6)


def test_primal_rejects_large_support():
    with pytest.raises(ValueError):
        primal_bruteforce(DiscreteLossProblem(np.full(7, 1 / 7), np.arange(7.0), FGenerator.kl(), 0.1))


def test_problem_validation():
    with pytest.raises(ValueError):
        DiscreteLossProblem([0.5, 0.6], [0.0, 1.0], FGenerator.kl(), 0.1)
    with pytest.raises(ValueError):
        DiscreteLossProblem([1.0], [0.0], FGenerator.kl(), 0.1)


def test_budget_monotone():
    base = random_problem(11, FGenerator.from_alpha(2))
    values = [primal_bruteforce(DiscreteLossProblem(base.base_probs, base.losses, base.generator, d))[0]
              for d in (0.01, 0.1, 0.5, 1.0, 2.0)]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("gen", [FGenerator.from_alpha(2), FGenerator.kl(), FGenerator.reverse_kl(),
                                 FGenerator.from_alpha(0.5), FGenerator.from_alpha(3)], ids=str)
def test_weak_duality_and_small_gap(gen):
    prob = random_problem(21, gen, delta=0.3)
    primal, _ = primal_bruteforce(prob)
    rng = make_rng(0, "weak", str(gen))
    for _ in range(50):
        lam = float(np.exp(rng.uniform(-3, 2)))
        mu = float(rng.uniform(-3, 3))
        try:
            val = dual_objective(prob, lam, mu)
        except ValueError:
            continue
        assert val >= primal - 1e-6
    assert abs(solve_dual(prob).dual_value - primal) <= 1e-3


def test_convexity_midpoints():
    prob = random_problem(4, FGenerator.from_alpha(2))
    rng = make_rng(1, "mid")
    for _ in range(200):
        a = np.array([np.exp(rng.uniform(-2, 1)), rng.uniform(-2, 2)])
        b = np.array([np.exp(rng.uniform(-2, 1)), rng.uniform(-2, 2)])
        m = (a + b) / 2
        lhs = dual_objective(prob, *m)
        assert lhs <= (dual_objective(prob, *a) + dual_objective(prob, *b)) / 2 + 1e-9


def test_lambda_star_beats_grid():
    spec = AlphaDualSpec(2.0, 0.5)
    for i in range(10):
        prob = random_problem(100 + i, FGenerator.from_alpha(2))
        mt = float(np.min(prob.losses))
        lam = optimal_lambda(spec, prob, mt)
        grid = np.logspace(-4, 3, 200)
        best = min(reparam_objective(spec, prob, g, mt) for g in grid)
        assert reparam_objective(spec, prob, lam, mt) <= best + 1e-6


def test_corollary_matches_joint_dual():
    spec = AlphaDualSpec(2.0, 0.5)
    for i in range(5):
        prob = random_problem(200 + i, FGenerator.from_alpha(2))
        _, value = corollary_minimum(spec, prob)
        assert value == pytest.approx(solve_dual(prob).dual_value, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-2.0, 0.5))
def test_corollary_convex_in_mu_tilde(delta, shift):
    spec = AlphaDualSpec(2.0, delta)
    prob = DiscreteLossProblem([0.2, 0.3, 0.5], [-1.0, 0.4, 1.1], FGenerator.from_alpha(2), delta)
    xs = shift + np.array([-0.3, 0.0, 0.3])
    v = [corollary_objective(spec, prob, x) for x in xs]
    assert v[1] <= (v[0] + v[2]) / 2 + 1e-9


def test_reparam_objective_lambda_zero_limit():
    spec = AlphaDualSpec(2.0, 0.5)
    prob = DiscreteLossProblem([0.5, 0.5], [0.0, 1.0], FGenerator.from_alpha(2), 0.5)
    assert reparam_objective(spec, prob, 0.0, 1.5) == 1.5
    assert reparam_objective(spec, prob, 0.0, 0.5) == math.inf
    with pytest.raises(ValueError):
        reparam_objective(spec, prob, -1.0, 0.5)
