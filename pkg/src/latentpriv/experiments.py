"""Experiment drivers behind the CLI. Each returns ``(columns, rows)``."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import dp_mechanisms as dp
from .attacks import AttackConfig, ball_violation, fgsm, pgm
from .core_math import DiagonalGaussian, NumericalError, make_rng
from .divergences import (
    FGenerator,
    chi2_converges,
    chi2_gaussian,
    f_divergence_mc,
    kl_gaussian,
    kl_mc,
    kl_same_covariance,
    renyi_gaussian_equal_cov,
    renyi_mc,
)
from .dro_dual import (
    AlphaDualSpec,
    DiscreteLossProblem,
    certificate_from_mu_tilde,
    corollary_minimum,
    primal_bruteforce,
    solve_dual,
)
from .mi_bounds import (
    fit_class_conditionals,
    label_entropy,
    mi_cross_entropy_plugin,
    mi_lower_bound,
    mi_upper_bound_privatized,
    privatized_marginal,
)
from .privatizer import (
    FilterParameters,
    TrainConfig,
    accuracy,
    evaluate_release,
    filter_release,
    gaussian_release,
    identity_release,
    train_classifier,
    train_privatizer,
)
from .scenarios import ScenarioSpec, generate_scenario

DIVERGENCE_COLUMNS = ["pair", "kind", "d", "closed_form", "mc_estimate", "mc_std_error", "abs_z"]
DUAL_COLUMNS = [
    "trial", "generator", "delta", "atoms", "primal_value", "dual_value",
    "corollary_value", "gap", "lambda", "mu", "max_gap",
]
DP_COLUMNS = [
    "row_kind", "sensitivity", "epsilon", "delta", "alpha", "renyi_delta",
    "sigma", "sigma2", "literal_value", "exact_kl", "literal_admits", "exact_admits",
]
MI_COLUMNS = [
    "noise", "lower_raw", "lower_raw_se", "upper_priv", "upper_priv_se", "entropy_y",
    "upper_below_lower", "lower_method", "upper_method",
]
TRACE_COLUMNS = ["round", "adversary_ce", "utility_ce", "distortion", "adversary_acc", "utility_acc", "violated"]
SWEEP_COLUMNS = [
    "budget", "status", "distortion", "adv_acc", "util_acc", "raw_adv_acc", "raw_util_acc",
    "mi_lower_raw", "mi_upper_priv", "mi_plugin_priv",
    "baseline_sigma2", "baseline_adv_acc", "baseline_util_acc",
]
ATTACK_COLUMNS = [
    "norm", "epsilon", "steps", "step_size", "clean_acc", "fgsm_acc", "pgm_acc",
    "fgsm_max_violation", "pgm_max_violation",
]


def random_gaussian_pair(rng, d: int, same_variance: bool = False):
    """Random diagonal pair with variance ratios in [0.8, 1.25] and modest mean gaps."""
    mean_p = rng.normal(0.0, 0.5, d)
    mean_q = mean_p + rng.normal(0.0, 0.4 / math.sqrt(d), d)
    var_q = rng.uniform(0.5, 2.0, d)
    var_p = var_q.copy() if same_variance else var_q * np.exp(rng.uniform(-0.2, 0.2, d) / math.sqrt(d))
    return DiagonalGaussian(mean_p, var_p), DiagonalGaussian(mean_q, var_q)


def run_divergence(seed: int, d: int = 4, pairs: int = 20, n: int = 100_000, alpha: float = 2.0):
    rows = []
    for i in range(pairs):
        rng = make_rng(seed, "divergence", i)
        p, q = random_gaussian_pair(rng, d)
        ps, qs = random_gaussian_pair(rng, d, same_variance=True)
        cases = [
            ("kl", kl_gaussian(p, q), kl_mc(p, q, rng, n)),
            ("kl_same_cov", kl_same_covariance(ps, qs), kl_mc(ps, qs, rng, n)),
            ("renyi", renyi_gaussian_equal_cov(ps, qs, alpha), renyi_mc(ps, qs, alpha, rng, n)),
        ]
        if chi2_converges(p, q):
            cases.append(("chi2", chi2_gaussian(p, q), f_divergence_mc(FGenerator.chi2(), p, q, rng, n)))
        for kind, closed, est in cases:
            z = abs(est.value - closed) / est.std_error if est.std_error > 0 else 0.0
            rows.append([i, kind, d, closed, est.value, est.std_error, z])
    return DIVERGENCE_COLUMNS, rows


def random_dual_problem(rng, atoms: int, generator: FGenerator, delta: float) -> DiscreteLossProblem:
    p = rng.dirichlet(np.ones(atoms))
    p = p / p.sum()
    return DiscreteLossProblem(p, rng.normal(0.0, 1.0, atoms), generator, delta)


def run_dual_check(seed: int, alpha: float = 2.0, delta: float = 0.5, atoms: int = 3, trials: int = 50):
    gen = FGenerator.from_alpha(alpha)
    rows = []
    for t in range(trials):
        rng = make_rng(seed, "dual", t)
        prob = random_dual_problem(rng, atoms, gen, delta)
        primal, _ = primal_bruteforce(prob, seed=seed + t)
        cert = solve_dual(prob)
        if alpha > 1:
            spec = AlphaDualSpec(alpha, delta)
            mt, _ = corollary_minimum(spec, prob)
            corollary = certificate_from_mu_tilde(spec, prob, mt).dual_value
        else:
            corollary = float("nan")
        rows.append([t, str(gen), delta, atoms, primal, cert.dual_value, corollary,
                     abs(cert.dual_value - primal), cert.lam, cert.mu])
    max_gap = max(r[7] for r in rows)
    for r in rows:
        r.append(max_gap)
    return DUAL_COLUMNS, rows


def run_dp_calibrate(
    sensitivity: float = 1.0,
    epsilon: float = 0.5,
    delta: float = 0.05,
    tau: float | None = None,
    n: int | None = None,
    alpha: float | None = None,
    renyi_delta: float | None = None,
    budget_b: float | None = None,
    d: int = 4,
    base_variance: float = 1.0,
):
    budget = dp.PrivacyBudget(epsilon, delta)
    cal = dp.calibrate_approx_dp(sensitivity, budget)
    blank = ""
    rows = [["approx_dp", sensitivity, epsilon, delta, blank, blank, cal.sigma, cal.sigma2, blank, blank, blank, blank]]
    mech = None
    if tau is not None and n is not None:
        mech = dp.ProjectionMechanism(tau, n, d)
        s2 = dp.projection_sigma2(mech, budget)
        rows.append(["projection_approx_dp", mech.sensitivity(), epsilon, delta, blank, blank,
                     math.sqrt(s2), s2, blank, blank, blank, blank])
    if alpha is not None and renyi_delta is not None:
        if mech is None:
            raise ValueError("Rényi calibration needs --tau and --n")
        rc = dp.calibrate_renyi_dp(mech, alpha, renyi_delta)
        rows.append(["renyi_dp", rc.sensitivity, blank, blank, alpha, renyi_delta,
                     rc.sigma, rc.sigma2, rc.literal_sigma2, blank, blank, blank])
    if budget_b is not None:
        base = DiagonalGaussian(np.zeros(d), np.full(d, base_variance))
        v = dp.budget_admits_dp(base, sensitivity, budget, budget_b)
        rows.append(["kl_budget", sensitivity, epsilon, delta, blank, blank,
                     math.sqrt(v.sigma2), v.sigma2, v.literal_value, v.exact_kl,
                     int(v.literal_admits), int(v.exact_admits)])
    return DP_COLUMNS, rows


def noise_filter(d: int, n_private: int, noise: float) -> FilterParameters:
    return FilterParameters.from_blocks(noise * np.eye(d), np.zeros((d, n_private)))


def run_mi_bounds(spec: ScenarioSpec, noises, seed: int, prior: bool = False):
    data = generate_scenario(spec)
    model = fit_class_conditionals(data)
    lower = mi_lower_bound(data, model, true_marginal=spec.marginal_log_density)
    rows = []
    for k, noise in enumerate(noises):
        if noise <= 0:
            raise ValueError("noise scale must be positive")
        f = noise_filter(data.dim, data.n_private, noise)
        marg = privatized_marginal(data, f, make_rng(seed, "mi", k), prior=prior)
        upper = mi_upper_bound_privatized(data, f, marg)
        rows.append([noise, lower.value, lower.std_error, upper.value, upper.std_error,
                     label_entropy(data.private_labels, data.n_private),
                     int(upper.value < lower.value), lower.method,
                     upper.method + (":prior" if prior else ":fitted")])
    return MI_COLUMNS, rows


def run_train(spec: ScenarioSpec, cfg: TrainConfig):
    data = generate_scenario(spec)
    result = train_privatizer(data, cfg)
    return result, (TRACE_COLUMNS, [list(r) for r in result.trace.rows()])


def _raw_split(spec: ScenarioSpec):
    data = generate_scenario(spec)
    return data.split(0.75)


def run_budget_sweep(spec: ScenarioSpec, budgets, cfg: TrainConfig, eval_epochs: int = 20):
    train, test = _raw_split(spec)
    seed = cfg.seed
    raw = evaluate_release(train, test, identity_release, make_rng(seed, "eval", "raw"), hidden=cfg.hidden, epochs=eval_epochs)
    model = fit_class_conditionals(test)
    mi_lower = mi_lower_bound(test, model, true_marginal=spec.marginal_log_density).value
    base_variance = np.maximum(train.points.var(axis=0), 1e-6)
    base = DiagonalGaussian(np.zeros(train.dim), base_variance)
    rows = []
    for k, b in enumerate(budgets):
        row_cfg = replace(cfg, budget_b=b, seed=int(make_rng(seed, "row", k).integers(2**32)))
        try:
            res = train_privatizer(train, row_cfg, base_variance=base_variance)
        except NumericalError as exc:
            rows.append([b, f"diverged: {exc}"] + [""] * (len(SWEEP_COLUMNS) - 2))
            continue
        dist = res.trace.distortion[-1]
        ev_rng = make_rng(seed, "eval", k)
        ev = evaluate_release(train, test, filter_release(res.filter), ev_rng, hidden=cfg.hidden, epochs=eval_epochs)
        marg = privatized_marginal(test, res.filter, ev_rng)
        upper = mi_upper_bound_privatized(test, res.filter, marg).value
        priv_test = test.with_points(filter_release(res.filter)(test.points, test.private_labels, ev_rng))
        plugin = mi_cross_entropy_plugin(priv_test, ev.adversary)
        sigma2 = dp.sigma2_for_kl_budget(base, dist)
        bl = evaluate_release(train, test, gaussian_release(sigma2), make_rng(seed, "baseline", k),
                              hidden=cfg.hidden, epochs=eval_epochs)
        rows.append([b, "ok", dist, ev.adversary_acc, ev.utility_acc, raw.adversary_acc, raw.utility_acc,
                     mi_lower, upper, plugin, sigma2, bl.adversary_acc, bl.utility_acc])
    return SWEEP_COLUMNS, rows


def run_attack(spec: ScenarioSpec, epsilons, norms, steps: int, step_size: float, seed: int, epochs: int = 20):
    train, test = _raw_split(spec)
    clf = train_classifier(train.points, train.private_labels, train.n_private, make_rng(seed, "attack"), epochs=epochs)
    z, y = test.points, test.private_labels
    clean = accuracy(clf, z, y)
    rows = []
    for norm in norms:
        for eps in epsilons:
            cfg = AttackConfig(eps, norm, steps, step_size)
            zf = fgsm(clf, z, y, eps)
            zp, path = pgm(clf, z, y, cfg, return_path=True)
            pgm_violation = max(ball_violation(p, z, eps, norm) for p in path)
            rows.append([norm, eps, steps, step_size, clean, accuracy(clf, zf, y), accuracy(clf, zp, y),
                         ball_violation(zf, z, eps, "linf"), pgm_violation])
    return ATTACK_COLUMNS, rows
