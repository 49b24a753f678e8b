"""Divergence-constrained worst-case reweighting and its conjugate dual.

The primal problem reweights a finite set of atoms with base probabilities
``p`` to maximize the expected loss gap ``Δℓ`` subject to ``D_f(w || p) <= δ``.
Its dual is

    min_{λ>0, μ}  λ E_p[f*((Δℓ - μ)/λ)] + λδ + μ,

and for alpha generators with α > 1 the λ-minimization has a closed form
that leaves a one-dimensional problem in the shifted multiplier ``μ̃``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import golden_section, make_rng
from .divergences import FGenerator, _f_array

_LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class AlphaDualSpec:
    alpha: float
    delta: float
    beta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.alpha <= 1:
            raise ValueError("the closed-form lambda path needs alpha > 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    @property
    def a_tilde(self) -> float:
        return self.alpha / (self.alpha - 1.0)

    @property
    def c_alpha_delta(self) -> float:
        a = self.alpha
        at = self.a_tilde
        return (a * (a - 1.0) * self.delta + 1.0) ** (-(1.0 - at) / at)


@dataclass(frozen=True)
class DualCertificate:
    lam: float
    mu: float
    mu_tilde: float
    dual_value: float


@dataclass(frozen=True)
class DiscreteLossProblem:
    """Finite-support instance: atoms with base probabilities and loss gaps."""

    base_probs: np.ndarray
    losses: np.ndarray
    generator: FGenerator
    delta: float

    def __post_init__(self):
        p = np.asarray(self.base_probs, dtype=float)
        loss = np.asarray(self.losses, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("need at least two atoms")
        if loss.shape != p.shape:
            raise ValueError("losses and base_probs must have the same length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("base_probs must be a probability vector")
        if not np.all(np.isfinite(loss)):
            raise ValueError("losses must be finite")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        object.__setattr__(self, "base_probs", p)
        object.__setattr__(self, "losses", loss)

    @classmethod
    def from_losses(cls, probs, adv_loss, util_loss, beta, generator, delta):
        """Build ``Δℓ = ℓ - β·ℓ̃`` from adversary and utility losses per atom."""
        gap = np.asarray(adv_loss, float) - beta * np.asarray(util_loss, float)
        return cls(probs, gap, generator, delta)

    @property
    def m(self) -> int:
        return self.base_probs.size


# --- conjugates ------------------------------------------------------------


def conjugate_alpha(alpha: float, s):
    """Conjugate of the alpha generator, ``(1/α)[((α-1)s+1)₊^{α/(α-1)} - 1]``.

    For α < 1 the generator's slope is bounded above by ``1/(1-α)`` and the
    conjugate is ``+inf`` past that point; the clamp only applies for α > 1.
    """
    if alpha in (0.0, 1.0):
        raise ValueError("use conjugate_kl / conjugate_reverse_kl for alpha in {0, 1}")
    s = np.asarray(s, dtype=float)
    base = (alpha - 1.0) * s + 1.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if alpha > 1:
            val = (np.maximum(base, 0.0) ** (alpha / (alpha - 1.0)) - 1.0) / alpha
        else:
            val = np.where(base > 0, (np.where(base > 0, base, 1.0) ** (alpha / (alpha - 1.0)) - 1.0) / alpha, np.inf)
    return float(val) if val.ndim == 0 else val


def conjugate_kl(s):
    """Conjugate of ``t log t - t + 1``: ``e^s - 1``."""
    out = np.expm1(np.asarray(s, dtype=float))
    return float(out) if out.ndim == 0 else out


def conjugate_reverse_kl(s):
    """Conjugate of ``-log t + t - 1``: ``-log(1 - s)`` for ``s < 1``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr >= 1.0):
        raise ValueError("reverse-KL conjugate is infinite for s >= 1")
    out = -np.log1p(-s_arr)
    return float(out) if out.ndim == 0 else out


def conjugate(gen: FGenerator, s) -> np.ndarray:
    """Conjugate of any generator, returning ``inf`` outside its domain."""
    s = np.asarray(s, dtype=float)
    if gen.kind == "kl":
        with np.errstate(over="ignore"):
            return np.expm1(s)
    if gen.kind == "reverse_kl":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s < 1.0, -np.log1p(-np.minimum(s, 1.0 - 1e-300)), np.inf)
    return np.asarray(conjugate_alpha(gen.effective_alpha, s))


def _conjugate_slope_limit(gen: FGenerator) -> float:
    """Supremum of the conjugate's finite domain (``inf`` if unbounded)."""
    a = gen.effective_alpha
    return math.inf if a >= 1 else 1.0 / (1.0 - a)


# --- dual objective ----------------------------------------------------------


def _dual_value(problem: DiscreteLossProblem, lam: float, mu: float) -> float:
    s = (problem.losses - mu) / lam
    fs = conjugate(problem.generator, s)
    if not np.all(np.isfinite(fs)):
        return math.inf
    return float(lam * np.dot(problem.base_probs, fs) + lam * problem.delta + mu)


def dual_objective(problem: DiscreteLossProblem, lam: float, mu: float) -> float:
    """``λ E_p[f*((Δℓ - μ)/λ)] + λδ + μ``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    val = _dual_value(problem, lam, mu)
    if math.isinf(val):
        raise ValueError("conjugate evaluated outside its domain for this (lambda, mu)")
    return val


def kl_dual_reduced(problem: DiscreteLossProblem, lam: float) -> float:
    """KL dual after minimizing over μ: ``λδ + λ log E_p[exp(Δℓ/λ)]``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    x = problem.losses / lam
    mx = x.max()
    lse = mx + math.log(float(np.dot(problem.base_probs, np.exp(x - mx))))
    return lam * problem.delta + lam * lse


def _mu_bracket(problem: DiscreteLossProblem, lam: float) -> tuple[float, float]:
    lo, hi = float(problem.losses.min()), float(problem.losses.max())
    a = problem.generator.effective_alpha
    if a > 1:
        hi += lam / (a - 1.0)
    smax = _conjugate_slope_limit(problem.generator)
    if math.isfinite(smax):
        # μ must exceed max Δℓ - λ·smax for every conjugate argument to be finite
        edge = hi - lam * smax
        lo = max(lo, edge + 1e-12 * max(1.0, abs(edge), lam))
    return lo, hi


def _min_over_mu(problem: DiscreteLossProblem, lam: float) -> tuple[float, float]:
    lo, hi = _mu_bracket(problem, lam)
    if hi - lo <= 0:
        return hi, _dual_value(problem, lam, hi)
    return golden_section(lambda mu: _dual_value(problem, lam, mu), lo, hi, tol=1e-12)


def _lambda_range(problem: DiscreteLossProblem) -> tuple[float, float]:
    spread = float(np.ptp(problem.losses))
    scale = max(spread, 1e-12)
    lo = _LAMBDA_FLOOR * max(scale, 1.0)
    hi = 1e4 * max(scale, 1.0) / max(problem.delta, 1e-3)
    return lo, hi


def solve_dual(problem: DiscreteLossProblem, outer_iter: int = 64) -> DualCertificate:
    """Jointly minimize the dual over ``(λ, μ)``.

    Golden-section on ``log λ`` outside, on ``μ`` inside. For the KL
    generator μ is eliminated in closed form.
    """
    if float(np.ptp(problem.losses)) == 0.0:
        c = float(problem.losses[0])
        lam = _LAMBDA_FLOOR
        return DualCertificate(lam, c, c, c + lam * problem.delta)

    lo, hi = _lambda_range(problem)
    gen = problem.generator

    if gen.kind == "kl":
        def outer(log_lam):
            return kl_dual_reduced(problem, math.exp(log_lam))
    else:
        def outer(log_lam):
            return _min_over_mu(problem, math.exp(log_lam))[1]

    # golden section, fixed iteration count, on log λ
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = outer(c), outer(d)
    for _ in range(outer_iter):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = outer(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = outer(d)
    log_lam = c if fc <= fd else d
    lam = math.exp(log_lam)
    if gen.kind == "kl":
        x = problem.losses / lam
        mx = x.max()
        mu = lam * (mx + math.log(float(np.dot(problem.base_probs, np.exp(x - mx)))))
        value = kl_dual_reduced(problem, lam)
    else:
        mu, value = _min_over_mu(problem, lam)
    a_eff = gen.effective_alpha
    mu_tilde = mu - lam / (a_eff - 1.0) if a_eff != 1.0 else mu
    return DualCertificate(lam, mu, mu_tilde, value)


def dual_minimum(problem: DiscreteLossProblem) -> float:
    return solve_dual(problem).dual_value


# --- closed-form λ and the corollary objective ---------------------------------


def _positive_moment(spec: AlphaDualSpec, problem: DiscreteLossProblem, mu_tilde: float) -> float:
    pos = np.maximum(problem.losses - mu_tilde, 0.0)
    return float(np.dot(problem.base_probs, pos**spec.a_tilde))


def reparam_objective(
    spec: AlphaDualSpec, problem: DiscreteLossProblem, lam: float, mu_tilde: float
) -> float:
    """Dual in ``(λ, μ̃)`` with ``μ̃ = μ - λ/(α-1)``.

    ``(α-1)^ã α⁻¹ λ^{1-ã} E_p(Δℓ-μ̃)₊^ã + (δ + 1/(α(α-1)))λ + μ̃``
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    a, at = spec.alpha, spec.a_tilde
    moment = _positive_moment(spec, problem, mu_tilde)
    if lam == 0.0:
        # λ → 0 limit: finite only when no atom exceeds μ̃
        return mu_tilde if moment == 0.0 else math.inf
    return (
        (a - 1.0) ** at / a * lam ** (1.0 - at) * moment
        + (spec.delta + 1.0 / (a * (a - 1.0))) * lam
        + mu_tilde
    )


def optimal_lambda(spec: AlphaDualSpec, problem: DiscreteLossProblem, mu_tilde: float) -> float:
    """Stationary point of :func:`reparam_objective` in λ.

    Returns 0.0 when every positive part vanishes (``μ̃ >= max Δℓ``); the dual
    value then reduces to ``μ̃``.
    """
    a, at = spec.alpha, spec.a_tilde
    moment = _positive_moment(spec, problem, mu_tilde)
    if moment == 0.0:
        return 0.0
    return (a * (a - 1.0) * spec.delta + 1.0) ** (-1.0 / at) * (a - 1.0) * moment ** (1.0 / at)


def corollary_objective(spec: AlphaDualSpec, problem: DiscreteLossProblem, mu_tilde: float) -> float:
    """``c_{α,δ} [E_p(Δℓ - μ̃)₊^ã]^{1/ã} + μ̃``."""
    moment = _positive_moment(spec, problem, mu_tilde)
    return spec.c_alpha_delta * moment ** (1.0 / spec.a_tilde) + mu_tilde


def corollary_minimum(spec: AlphaDualSpec, problem: DiscreteLossProblem) -> tuple[float, float]:
    """Minimize the corollary objective over μ̃; returns ``(μ̃*, value)``."""
    lo_l, hi_l = float(problem.losses.min()), float(problem.losses.max())
    spread = max(hi_l - lo_l, 1e-12)
    return golden_section(
        lambda mt: corollary_objective(spec, problem, mt), lo_l - spread, hi_l, tol=1e-12
    )


def certificate_from_mu_tilde(
    spec: AlphaDualSpec, problem: DiscreteLossProblem, mu_tilde: float
) -> DualCertificate:
    """Map ``μ̃`` to ``(λ*, μ)`` and evaluate the original dual there."""
    lam = optimal_lambda(spec, problem, mu_tilde)
    if lam == 0.0:
        return DualCertificate(0.0, mu_tilde, mu_tilde, mu_tilde)
    mu = mu_tilde + lam / (spec.alpha - 1.0)
    return DualCertificate(lam, mu, mu_tilde, _dual_value(problem, lam, mu))


# --- brute-force primal oracle ---------------------------------------------------


def _divergence_of(problem: DiscreteLossProblem, w: np.ndarray) -> np.ndarray:
    """``Σ_i p_i f(w_i/p_i)`` for each row of ``w``."""
    p = problem.base_probs
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = _f_array(problem.generator, w / p)
    vals = np.where(np.isnan(vals), np.inf, vals)
    return np.sum(p * vals, axis=-1)


def _pull_back(problem: DiscreteLossProblem, v: np.ndarray, iters: int = 44) -> np.ndarray:
    """Largest ``t ∈ [0,1]`` per row with ``p + t(v - p)`` inside the budget."""
    p = problem.base_probs
    delta = problem.delta
    t = np.ones(v.shape[0])
    todo = _divergence_of(problem, v) > delta
    if np.any(todo):
        d = v[todo] - p
        lo = np.zeros(d.shape[0])
        hi = np.ones(d.shape[0])
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            feasible = _divergence_of(problem, p + mid[:, None] * d) <= delta
            lo = np.where(feasible, mid, lo)
            hi = np.where(feasible, hi, mid)
        t[todo] = lo
    return t


def _radial_values(problem: DiscreteLossProblem, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p, loss = problem.base_probs, problem.losses
    base = float(p @ loss)
    gain = (v - p) @ loss
    t = np.zeros(v.shape[0])
    up = gain > 0
    if np.any(up):
        t[up] = _pull_back(problem, v[up])
    w = p + t[:, None] * (v - p)
    return base + t * gain, w


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    n, m = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, m + 1)
    cond = u - css / ind > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _simplex_grid(m: int, k: int) -> np.ndarray:
    if m == 2:
        a = np.linspace(0.0, 1.0, k + 1)
        return np.stack([a, 1.0 - a], axis=1)
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    i, j = i[keep], j[keep]
    return np.stack([i, j, k - i - j], axis=1) / k


def primal_bruteforce(
    problem: DiscreteLossProblem,
    restarts: int = 256,
    iters: int = 150,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Maximize ``E_w[Δℓ]`` over reweightings ``w`` with ``D_f(w||p) <= δ``.

    Candidate points ``v`` on the simplex are pulled back toward ``p`` along
    the ray ``p + t(v - p)`` until the divergence budget holds; since the
    objective is linear, the farthest feasible point on each ray is the
    ray's best. Search over ``v`` combines a fine simplex grid (m <= 3) with
    projected-gradient ascent from random restarts, each step followed by a
    local random refinement.
    """
    if problem.m > 6:
        raise ValueError("brute-force oracle is limited to m <= 6 atoms")
    p, loss = problem.base_probs, problem.losses
    best_val = float(p @ loss)
    best_w = p.copy()
    if problem.delta == 0 or float(np.ptp(loss)) == 0.0:
        return best_val, best_w

    def consider(v):
        nonlocal best_val, best_w
        vals, ws = _radial_values(problem, v)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_w = float(vals[k]), ws[k].copy()
        return vals

    m = problem.m
    if m <= 3:
        consider(_simplex_grid(m, 2000 if m == 2 else 250))
    consider(np.eye(m))

    rng = make_rng(seed, "primal", m)
    v = rng.dirichlet(np.full(m, 0.5), size=restarts)
    vals = consider(v)
    step = 0.1
    g = loss - loss.mean()
    g = g / max(np.linalg.norm(g), 1e-300)
    for it in range(iters):
        # ascent direction is the loss itself; the radial pull-back handles the budget
        cand = _project_simplex(v + step * g + 0.3 * step * rng.standard_normal(v.shape))
        cvals = consider(cand)
        better = cvals > vals
        v[better] = cand[better]
        vals[better] = cvals[better]
        if it % 15 == 14:
            step *= 0.6
    return best_val, best_w


def duality_gap(problem: DiscreteLossProblem, seed: int = 0) -> float:
    """``|dual minimum - brute-force primal maximum|``."""
    primal, _ = primal_bruteforce(problem, seed=seed)
    return abs(dual_minimum(problem) - primal)
