"""Noise calibration for additive Gaussian mechanisms on latent vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import DiagonalGaussian, mc_mean
from .divergences import kl_gaussian


def project_l2(x, tau: float) -> np.ndarray:
    """Project ``x`` (or each row of ``x``) onto the ℓ₂ ball of radius ``tau``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norm > tau, tau / np.where(norm > 0, norm, 1.0), 1.0)
    return x * scale


@dataclass(frozen=True)
class ProjectionMechanism:
    """Mean of ``n`` ball-projected points, released with additive noise."""

    tau: float
    n: int
    d: int = 1

    def __post_init__(self):
        if self.tau <= 0 or self.n < 1 or self.d < 1:
            raise ValueError("need tau > 0, n >= 1, d >= 1")

    def sensitivity(self) -> float:
        return 2.0 * self.tau / self.n

    def query(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape != (self.n, self.d):
            raise ValueError(f"expected ({self.n}, {self.d}) points")
        return project_l2(points, self.tau).mean(axis=0)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (0 < self.epsilon < 1 and 0 < self.delta < 1):
            raise ValueError("epsilon and delta must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class MechanismCalibration:
    sigma: float
    mechanism_kind: str
    sensitivity: float
    epsilon: float | None = None
    delta: float | None = None
    alpha: float | None = None
    renyi_delta: float | None = None
    literal_sigma2: float | None = None

    @property
    def sigma2(self) -> float:
        return self.sigma**2


def sensitivity_bound(mech: ProjectionMechanism, k_differing: int) -> float:
    """Upper bound ``(2τ/n)·k`` on ‖ζ - ζ′‖ when ``k`` records differ."""
    if not 0 <= k_differing <= mech.n:
        raise ValueError("k must lie in [0, n]")
    return mech.sensitivity() * k_differing


def calibrate_approx_dp(sensitivity: float, budget: PrivacyBudget) -> MechanismCalibration:
    """Smallest σ allowed by the classical Gaussian-mechanism bound."""
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    sigma = sensitivity * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / budget.epsilon
    return MechanismCalibration(
        sigma, "approx_dp", sensitivity, epsilon=budget.epsilon, delta=budget.delta
    )


def projection_sigma2(mech: ProjectionMechanism, budget: PrivacyBudget) -> float:
    """``8τ² log(1.25/δ) / (n² ε²)`` for the single-swap projected mean."""
    return 8.0 * mech.tau**2 * math.log(1.25 / budget.delta) / (mech.n**2 * budget.epsilon**2)


def calibrate_renyi_dp(mech: ProjectionMechanism, alpha: float, renyi_delta: float) -> MechanismCalibration:
    """Noise for which the order-α Rényi divergence at the worst-case shift
    ``2τ/n`` equals ``renyi_delta``: ``σ² = α(2τ/n)²/(2δ)``.

    ``literal_sigma2`` carries ``2τ²/(n²δ)``, the α-free variant, which
    under-noises by a factor α and is reported only for comparison.
    """
    if alpha <= 1:
        raise ValueError("Rényi order must exceed 1")
    if renyi_delta <= 0:
        raise ValueError("Rényi budget must be positive")
    shift = mech.sensitivity()
    sigma2 = alpha * shift**2 / (2.0 * renyi_delta)
    literal = 2.0 * mech.tau**2 / (mech.n**2 * renyi_delta)
    return MechanismCalibration(
        math.sqrt(sigma2), "renyi_dp", shift, alpha=alpha, renyi_delta=renyi_delta,
        literal_sigma2=literal,
    )


def kl_of_additive_gaussian(base: DiagonalGaussian, sigma2) -> float:
    """Exact ``KL(N(μ, Σ₁ + σ²I) || N(μ, Σ₁))``.

    ``sigma2`` may be a scalar or a per-coordinate vector of added variance.
    """
    r = np.asarray(sigma2, dtype=float) / base.variance
    if np.any(r < 0):
        raise ValueError("added variance must be non-negative")
    return 0.5 * float(np.sum(r - np.log1p(r)))


def kl_of_additive_gaussian_literal(base: DiagonalGaussian, sigma2: float) -> float:
    """The variance-sum shortcut ``(σ²/2) Σ_j (1/σ_j² - 1)``.

    Not a divergence: it is zero for unit variances and negative once any
    σ_j exceeds 1. Kept for side-by-side reporting.
    """
    return 0.5 * sigma2 * float(np.sum(1.0 / base.variance - 1.0))


def _additive_kl_cross_check(base: DiagonalGaussian, sigma2: float) -> float:
    noisy = DiagonalGaussian(base.mean, base.variance + sigma2)
    return kl_gaussian(noisy, base)


def sigma2_for_kl_budget(base: DiagonalGaussian, budget: float) -> float:
    """Isotropic added variance whose exact additive-noise KL equals ``budget``."""
    if budget <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while kl_of_additive_gaussian(base, hi) < budget:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kl_of_additive_gaussian(base, mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BudgetVerdict:
    sigma2: float
    literal_value: float
    literal_admits: bool
    exact_kl: float
    exact_admits: bool

    @property
    def readings_disagree(self) -> bool:
        return self.literal_admits != self.exact_admits


def budget_admits_dp(
    base: DiagonalGaussian, sensitivity: float, budget: PrivacyBudget, b: float
) -> BudgetVerdict:
    """Does distortion budget ``b`` accommodate the DP-calibrated noise?

    The literal reading evaluates ``L² log(1.25/δ)/ε² · Σ(1/σ_j² - 1) <= b``;
    the exact reading compares the true additive-noise KL against ``b``.
    """
    if b <= 0:
        raise ValueError("budget b must be positive")
    sigma2 = calibrate_approx_dp(sensitivity, budget).sigma2
    literal = (
        sensitivity**2 * math.log(1.25 / budget.delta) / budget.epsilon**2
        * float(np.sum(1.0 / base.variance - 1.0))
    )
    exact = kl_of_additive_gaussian(base, sigma2)
    return BudgetVerdict(sigma2, literal, literal <= b, exact, exact <= b)


def privacy_loss_tail(
    sigma: float,
    shift: float,
    epsilon: float,
    rng: np.random.Generator,
    n: int,
    d: int = 1,
    chunk: int = 250_000,
) -> tuple[float, float]:
    """Monte-Carlo ``P[|log Q(z̃|ζ)/Q(z̃|ζ′)| > ε]`` with its standard error.

    ``ζ`` and ``ζ′`` sit ``shift`` apart along the first axis; draws come
    from ``Q(·|ζ)``. Sampling proceeds in fixed chunks so the result depends
    only on the generator state.
    """
    hits = []
    zeta = np.zeros(d)
    zeta_p = np.zeros(d)
    zeta_p[0] = shift
    left = n
    while left > 0:
        k = min(chunk, left)
        x = zeta + sigma * rng.standard_normal((k, d))
        loss = (np.sum((x - zeta_p) ** 2, axis=1) - np.sum((x - zeta) ** 2, axis=1)) / (2 * sigma**2)
        hits.append(np.abs(loss) > epsilon)
        left -= k
    return mc_mean(np.concatenate(hits).astype(float))
