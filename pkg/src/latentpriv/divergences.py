"""Closed-form and Monte-Carlo f-divergences between diagonal Gaussians."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import DiagonalGaussian, NumericalError, gaussian_log_density, gaussian_sample


@dataclass(frozen=True)
class FGenerator:
    """Convex generator ``f`` of an f-divergence, with ``f(1) = 0``.

    ``kind`` is one of ``"kl"``, ``"reverse_kl"``, ``"chi2"`` or ``"alpha"``.
    KL and reverse KL use the extended forms ``t log t - t + 1`` and
    ``-log t + t - 1`` which coincide with the alpha family at 1 and 0.
    """

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("kl", "reverse_kl", "chi2", "alpha"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "alpha":
            if self.alpha is None or self.alpha in (0.0, 1.0):
                raise ValueError("raw alpha generator needs alpha outside {0, 1}")

    @classmethod
    def kl(cls) -> "FGenerator":
        return cls("kl")

    @classmethod
    def reverse_kl(cls) -> "FGenerator":
        return cls("reverse_kl")

    @classmethod
    def chi2(cls) -> "FGenerator":
        return cls("chi2")

    @classmethod
    def from_alpha(cls, alpha: float) -> "FGenerator":
        """Alpha-family member; alpha 1 and 0 map to KL and reverse KL."""
        alpha = float(alpha)
        if alpha == 1.0:
            return cls("kl")
        if alpha == 0.0:
            return cls("reverse_kl")
        return cls("alpha", alpha)

    @property
    def effective_alpha(self) -> float:
        return {"kl": 1.0, "reverse_kl": 0.0, "chi2": 2.0}.get(self.kind, self.alpha)

    def __str__(self) -> str:
        return f"alpha({self.alpha:g})" if self.kind == "alpha" else self.kind


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    std_error: float
    n_samples: int


def _f_array(gen: FGenerator, t: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        if gen.kind == "kl":
            return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0) - t + 1.0
        if gen.kind == "reverse_kl":
            return -np.log(t) + t - 1.0
        if gen.kind == "chi2":
            return 0.5 * (t - 1.0) ** 2
        a = gen.alpha
        return (t**a - a * t + a - 1.0) / (a * (a - 1.0))


def f_eval(gen: FGenerator, t):
    """Evaluate the generator at ``t >= 0`` (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("f is defined for t >= 0 only")
    out = _f_array(gen, arr)
    if np.any(~np.isfinite(out) & (arr == 0)):
        raise ValueError(f"{gen} has no finite limit at t = 0")
    return float(out) if np.ndim(t) == 0 else out


def _check_dims(p: DiagonalGaussian, q: DiagonalGaussian) -> None:
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _check_same_variance(p: DiagonalGaussian, q: DiagonalGaussian) -> None:
    if np.max(np.abs(p.variance - q.variance)) > 1e-12:
        raise ValueError("variance vectors differ; equal-covariance form does not apply")


def kl_gaussian(p: DiagonalGaussian, q: DiagonalGaussian) -> float:
    """KL(p || q) for diagonal Gaussians, in nats."""
    _check_dims(p, q)
    ratio = p.variance / q.variance
    maha = (p.mean - q.mean) ** 2 / q.variance
    return 0.5 * float(np.sum(ratio - 1.0 - np.log(ratio) + maha))


def kl_same_covariance(p: DiagonalGaussian, q: DiagonalGaussian) -> float:
    """KL for a shared covariance: half the squared Mahalanobis mean gap."""
    _check_dims(p, q)
    _check_same_variance(p, q)
    return 0.5 * float(np.sum((p.mean - q.mean) ** 2 / q.variance))


def chi2_log_integral(p: DiagonalGaussian, q: DiagonalGaussian) -> float:
    """``log ∫ p²/q``, or ``inf`` when the integral diverges."""
    _check_dims(p, q)
    a = 2.0 / p.variance - 1.0 / q.variance
    if np.any(a <= 0):
        return math.inf
    b = 2.0 * p.mean / p.variance - q.mean / q.variance
    c = 2.0 * p.mean**2 / p.variance - q.mean**2 / q.variance
    per_dim = (
        0.5 * np.log(q.variance) - np.log(p.variance) - 0.5 * np.log(a) + 0.5 * (b**2 / a - c)
    )
    return float(np.sum(per_dim))


def chi2_gaussian(p: DiagonalGaussian, q: DiagonalGaussian) -> float:
    """χ² divergence ``E_q[½(p/q - 1)²] = ½(∫p²/q - 1)``.

    Returns ``math.inf`` when ``2/σ_p² - 1/σ_q² <= 0`` in some coordinate;
    callers probing that regime get a value rather than an exception.
    """
    log_int = chi2_log_integral(p, q)
    if math.isinf(log_int):
        return math.inf
    return max(0.5 * math.expm1(log_int), 0.0)


def chi2_converges(p: DiagonalGaussian, q: DiagonalGaussian) -> bool:
    return math.isfinite(chi2_log_integral(p, q))


def renyi_gaussian_equal_cov(p: DiagonalGaussian, q: DiagonalGaussian, alpha: float) -> float:
    """Rényi divergence of order ``alpha`` for a shared diagonal covariance."""
    _check_dims(p, q)
    if alpha <= 0 or alpha == 1:
        raise ValueError("Rényi order must be positive and different from 1")
    _check_same_variance(p, q)
    return 0.5 * alpha * float(np.sum((p.mean - q.mean) ** 2 / q.variance))


def _log_ratio_samples(p, q, x) -> np.ndarray:
    lr = gaussian_log_density(p, x) - gaussian_log_density(q, x)
    if not np.all(np.isfinite(lr)):
        raise NumericalError("non-finite log-likelihood ratio in Monte-Carlo draw")
    return lr


def f_divergence_mc(
    gen: FGenerator,
    p: DiagonalGaussian,
    q: DiagonalGaussian,
    rng: np.random.Generator,
    n: int,
) -> DivergenceEstimate:
    """Estimate ``D_f(p || q) = E_q[f(p/q)]`` from ``n`` draws of ``q``."""
    _check_dims(p, q)
    if n < 100:
        raise ValueError("n must be at least 100")
    x = gaussian_sample(q, rng, n)
    with np.errstate(over="ignore"):
        ratio = np.exp(_log_ratio_samples(p, q, x))
    vals = _f_array(gen, ratio)
    if not np.all(np.isfinite(vals)):
        bad = int(np.sum(~np.isfinite(vals)))
        raise NumericalError(f"{bad} of {n} likelihood ratios overflowed")
    return DivergenceEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)), n)


def kl_mc(p: DiagonalGaussian, q: DiagonalGaussian, rng, n: int) -> DivergenceEstimate:
    """``E_p[log p - log q]`` from draws of ``p`` (lighter tails than the q-side form)."""
    _check_dims(p, q)
    lr = _log_ratio_samples(p, q, gaussian_sample(p, rng, n))
    return DivergenceEstimate(float(lr.mean()), float(lr.std(ddof=1) / math.sqrt(n)), n)


def renyi_mc(p: DiagonalGaussian, q: DiagonalGaussian, alpha: float, rng, n: int) -> DivergenceEstimate:
    """``(α-1)⁻¹ log E_p[(p/q)^{α-1}]`` with a delta-method standard error."""
    _check_dims(p, q)
    if alpha <= 0 or alpha == 1:
        raise ValueError("Rényi order must be positive and different from 1")
    lr = _log_ratio_samples(p, q, gaussian_sample(p, rng, n))
    w = (alpha - 1.0) * lr
    shift = w.max()
    terms = np.exp(w - shift)
    m = terms.mean()
    se_rel = terms.std(ddof=1) / math.sqrt(n) / m
    value = (math.log(m) + shift) / (alpha - 1.0)
    return DivergenceEstimate(value, se_rel / abs(alpha - 1.0), n)
