"""Variational bounds on the mutual information between latents and the
private label, evaluated by Monte Carlo."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .core_math import DiagonalGaussian, LatentDataset, gaussian_log_density, mc_mean
from .privatizer import FilterParameters, MlpClassifier, apply_filter, cross_entropy_and_gradients

VARIANCE_FLOOR = 1e-6
NOISE_JITTER = 1e-8


@dataclass(frozen=True)
class ClassConditionalModel:
    """Class weights ``π_y`` with one diagonal Gaussian ``p(z|y)`` per class."""

    weights: np.ndarray
    components: tuple[DiagonalGaussian, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.components) or w.size < 1:
            raise ValueError("one weight per component required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("class weights must sum to 1")
        if len({c.dim for c in self.components}) != 1:
            raise ValueError("all components must share a dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def n_classes(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def conditional_log_density(self, x, labels) -> np.ndarray:
        x = np.atleast_2d(x)
        labels = np.asarray(labels)
        out = np.empty(x.shape[0])
        for k, comp in enumerate(self.components):
            sel = labels == k
            if np.any(sel):
                out[sel] = gaussian_log_density(comp, x[sel])
        return out

    def marginal_log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        logs = [math.log(w) + gaussian_log_density(c, x) for w, c in zip(self.weights, self.components) if w > 0]
        return np.logaddexp.reduce(np.stack(logs), axis=0)


def fit_class_conditionals(data: LatentDataset, labels=None, n_classes: int | None = None) -> ClassConditionalModel:
    """Per-class frequencies, means and (floored) unbiased variances.

    Defaults to the private labels; pass ``labels`` with ``n_classes=1`` style
    arrays for a marginal fit.
    """
    z = data.points
    labels = data.private_labels if labels is None else np.asarray(labels)
    k = data.n_private if n_classes is None else n_classes
    comps = []
    counts = np.bincount(labels, minlength=k)
    for c in range(k):
        zc = z[labels == c]
        if zc.shape[0] < 2:
            raise ValueError(f"class {c} has fewer than 2 samples")
        comps.append(DiagonalGaussian(zc.mean(axis=0), np.maximum(zc.var(axis=0, ddof=1), VARIANCE_FLOOR)))
    return ClassConditionalModel(counts / counts.sum(), tuple(comps))


def fit_marginal(points) -> DiagonalGaussian:
    points = np.asarray(points, dtype=float)
    return DiagonalGaussian(points.mean(axis=0), np.maximum(points.var(axis=0, ddof=1), VARIANCE_FLOOR))


def label_entropy(labels, n_classes: int) -> float:
    """Entropy of the empirical label distribution, in nats."""
    counts = np.bincount(np.asarray(labels), minlength=n_classes)
    pi = counts[counts > 0] / counts.sum()
    return float(-np.sum(pi * np.log(pi)))


def mixture_entropy_quadrature(log_density: Callable[[np.ndarray], np.ndarray], lo, hi) -> float:
    """``-∫ q log q`` over the box ``[lo, hi]`` for d = 1 or 2."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.size == 1:
        def f(x):
            lq = float(log_density(np.array([[x]]))[0])
            return -math.exp(lq) * lq
        val, _ = integrate.quad(f, lo[0], hi[0], limit=400, epsabs=1e-11, epsrel=1e-10)
        return val
    if lo.size == 2:
        def g(x2, x1):
            lq = float(log_density(np.array([[x1, x2]]))[0])
            return -math.exp(lq) * lq
        val, _ = integrate.dblquad(g, lo[0], hi[0], lo[1], hi[1], epsabs=1e-9, epsrel=1e-8)
        return val
    raise ValueError("quadrature entropy supports d <= 2 only")


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str


def mi_lower_bound(
    data: LatentDataset,
    model: ClassConditionalModel,
    true_marginal: Callable[[np.ndarray], np.ndarray] | None = None,
    entropy_z: float | None = None,
) -> BoundEstimate:
    """``E[log p(z|y)] + H(z)``.

    ``H(z)`` comes from ``entropy_z`` when given (e.g. quadrature), otherwise
    from Monte Carlo against ``true_marginal`` if supplied, else against the
    fitted mixture ``Σ_y π_y p(z|y)``. In the Monte-Carlo cases the two terms
    share samples and the standard error covers their difference.
    """
    if model.dim != data.dim:
        raise ValueError(f"model dimension {model.dim} does not match data dimension {data.dim}")
    cond = model.conditional_log_density(data.points, data.private_labels)
    if entropy_z is not None:
        mean, se = mc_mean(cond)
        return BoundEstimate(mean + entropy_z, se, len(data), "entropy:given")
    if true_marginal is not None:
        marg, method = true_marginal(data.points), "entropy:mc-true-marginal"
    else:
        marg, method = model.marginal_log_density(data.points), "entropy:mc-fitted-mixture"
    mean, se = mc_mean(cond - marg)
    return BoundEstimate(mean, se, len(data), method)


def _kl_rows(means: np.ndarray, var: np.ndarray, target: DiagonalGaussian) -> np.ndarray:
    """KL(N(means_i, diag var) || target) for each row."""
    ratio = var / target.variance
    maha = (means - target.mean) ** 2 / target.variance
    return 0.5 * np.sum(ratio - 1.0 - np.log(ratio) + maha, axis=1)


def privatized_conditional_variance(f: FilterParameters) -> np.ndarray:
    """``diag(A_ε A_εᵀ) + jitter``, the diagonal conditional variance of z̃."""
    var = f.noise_variance() + NOISE_JITTER
    if np.any(var < NOISE_JITTER):
        raise ValueError("degenerate noise block")
    return var


def mi_upper_bound_privatized(
    data: LatentDataset, f: FilterParameters, marginal_model: DiagonalGaussian
) -> BoundEstimate:
    """``E_{z,y}[KL(q(z̃|z,y) || p(z̃))]`` with ε marginalized out.

    ``q(z̃|z,y)`` is taken as ``N(z + A_y e_y, diag(A_ε A_εᵀ) + 1e-8·I)``; the
    off-diagonal part of the noise covariance is dropped.
    """
    if f.dim != data.dim or marginal_model.dim != data.dim:
        raise ValueError("filter, marginal model and data dimensions must agree")
    var = privatized_conditional_variance(f)
    means = data.points + f.shifts(data.private_labels)
    kls = _kl_rows(means, np.broadcast_to(var, means.shape), marginal_model)
    mean, se = mc_mean(kls)
    return BoundEstimate(mean, se, len(data), "conditional:eps-marginalized-diagonal")


def privatized_marginal(data: LatentDataset, f: FilterParameters, rng, prior: bool = False) -> DiagonalGaussian:
    """Moment fit of ``p(z̃)`` on privatized samples, or ``N(0, I)`` if ``prior``."""
    if prior:
        return DiagonalGaussian.standard(data.dim)
    return fit_marginal(apply_filter(f, data.points, data.private_labels, rng))


def mi_cross_entropy_plugin(data: LatentDataset, classifier: MlpClassifier) -> float:
    """``H(y) - CE``: the classifier's variational lower bound on ``I(z; y)``."""
    if classifier.n_classes != data.n_private:
        raise ValueError("classifier output dimension must equal the private class count")
    if classifier.input_dim != data.dim:
        raise ValueError("classifier input dimension must equal the latent dimension")
    ce = cross_entropy_and_gradients(classifier, data.points, data.private_labels).loss
    return label_entropy(data.private_labels, data.n_private) - ce


@dataclass(frozen=True)
class MIBoundReport:
    lower_bound_raw: BoundEstimate
    upper_bound_priv: BoundEstimate
    entropy_y: float
    n_samples: int

    @property
    def upper_below_lower(self) -> bool:
        return self.upper_bound_priv.value < self.lower_bound_raw.value


def mi_report(
    data: LatentDataset,
    f: FilterParameters,
    rng,
    true_marginal=None,
    prior_marginal: bool = False,
) -> MIBoundReport:
    model = fit_class_conditionals(data)
    lower = mi_lower_bound(data, model, true_marginal=true_marginal)
    upper = mi_upper_bound_privatized(data, f, privatized_marginal(data, f, rng, prior=prior_marginal))
    return MIBoundReport(lower, upper, label_entropy(data.private_labels, data.n_private), len(data))
