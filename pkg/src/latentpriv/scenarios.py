"""Synthetic latent scenarios standing in for a pretrained encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_math import DiagonalGaussian, LatentDataset, gaussian_log_density, make_rng


@dataclass(frozen=True)
class ScenarioSpec:
    """Mixture of diagonal Gaussians, one cell per (private, utility) pair.

    ``cell_means`` and ``cell_variances`` have shape ``(K_y, K_u, d)``;
    ``weights`` has shape ``(K_y, K_u)``.
    """

    name: str
    cell_means: np.ndarray
    cell_variances: np.ndarray
    weights: np.ndarray
    m: int
    seed: int = 42

    def __post_init__(self):
        means = np.asarray(self.cell_means, dtype=float)
        var = np.asarray(self.cell_variances, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if means.ndim != 3 or var.shape != means.shape:
            raise ValueError("cell means/variances must both be (K_y, K_u, d)")
        if w.shape != means.shape[:2]:
            raise ValueError("weights must be (K_y, K_u)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if not np.all(np.isfinite(means)) or np.any(var <= 0):
            raise ValueError("cell means must be finite and variances positive")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        object.__setattr__(self, "cell_means", means)
        object.__setattr__(self, "cell_variances", var)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.cell_means.shape[2]

    @property
    def n_private(self) -> int:
        return self.cell_means.shape[0]

    @property
    def n_utility(self) -> int:
        return self.cell_means.shape[1]

    def private_conditionals(self) -> tuple[np.ndarray, list[list[tuple[float, DiagonalGaussian]]]]:
        """``π_y`` and, per private class, its (weight, component) list."""
        pi = self.weights.sum(axis=1)
        comps = []
        for y in range(self.n_private):
            comps.append([
                (self.weights[y, u] / pi[y], DiagonalGaussian(self.cell_means[y, u], self.cell_variances[y, u]))
                for u in range(self.n_utility)
                if self.weights[y, u] > 0
            ])
        return pi, comps

    def marginal_log_density(self, x) -> np.ndarray:
        """Log-density of the full mixture at the rows of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        logs = []
        for y in range(self.n_private):
            for u in range(self.n_utility):
                w = self.weights[y, u]
                if w > 0:
                    g = DiagonalGaussian(self.cell_means[y, u], self.cell_variances[y, u])
                    logs.append(np.log(w) + gaussian_log_density(g, x))
        return np.logaddexp.reduce(np.stack(logs), axis=0)

    def with_size(self, m: int, seed: int | None = None) -> "ScenarioSpec":
        return ScenarioSpec(self.name, self.cell_means, self.cell_variances, self.weights, m,
                            self.seed if seed is None else seed)


def scenario_s1(m: int = 8000, seed: int = 42, d: int = 10, separation: float = 2.0) -> ScenarioSpec:
    """Private label on axis 0 (means ±2), utility label on axis 1 (means ±2),
    unit variances, uniform cells."""
    means = np.zeros((2, 2, d))
    for y in range(2):
        for u in range(2):
            means[y, u, 0] = separation * (2 * y - 1)
            means[y, u, 1] = separation * (2 * u - 1)
    return ScenarioSpec("S1", means, np.ones((2, 2, d)), np.full((2, 2), 0.25), m, seed)


def two_class_scenario(
    mean_gap: float, d: int = 1, variance: float = 1.0, m: int = 10_000, seed: int = 42, name: str = "two-class"
) -> ScenarioSpec:
    """Two equally likely private classes at ``±mean_gap/2`` on axis 0; utility
    label is a single class."""
    means = np.zeros((2, 1, d))
    means[0, 0, 0] = -mean_gap / 2
    means[1, 0, 0] = mean_gap / 2
    return ScenarioSpec(name, means, np.full((2, 1, d), float(variance)), np.array([[0.5], [0.5]]), m, seed)


BUILTIN_SCENARIOS = {"S1": scenario_s1}


def generate_scenario(spec: ScenarioSpec) -> LatentDataset:
    """Sample ``(z, y, u)`` triples from the cell mixture."""
    rng = make_rng(spec.seed, "scenario", spec.name)
    flat_w = spec.weights.ravel()
    cells = rng.choice(flat_w.size, size=spec.m, p=flat_w)
    y, u = np.divmod(cells, spec.n_utility)
    means = spec.cell_means[y, u]
    sd = np.sqrt(spec.cell_variances[y, u])
    z = means + sd * rng.standard_normal((spec.m, spec.d))
    return LatentDataset(z, y, u, spec.n_private, spec.n_utility)
