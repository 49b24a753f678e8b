"""FGSM and projected-gradient attacks on latent-space classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .privatizer import MlpClassifier, cross_entropy_and_gradients

NORMS = ("l2", "linf")


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    norm: str = "l2"
    steps: int = 10
    step_size: float = 0.3

    def __post_init__(self):
        if self.epsilon <= 0 or self.step_size <= 0:
            raise ValueError("epsilon and step_size must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")


def input_gradient(c: MlpClassifier, z, y) -> np.ndarray:
    """Per-sample gradient of the cross-entropy with respect to the input."""
    z2 = np.atleast_2d(z)
    lg = cross_entropy_and_gradients(c, z2, np.atleast_1d(y))
    # the loss is a batch mean; undo the 1/m to get per-sample gradients
    return lg.input_grad * z2.shape[0]


def steepest_ascent_step(grad: np.ndarray, epsilon: float, norm: str) -> np.ndarray:
    """``argmax_{‖v‖_p <= ε} vᵀg`` row-wise; zero gradient gives a zero step."""
    if norm == "linf":
        return epsilon * np.sign(grad)
    n = np.linalg.norm(grad, axis=-1, keepdims=True)
    return np.where(n > 0, epsilon * grad / np.where(n > 0, n, 1.0), 0.0)


def project_ball(x, center, epsilon: float, norm: str) -> np.ndarray:
    """Project onto ``{x : ‖x - center‖_p <= ε}`` (row-wise for batches)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    if norm == "linf":
        return np.clip(x, center - epsilon, center + epsilon)
    if norm != "l2":
        raise ValueError(f"norm must be one of {NORMS}")
    diff = x - center
    n = np.linalg.norm(diff, axis=-1, keepdims=True)
    scale = np.where(n > epsilon, epsilon / np.where(n > 0, n, 1.0), 1.0)
    return center + diff * scale


def fgsm(c: MlpClassifier, z, y, epsilon: float) -> np.ndarray:
    """``z + ε·sign(∇_z ℓ)``; coordinates with zero gradient stay put."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z = np.asarray(z, dtype=float)
    g = input_gradient(c, z, y).reshape(z.shape)
    return z + epsilon * np.sign(g)


def pgm(c: MlpClassifier, z, y, cfg: AttackConfig, return_path: bool = False):
    """Projected gradient ascent on the loss inside the ε-ball around ``z``.

    Each step moves by ``η·ṽ`` with ``ṽ`` the steepest-ascent direction of
    norm ε, then projects back onto the ball centered at the original point.
    """
    z0 = np.asarray(z, dtype=float)
    zt = z0.copy()
    path = [zt.copy()]
    for _ in range(cfg.steps):
        g = input_gradient(c, zt, y).reshape(z0.shape)
        zt = project_ball(zt + cfg.step_size * steepest_ascent_step(g, cfg.epsilon, cfg.norm), z0, cfg.epsilon, cfg.norm)
        path.append(zt.copy())
    return (zt, path) if return_path else zt


def ball_violation(x, center, epsilon: float, norm: str) -> float:
    """Largest ``‖x - center‖_p - ε`` over rows (≤ 0 means inside)."""
    diff = np.atleast_2d(np.asarray(x) - np.asarray(center))
    if norm == "linf":
        dist = np.max(np.abs(diff), axis=1)
    else:
        dist = np.linalg.norm(diff, axis=1)
    return float(np.max(dist) - epsilon)
