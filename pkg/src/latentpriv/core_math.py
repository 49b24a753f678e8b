"""Numerical substrate: seeded RNG, diagonal Gaussians, latent datasets,
Monte-Carlo summaries and a central-difference gradient checker.

Every random draw in the package goes through :func:`make_rng`, which wraps
numpy's counter-based Philox bit generator. Normals come from numpy's
ziggurat sampler, so a fixed seed reproduces the same stream on any platform
numpy supports.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value it cannot recover from."""


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed`` and optional sub-keys.

    Sub-keys (ints or strings) derive independent streams deterministically,
    e.g. ``make_rng(42, "budget", 3)``.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    entropy = [int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class DiagonalGaussian:
    """Gaussian with diagonal covariance ``diag(variance)``."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        var = np.atleast_1d(np.asarray(self.variance, dtype=float)).copy()
        if mean.ndim != 1 or var.ndim != 1:
            raise ValueError("mean and variance must be vectors")
        if mean.shape != var.shape:
            raise ValueError(
                f"mean has length {mean.size} but variance has length {var.size}"
            )
        if mean.size < 1:
            raise ValueError("dimension must be at least 1")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        if not np.all(np.isfinite(var)) or np.any(var <= 0.0):
            raise ValueError("variance must be finite and strictly positive")
        mean.flags.writeable = False
        var.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @classmethod
    def standard(cls, d: int) -> "DiagonalGaussian":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def isotropic(cls, mean, variance: float) -> "DiagonalGaussian":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, np.full(mean.size, float(variance)))

    @property
    def dim(self) -> int:
        return self.mean.size

    def entropy(self) -> float:
        """Differential entropy in nats."""
        return 0.5 * float(np.sum(1.0 + LOG_2PI + np.log(self.variance)))


def gaussian_log_density(g: DiagonalGaussian, x) -> np.ndarray | float:
    """Log-density of ``g`` at ``x``.

    ``x`` may be a single point of length d (returns a float) or an ``(n, d)``
    array (returns a length-n array).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (g.dim,):
        raise ValueError(f"expected points of dimension {g.dim}, got shape {x.shape}")
    sq = (x - g.mean) ** 2 / g.variance
    out = -0.5 * (np.sum(np.log(g.variance)) + g.dim * LOG_2PI + np.sum(sq, axis=-1))
    return float(out) if x.ndim == 1 else out


def gaussian_sample(g: DiagonalGaussian, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. points, shape ``(n, d)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return g.mean + np.sqrt(g.variance) * rng.standard_normal((n, g.dim))


@dataclass(frozen=True)
class LatentDataset:
    """Latent points with their private and utility labels."""

    points: np.ndarray
    private_labels: np.ndarray
    utility_labels: np.ndarray
    n_private: int
    n_utility: int

    def __post_init__(self):
        z = np.asarray(self.points, dtype=float)
        if z.ndim != 2:
            raise ValueError("points must be an (m, d) array")
        y = np.asarray(self.private_labels).astype(np.int64)
        u = np.asarray(self.utility_labels).astype(np.int64)
        m = z.shape[0]
        if m < 1:
            raise ValueError("dataset must hold at least one sample")
        if y.shape != (m,) or u.shape != (m,):
            raise ValueError("label arrays must match the number of points")
        if self.n_private < 1 or self.n_utility < 1:
            raise ValueError("class counts must be positive")
        if y.min() < 0 or y.max() >= self.n_private:
            raise ValueError(f"private label outside 0..{self.n_private - 1}")
        if u.min() < 0 or u.max() >= self.n_utility:
            raise ValueError(f"utility label outside 0..{self.n_utility - 1}")
        for arr in (z, y, u):
            arr.flags.writeable = False
        object.__setattr__(self, "points", z)
        object.__setattr__(self, "private_labels", y)
        object.__setattr__(self, "utility_labels", u)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "LatentDataset":
        return LatentDataset(
            self.points[idx],
            self.private_labels[idx],
            self.utility_labels[idx],
            self.n_private,
            self.n_utility,
        )

    def with_points(self, points) -> "LatentDataset":
        return LatentDataset(
            points, self.private_labels, self.utility_labels, self.n_private, self.n_utility
        )

    def split(self, fraction: float) -> tuple["LatentDataset", "LatentDataset"]:
        """Split at ``fraction`` of the rows (no shuffling)."""
        k = int(round(len(self) * fraction))
        if not 0 < k < len(self):
            raise ValueError("split leaves an empty part")
        return self.subset(slice(0, k)), self.subset(slice(k, None))


def mc_mean(values) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"{int(np.sum(~np.isfinite(v)))} non-finite samples")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x: Sequence[float], h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Works on arrays of any shape; the result has the shape of ``x``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=float)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = float(f(x))
        flat[j] = orig - h
        fm = float(f(x))
        flat[j] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericalError(f"non-finite function value probing coordinate {j}")
        gflat[j] = (fp - fm) / (2.0 * h)
    return grad


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500
) -> tuple[float, float]:
    """Minimize a unimodal function on ``[lo, hi]``; returns ``(x, f(x))``.

    The endpoints are also compared so minima sitting on the bracket edge are
    returned exactly.
    """
    if hi < lo:
        lo, hi = hi, lo
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    fx, x = min(candidates, key=lambda t: t[0])
    return x, fx
