"""Generative linear filter trained against MLP adversary/utility classifiers.

The filter releases ``z̃ = z + A_ε ε + A_y onehot(y)`` with ``ε ~ N(0, I_d)``.
Training alternates SGD on the two classifiers with a gradient-ascent step
on ``A`` for ``CE_adv - β·CE_util - κ·(D̂ - b)₊²``, where ``D̂`` is the
Gaussian KL surrogate of the distortion between released and raw latents.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core_math import LatentDataset, NumericalError, make_rng

CHECKPOINT_FORMAT = "latentpriv-checkpoint"
CHECKPOINT_VERSION = 1


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label outside 0..{k - 1}")
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


# --- filter -------------------------------------------------------------------


@dataclass
class FilterParameters:
    """``A = [A_ε | A_y]`` of shape ``d × (d + K_y)``."""

    A: np.ndarray
    n_private: int

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        d = self.A.shape[0]
        if self.A.ndim != 2 or self.A.shape[1] != d + self.n_private:
            raise ValueError(f"A must be d x (d + K_y), got {self.A.shape}")
        if not np.all(np.isfinite(self.A)):
            raise ValueError("filter entries must be finite")

    @classmethod
    def zeros(cls, d: int, n_private: int) -> "FilterParameters":
        return cls(np.zeros((d, d + n_private)), n_private)

    @classmethod
    def from_blocks(cls, a_eps, a_y) -> "FilterParameters":
        a_eps = np.asarray(a_eps, dtype=float)
        a_y = np.asarray(a_y, dtype=float)
        return cls(np.hstack([a_eps, a_y]), a_y.shape[1])

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def a_eps(self) -> np.ndarray:
        return self.A[:, : self.dim]

    @property
    def a_y(self) -> np.ndarray:
        return self.A[:, self.dim :]

    def noise_variance(self) -> np.ndarray:
        """Diagonal of ``A_ε A_εᵀ``."""
        return np.sum(self.a_eps**2, axis=1)

    def shifts(self, labels) -> np.ndarray:
        """Deterministic part ``A_y onehot(y)`` per label, shape ``(m, d)``."""
        return one_hot(labels, self.n_private) @ self.a_y.T


def apply_filter(f: FilterParameters, z, y, rng: np.random.Generator, eps=None) -> np.ndarray:
    """Privatize one point or a batch; ``eps`` overrides the sampled noise."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    labels = np.atleast_1d(np.asarray(y))
    if z2.shape[1] != f.dim:
        raise ValueError(f"expected latent dimension {f.dim}, got {z2.shape[1]}")
    if labels.shape[0] != z2.shape[0]:
        raise ValueError("one label per point required")
    if eps is None:
        eps = rng.standard_normal(z2.shape)
    out = z2 + np.atleast_2d(eps) @ f.a_eps.T + f.shifts(labels)
    return out[0] if single else out


def distortion_estimate(f: FilterParameters, labels, base_variance) -> float:
    """KL surrogate of the distortion for a batch with private ``labels``.

    Mean shift term ``(1/2m) Σ_i ‖A_y e_{y_i}‖²_{Σ⁻¹}`` plus the exact KL of
    the added per-coordinate variance ``diag(A_ε A_εᵀ)``.
    """
    return _distortion_and_grad(f, labels, base_variance)[0]


def _distortion_and_grad(f: FilterParameters, labels, base_variance):
    var = np.asarray(base_variance, dtype=float)
    if var.shape != (f.dim,):
        raise ValueError(f"base_variance must have length {f.dim}")
    if np.any(var <= 0):
        raise ValueError("base_variance must be positive")
    labels = np.asarray(labels, dtype=np.int64)
    freq = np.bincount(labels, minlength=f.n_private)[: f.n_private] / labels.size
    a_y, a_eps = f.a_y, f.a_eps
    col_sq = np.sum(a_y**2 / var[:, None], axis=0)
    shift_term = 0.5 * float(freq @ col_sq)
    s = f.noise_variance()
    r = s / var
    noise_term = 0.5 * float(np.sum(r - np.log1p(r)))
    g_y = a_y / var[:, None] * freq[None, :]
    dnoise_ds = 0.5 * (1.0 / var - 1.0 / (var + s))
    g_eps = 2.0 * a_eps * dnoise_ds[:, None]
    return shift_term + noise_term, np.hstack([g_eps, g_y])


# --- classifier ---------------------------------------------------------------


def _elu(t):
    return np.where(t >= 0, t, np.expm1(np.minimum(t, 0.0)))


def _elu_grad(t):
    return np.where(t >= 0, 1.0, np.exp(np.minimum(t, 0.0)))


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MlpClassifier:
    """FC(hidden) → ELU → FC(K), softmax on top."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    PARAMS = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, d: int, k: int, rng: np.random.Generator, hidden: int = 15) -> "MlpClassifier":
        return cls(
            rng.standard_normal((hidden, d)) / math.sqrt(d),
            np.zeros(hidden),
            rng.standard_normal((k, hidden)) / math.sqrt(hidden),
            np.zeros(k),
        )

    @classmethod
    def zeros(cls, d: int, k: int, hidden: int = 15) -> "MlpClassifier":
        return cls(np.zeros((hidden, d)), np.zeros(hidden), np.zeros((k, hidden)), np.zeros(k))

    @property
    def n_classes(self) -> int:
        return self.W2.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def copy(self) -> "MlpClassifier":
        return MlpClassifier(*(getattr(self, n).copy() for n in self.PARAMS))

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _elu(x @ self.W1.T + self.b1) @ self.W2.T + self.b2

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)


def mlp_forward(c: MlpClassifier, x) -> np.ndarray:
    """Class probabilities for one input or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != c.input_dim:
        raise ValueError(f"expected inputs of dimension {c.input_dim}")
    return _softmax(c.logits(x))


@dataclass
class LossGrad:
    loss: float
    grads: dict[str, np.ndarray]
    input_grad: np.ndarray


def cross_entropy_and_gradients(c: MlpClassifier, x, labels) -> LossGrad:
    """Mean cross-entropy with gradients for parameters and inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    m = x.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    pre = x @ c.W1.T + c.b1
    h = _elu(pre)
    logits = h @ c.W2.T + c.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    logp = shifted - log_norm[:, None]
    loss = -float(np.mean(logp[np.arange(m), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(m), labels] -= 1.0
    dlogits /= m
    dh = dlogits @ c.W2
    dpre = dh * _elu_grad(pre)
    grads = {
        "W1": dpre.T @ x,
        "b1": dpre.sum(axis=0),
        "W2": dlogits.T @ h,
        "b2": dlogits.sum(axis=0),
    }
    return LossGrad(loss, grads, dpre @ c.W1)


def sgd_step(c: MlpClassifier, grads: dict[str, np.ndarray], lr: float) -> None:
    for name, g in grads.items():
        getattr(c, name)[...] -= lr * g


def accuracy(c: MlpClassifier, x, labels) -> float:
    return float(np.mean(c.predict(x) == np.asarray(labels)))


def train_classifier(
    x,
    labels,
    n_classes: int,
    rng: np.random.Generator,
    *,
    hidden: int = 15,
    epochs: int = 20,
    lr: float = 0.1,
    batch_size: int = 128,
) -> MlpClassifier:
    """Fit a fresh classifier with minibatch SGD."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    c = MlpClassifier.init(x.shape[1], n_classes, rng, hidden)
    m = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start : start + batch_size]
            lg = cross_entropy_and_gradients(c, x[idx], labels[idx])
            sgd_step(c, lg.grads, lr)
    return c


# --- training loop ------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    budget_b: float = 1.0
    penalty_kappa: float = 10.0
    lr_filter: float = 0.02
    lr_adv: float = 0.05
    lr_util: float = 0.05
    steps_adv: int = 5
    steps_util: int = 5
    steps_filter: int = 1
    rounds: int = 2000
    batch_size: int = 128
    hidden: int = 15
    seed: int = 42

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        positive = ("budget_b", "penalty_kappa", "lr_filter", "lr_adv", "lr_util")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        counts = ("steps_adv", "steps_util", "steps_filter", "rounds", "batch_size", "hidden")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class TrainTrace:
    adversary_ce: list[float] = field(default_factory=list)
    utility_ce: list[float] = field(default_factory=list)
    distortion: list[float] = field(default_factory=list)
    adversary_acc: list[float] = field(default_factory=list)
    utility_acc: list[float] = field(default_factory=list)
    violated: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.distortion)

    def rows(self):
        for r in range(len(self)):
            yield (
                r,
                self.adversary_ce[r],
                self.utility_ce[r],
                self.distortion[r],
                self.adversary_acc[r],
                self.utility_acc[r],
                int(self.violated[r]),
            )


@dataclass
class TrainResult:
    filter: FilterParameters
    adversary: MlpClassifier
    utility: MlpClassifier
    trace: TrainTrace
    base_variance: np.ndarray


def filter_objective_and_grad(
    f: FilterParameters,
    adv: MlpClassifier,
    util: MlpClassifier,
    z,
    y,
    u,
    eps,
    all_labels,
    base_variance,
    cfg: TrainConfig,
) -> tuple[float, np.ndarray]:
    """Filter ascent objective ``CE_adv - β·CE_util - κ(D̂ - b)₊²`` and its
    gradient in ``A`` for fixed noise ``eps``.

    The distortion uses ``all_labels`` so the penalty does not jitter with
    the batch's label mix.
    """
    zt = apply_filter(f, z, y, None, eps=eps)
    a = cross_entropy_and_gradients(adv, zt, y)
    v = cross_entropy_and_gradients(util, zt, u)
    g_z = a.input_grad - cfg.beta * v.input_grad
    grad = np.hstack([g_z.T @ eps, g_z.T @ one_hot(y, f.n_private)])
    dist, g_dist = _distortion_and_grad(f, all_labels, base_variance)
    excess = max(dist - cfg.budget_b, 0.0)
    value = a.loss - cfg.beta * v.loss - cfg.penalty_kappa * excess**2
    return value, grad - 2.0 * cfg.penalty_kappa * excess * g_dist


def train_privatizer(
    data: LatentDataset, cfg: TrainConfig, base_variance=None
) -> TrainResult:
    """Alternating min-max training of the filter and both classifiers.

    ``base_variance`` is the per-coordinate variance of the raw latents used
    in the distortion surrogate; it defaults to the data's empirical
    variance.
    """
    z = data.points
    y = data.private_labels
    u = data.utility_labels
    m, d = z.shape
    if base_variance is None:
        base_variance = np.maximum(z.var(axis=0), 1e-6)
    base_variance = np.asarray(base_variance, dtype=float)

    rng = make_rng(cfg.seed, "train")
    filt = FilterParameters(0.01 * rng.standard_normal((d, d + data.n_private)), data.n_private)
    adv = MlpClassifier.init(d, data.n_private, rng, cfg.hidden)
    util = MlpClassifier.init(d, data.n_utility, rng, cfg.hidden)
    trace = TrainTrace()
    bs = min(cfg.batch_size, m)

    def batch():
        idx = rng.integers(0, m, size=bs)
        eps = rng.standard_normal((bs, d))
        return idx, eps, apply_filter(filt, z[idx], y[idx], rng, eps=eps)

    # overflow shows up as non-finite losses, which the round check turns into NumericalError
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(cfg.rounds):
            for _ in range(cfg.steps_adv):
                idx, _, zt = batch()
                lg = cross_entropy_and_gradients(adv, zt, y[idx])
                sgd_step(adv, lg.grads, cfg.lr_adv)
            adv_ce, adv_acc = lg.loss, accuracy(adv, zt, y[idx])
            for _ in range(cfg.steps_util):
                idx, _, zt = batch()
                lg = cross_entropy_and_gradients(util, zt, u[idx])
                sgd_step(util, lg.grads, cfg.lr_util)
            util_ce, util_acc = lg.loss, accuracy(util, zt, u[idx])
            try:
                for _ in range(cfg.steps_filter):
                    idx, eps, _ = batch()
                    _, grad = filter_objective_and_grad(
                        filt, adv, util, z[idx], y[idx], u[idx], eps, y, base_variance, cfg
                    )
                    filt.A += cfg.lr_filter * grad
                dist = distortion_estimate(filt, y, base_variance)
            except OverflowError as exc:
                raise NumericalError(f"training diverged at round {r}") from exc
            if not (math.isfinite(adv_ce) and math.isfinite(util_ce) and math.isfinite(dist)
                    and np.all(np.isfinite(filt.A))):
                raise NumericalError(f"training diverged at round {r}")
            trace.adversary_ce.append(adv_ce)
            trace.utility_ce.append(util_ce)
            trace.distortion.append(dist)
            trace.adversary_acc.append(adv_acc)
            trace.utility_acc.append(util_acc)
            trace.violated.append(dist > cfg.budget_b)
    return TrainResult(filt, adv, util, trace, base_variance)


@dataclass(frozen=True)
class FilterEvaluation:
    adversary_acc: float
    utility_acc: float
    adversary: MlpClassifier
    utility: MlpClassifier


def evaluate_release(
    train: LatentDataset,
    test: LatentDataset,
    release,
    rng: np.random.Generator,
    *,
    hidden: int = 15,
    epochs: int = 20,
) -> FilterEvaluation:
    """Train fresh classifiers on released training points and score them on
    released held-out points. ``release(points, labels, rng)`` is the mechanism.
    """
    zt_train = release(train.points, train.private_labels, rng)
    zt_test = release(test.points, test.private_labels, rng)
    adv = train_classifier(zt_train, train.private_labels, train.n_private, rng, hidden=hidden, epochs=epochs)
    util = train_classifier(zt_train, train.utility_labels, train.n_utility, rng, hidden=hidden, epochs=epochs)
    return FilterEvaluation(
        accuracy(adv, zt_test, test.private_labels),
        accuracy(util, zt_test, test.utility_labels),
        adv,
        util,
    )


def filter_release(f: FilterParameters):
    return lambda points, labels, rng: apply_filter(f, points, labels, rng)


def gaussian_release(sigma2: float):
    sd = math.sqrt(sigma2)
    return lambda points, labels, rng: points + sd * rng.standard_normal(points.shape)


def identity_release(points, labels, rng):
    return np.array(points, dtype=float)


# --- checkpoint ------------------------------------------------------------------


def _clf_to_dict(c: MlpClassifier) -> dict:
    return {name: getattr(c, name).tolist() for name in MlpClassifier.PARAMS}


def _clf_from_dict(obj: dict) -> MlpClassifier:
    return MlpClassifier(*(np.asarray(obj[name], dtype=float) for name in MlpClassifier.PARAMS))


def save_checkpoint(path, result: TrainResult, cfg: TrainConfig) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "base_variance": result.base_variance.tolist(),
        "filter": {"n_private": result.filter.n_private, "A": result.filter.A.tolist()},
        "adversary": _clf_to_dict(result.adversary),
        "utility": _clf_to_dict(result.utility),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> tuple[FilterParameters, MlpClassifier, MlpClassifier, TrainConfig]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a latentpriv checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    filt = FilterParameters(np.asarray(doc["filter"]["A"], dtype=float), doc["filter"]["n_private"])
    cfg = TrainConfig(**doc["config"])
    return filt, _clf_from_dict(doc["adversary"]), _clf_from_dict(doc["utility"]), cfg
