"""Small two-head embedding model with hand-rolled backprop and Adam.

A shared linear trunk with a rectifier feeds two linear heads; their
outputs concatenate into the embedding.  The classifier reads only the
second (softmax) head.  Everything is plain numpy so gradients can be
checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .losses import InvalidInputError

PARAM_FIELDS = (
    "w_trunk", "b_trunk",
    "w_trip", "b_trip",
    "w_soft", "b_soft",
    "w_cls", "b_cls",
)


class NonFiniteGradientError(RuntimeError):
    """Training aborted: a gradient contained NaN or infinity."""


@dataclass(frozen=True)
class ModelConfig:
    d_in: int = 32
    hidden: int = 64
    embed_dim: int = 32
    n_classes: int = 2

    def __post_init__(self):
        if self.embed_dim % 2 != 0:
            raise InvalidInputError("embed_dim must be even (two concatenated heads)")


@dataclass
class ModelParams:
    w_trunk: np.ndarray
    b_trunk: np.ndarray
    w_trip: np.ndarray
    b_trip: np.ndarray
    w_soft: np.ndarray
    b_soft: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray

    @classmethod
    def init(cls, cfg: ModelConfig, rng: np.random.Generator):
        half = cfg.embed_dim // 2

        def dense(n_in, n_out):
            return rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))

        return cls(
            w_trunk=dense(cfg.d_in, cfg.hidden),
            b_trunk=np.zeros(cfg.hidden),
            w_trip=dense(cfg.hidden, half),
            b_trip=np.zeros(half),
            w_soft=dense(cfg.hidden, half),
            b_soft=np.zeros(half),
            w_cls=dense(half, cfg.n_classes),
            b_cls=np.zeros(cfg.n_classes),
        )

    @property
    def config(self):
        return ModelConfig(
            d_in=self.w_trunk.shape[0],
            hidden=self.w_trunk.shape[1],
            embed_dim=2 * self.w_trip.shape[1],
            n_classes=self.w_cls.shape[1],
        )

    def arrays(self):
        return [getattr(self, name) for name in PARAM_FIELDS]

    def copy(self):
        return ModelParams(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def forward(params: ModelParams, features):
    """(embeddings, logits) for a batch of input rows."""
    emb, logits, _ = forward_with_cache(params, features)
    return emb, logits


def forward_with_cache(params: ModelParams, features):
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.w_trunk.shape[0]:
        raise InvalidInputError(
            f"expected features of shape (N, {params.w_trunk.shape[0]})"
        )
    h_pre = x @ params.w_trunk + params.b_trunk
    h = np.maximum(h_pre, 0.0)
    z_trip = h @ params.w_trip + params.b_trip
    z_soft = h @ params.w_soft + params.b_soft
    emb = np.concatenate([z_trip, z_soft], axis=1)
    logits = z_soft @ params.w_cls + params.b_cls
    cache = (x, h_pre, h, z_soft)
    return emb, logits, cache


def backward(params: ModelParams, cache, d_emb, d_logits):
    """Parameter gradients given gradients at the embedding and logit outputs."""
    x, h_pre, h, z_soft = cache
    half = params.w_trip.shape[1]
    d_zt = d_emb[:, :half]
    d_zs = d_emb[:, half:] + d_logits @ params.w_cls.T
    grads = ModelParams(
        w_trunk=None, b_trunk=None, w_trip=None, b_trip=None,
        w_soft=None, b_soft=None, w_cls=None, b_cls=None,
    )
    grads.w_cls = z_soft.T @ d_logits
    grads.b_cls = d_logits.sum(axis=0)
    grads.w_trip = h.T @ d_zt
    grads.b_trip = d_zt.sum(axis=0)
    grads.w_soft = h.T @ d_zs
    grads.b_soft = d_zs.sum(axis=0)
    d_h = d_zt @ params.w_trip.T + d_zs @ params.w_soft.T
    d_hpre = d_h * (h_pre > 0.0)
    grads.w_trunk = x.T @ d_hpre
    grads.b_trunk = d_hpre.sum(axis=0)
    return grads


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam settings plus the epoch-indexed learning-rate and beta1 schedules."""

    alpha0: float = 3e-4
    e0: int = 150
    e1: int = 300
    beta1_early: float = 0.9
    beta1_late: float = 0.5
    beta1_switch_epoch: int = 150
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise InvalidInputError("alpha0 must be positive")
        if self.e0 >= self.e1:
            raise InvalidInputError("e0 must be smaller than e1")
        for b in (self.beta1_early, self.beta1_late, self.beta2):
            if not 0.0 < b < 1.0:
                raise InvalidInputError("betas must lie in (0, 1)")


def lr_schedule(epoch, cfg: OptimizerConfig):
    """Flat at alpha0, exponential decay by 0.001 between e0 and e1, then held."""
    if epoch < 0:
        raise InvalidInputError("epoch must be >= 0")
    if epoch <= cfg.e0:
        return cfg.alpha0
    if epoch <= cfg.e1:
        return cfg.alpha0 * 0.001 ** ((epoch - cfg.e0) / (cfg.e1 - cfg.e0))
    return cfg.alpha0 * 0.001


def beta1_schedule(epoch, cfg: OptimizerConfig):
    return cfg.beta1_early if epoch < cfg.beta1_switch_epoch else cfg.beta1_late


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams):
        return cls(
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
        )

    def copy(self):
        return AdamState(m=[a.copy() for a in self.m], v=[a.copy() for a in self.v],
                         step=self.step)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              lr, beta1, cfg: OptimizerConfig):
    """One bias-corrected adaptive-moment update, in place."""
    garrs = grads.arrays()
    for g in garrs:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient encountered")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, g, m, v in zip(PARAM_FIELDS, garrs, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
        getattr(params, name)[...] -= update
