"""Identity-balanced P x K mini-batch sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    """Dataset has fewer distinct identities than the batch requires."""


@dataclass(frozen=True)
class BatchSpec:
    """P identities per batch, K samples per identity."""

    P: int
    K: int

    def __post_init__(self):
        if self.P < 2 or self.K < 2:
            raise ValueError("P and K must both be >= 2 for triplet formation")

    @property
    def batch_size(self):
        return self.P * self.K


def pk_sample(labels, spec: BatchSpec, rng: np.random.Generator):
    """Draw N = P*K sample indices: P identities, K samples each.

    Identity choice is uniform without replacement.  Within an identity,
    samples are drawn without replacement when enough exist, otherwise
    with replacement.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if len(ids) < spec.P:
        raise InsufficientDataError(
            f"need at least {spec.P} identities, dataset has {len(ids)}"
        )
    chosen = rng.choice(ids, size=spec.P, replace=False)
    out = np.empty(spec.batch_size, dtype=int)
    for i, ident in enumerate(chosen):
        pool = np.flatnonzero(labels == ident)
        replace = len(pool) < spec.K
        out[i * spec.K : (i + 1) * spec.K] = rng.choice(pool, size=spec.K, replace=replace)
    return out


def batches_per_epoch(dataset_size, spec: BatchSpec):
    """Epoch granularity: ceil(dataset_size / (P*K)) batches."""
    return math.ceil(dataset_size / spec.batch_size)


class PKSampler:
    """Stateful sampler owning its RNG; one instance per training run."""

    def __init__(self, labels, spec: BatchSpec, seed):
        self.labels = np.asarray(labels)
        self.spec = spec
        self.rng = np.random.default_rng(seed)

    def sample(self):
        return pk_sample(self.labels, self.spec, self.rng)

    @property
    def batches_per_epoch(self):
        return batches_per_epoch(len(self.labels), self.spec)
