"""Pairwise distances and triplet-style losses over identity-balanced batches.

All losses operate on a batch of embeddings (N x d) with integer identity
labels.  Batches are expected to be identity-balanced (P identities, K
samples each) so that every anchor has at least one positive and one
negative; `batch_hard_loss` and the generalized variants raise
DegenerateBatchError otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DIST_EPS = 1e-12

LAMBDA_RANGE = (0.0, 2.0)
MARGIN_RANGE = (-0.1, 0.3)
K_RANGE = (1, 8)
P_RANGE = (1, 16)


class InvalidInputError(ValueError):
    """Inputs violate a precondition (non-finite values, bad labels, bad shapes)."""


class DegenerateBatchError(ValueError):
    """Batch cannot form triplets (an anchor lacks positives or negatives)."""


@dataclass(frozen=True)
class HyperParams:
    """Point (lam, margin, k, p) in the loss hyperparameter box.

    lam weights the triplet term against cross-entropy, margin shifts the
    triplet activation, k selects the k-th farthest positive and p the
    p-th nearest negative per anchor.
    """

    lam: float
    margin: float
    k: int
    p: int

    def __post_init__(self):
        if not LAMBDA_RANGE[0] <= self.lam <= LAMBDA_RANGE[1]:
            raise InvalidInputError(f"lam={self.lam} outside {LAMBDA_RANGE}")
        if not MARGIN_RANGE[0] <= self.margin <= MARGIN_RANGE[1]:
            raise InvalidInputError(f"margin={self.margin} outside {MARGIN_RANGE}")
        if not (K_RANGE[0] <= self.k <= K_RANGE[1] and float(self.k).is_integer()):
            raise InvalidInputError(f"k={self.k} outside integer range {K_RANGE}")
        if not (P_RANGE[0] <= self.p <= P_RANGE[1] and float(self.p).is_integer()):
            raise InvalidInputError(f"p={self.p} outside integer range {P_RANGE}")


@dataclass(frozen=True)
class LossBreakdown:
    """Composite loss split into its cross-entropy and triplet parts."""

    softmax_term: float
    gbh_term: float
    total: float


@dataclass
class EmbeddingBatch:
    """N x d embeddings with one identity label per row."""

    embeddings: np.ndarray
    labels: np.ndarray

    def validate_balanced(self):
        """Check the P-identities-times-K-samples structure."""
        if len(self.labels) != len(self.embeddings):
            raise InvalidInputError("labels and embeddings length mismatch")
        if not np.all(np.isfinite(self.embeddings)):
            raise InvalidInputError("non-finite embedding entries")
        _, counts = np.unique(self.labels, return_counts=True)
        if len(set(counts)) != 1:
            raise InvalidInputError("identities are not equally represented")


def softplus(x):
    """Overflow-safe ln(1 + exp(x))."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def pairwise_distances(embeddings, squared=False):
    """Symmetric matrix of Euclidean distances between all rows."""
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2:
        raise InvalidInputError("embeddings must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite embedding entries")
    gram = x @ x.T
    sq = np.diag(gram).copy()
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    d = d2 if squared else np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def _masks(labels):
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    pos = same.copy()
    np.fill_diagonal(pos, False)
    neg = ~same
    return pos, neg


def _check_triplet_batch(pos_mask, neg_mask):
    if not pos_mask.any(axis=1).all():
        raise DegenerateBatchError("an anchor has no positive (need K >= 2)")
    if not neg_mask.any(axis=1).all():
        raise DegenerateBatchError("an anchor has no negative (need P >= 2)")


def lmnn_loss(embeddings, labels, mu, margin):
    """Weighted sum of intra-class distances and hinged triplet violations.

    Kept for reference and testing; the training path uses the batch-hard
    family below.
    """
    if not 0.0 <= mu <= 1.0:
        raise InvalidInputError("mu must lie in [0, 1]")
    d = pairwise_distances(embeddings)
    pos_mask, neg_mask = _masks(labels)
    intra = float(d[pos_mask].sum())
    hinge = 0.0
    n = len(d)
    for a in range(n):
        negs = d[a, neg_mask[a]]
        for b in np.flatnonzero(pos_mask[a]):
            hinge += float(np.maximum(margin + d[a, b] - negs, 0.0).sum())
    return (1.0 - mu) * intra + mu * hinge


def batch_hard_loss(embeddings, labels, margin):
    """Sum over anchors of hinge(margin + farthest positive - nearest negative)."""
    d = pairwise_distances(embeddings)
    pos_mask, neg_mask = _masks(labels)
    _check_triplet_batch(pos_mask, neg_mask)
    hardest_pos = np.where(pos_mask, d, -np.inf).max(axis=1)
    nearest_neg = np.where(neg_mask, d, np.inf).min(axis=1)
    return float(np.maximum(margin + hardest_pos - nearest_neg, 0.0).sum())


def gbh_select(dist, labels, k, p):
    """Indices of the k-th farthest positive and p-th nearest negative per anchor.

    k and p clamp to the available counts; order-statistic ties break toward
    the lowest sample index.
    """
    if k < 1 or p < 1:
        raise InvalidInputError("k and p must be >= 1")
    pos_mask, neg_mask = _masks(labels)
    _check_triplet_batch(pos_mask, neg_mask)
    n = len(dist)
    pos_idx = np.empty(n, dtype=int)
    neg_idx = np.empty(n, dtype=int)
    for a in range(n):
        cand = np.flatnonzero(pos_mask[a])
        order = np.lexsort((cand, -dist[a, cand]))
        pos_idx[a] = cand[order[min(k, len(cand)) - 1]]
        cand = np.flatnonzero(neg_mask[a])
        order = np.lexsort((cand, dist[a, cand]))
        neg_idx[a] = cand[order[min(p, len(cand)) - 1]]
    return pos_idx, neg_idx


def gbh_terms(dist, labels, k, p):
    """Per-anchor difference: k-th farthest positive minus p-th nearest negative."""
    pos_idx, neg_idx = gbh_select(dist, labels, k, p)
    rows = np.arange(len(dist))
    return dist[rows, pos_idx] - dist[rows, neg_idx]


def gbh_loss(embeddings, labels, w: HyperParams):
    """Sum over anchors of softplus(margin + per-anchor order-statistic term)."""
    d = pairwise_distances(embeddings)
    t = gbh_terms(d, labels, w.k, w.p)
    return float(softplus(w.margin + t).sum())


def cross_entropy_loss(logits, labels):
    """Mean negative log softmax probability of the true class."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise InvalidInputError("label outside [0, n_classes)")
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(n), labels]))


def composite_loss(embeddings, labels, logits, class_ids, w: HyperParams):
    """Cross-entropy plus lam times the generalized batch-hard loss.

    class_ids are the dense class indices matching the logit columns;
    labels are the raw identity ids used for triplet formation.
    """
    ce = cross_entropy_loss(logits, class_ids)
    g = gbh_loss(embeddings, labels, w)
    return LossBreakdown(softmax_term=ce, gbh_term=g, total=ce + w.lam * g)


def softmax(logits):
    logits = np.asarray(logits, dtype=float)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_grad(logits, class_ids):
    """Gradient of cross_entropy_loss with respect to the logits."""
    p = softmax(logits)
    n = len(p)
    p[np.arange(n), np.asarray(class_ids, dtype=int)] -= 1.0
    return p / n


def _triplet_grad(embeddings, labels, k, p, margin, outer):
    """Value and embedding gradient of the order-statistic triplet loss.

    outer selects the elementwise transfer: "softplus" for the generalized
    loss, "hinge" for the classic batch-hard loss (k = p = 1 expected there).
    The subgradient routes through the single selected (positive, negative)
    pair per anchor; coincident points use a guarded distance denominator.
    """
    x = np.asarray(embeddings, dtype=float)
    d = pairwise_distances(x)
    pos_idx, neg_idx = gbh_select(d, labels, k, p)
    rows = np.arange(len(x))
    t = margin + d[rows, pos_idx] - d[rows, neg_idx]
    if outer == "softplus":
        value = float(softplus(t).sum())
        coeff = expit(t)
    else:
        value = float(np.maximum(t, 0.0).sum())
        coeff = (t > 0.0).astype(float)
    grad = np.zeros_like(x)
    for a in rows:
        c = coeff[a]
        if c == 0.0:
            continue
        b, nn = pos_idx[a], neg_idx[a]
        u_ab = (x[a] - x[b]) / max(d[a, b], DIST_EPS)
        u_an = (x[a] - x[nn]) / max(d[a, nn], DIST_EPS)
        grad[a] += c * (u_ab - u_an)
        grad[b] -= c * u_ab
        grad[nn] += c * u_an
    return value, grad


def gbh_loss_grad(embeddings, labels, w: HyperParams):
    """(value, embedding gradient) of the generalized batch-hard loss."""
    return _triplet_grad(embeddings, labels, w.k, w.p, w.margin, "softplus")


def batch_hard_grad(embeddings, labels, margin):
    """(value, embedding gradient) of the classic batch-hard hinge loss."""
    return _triplet_grad(embeddings, labels, 1, 1, margin, "hinge")


def composite_loss_grad(embeddings, labels, logits, class_ids, w: HyperParams):
    """Analytic gradients of the composite loss.

    Returns (gradient w.r.t. embeddings, gradient w.r.t. logits).  The
    embedding gradient carries only the triplet term (already scaled by
    lam); the logit gradient carries only the cross-entropy term.
    """
    if w.lam == 0.0:
        g_emb = np.zeros_like(np.asarray(embeddings, dtype=float))
    else:
        _, g_emb = gbh_loss_grad(embeddings, labels, w)
        g_emb = w.lam * g_emb
    g_logits = cross_entropy_grad(logits, class_ids)
    return g_emb, g_logits
