import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from progmetric.losses import (
    DegenerateBatchError,
    HyperParams,
    InvalidInputError,
    batch_hard_grad,
    batch_hard_loss,
    composite_loss,
    composite_loss_grad,
    cross_entropy_loss,
    gbh_loss,
    gbh_loss_grad,
    gbh_terms,
    lmnn_loss,
    pairwise_distances,
    softplus,
)

LINE = np.array([[0.0], [1.0], [1.5], [2.5]])
LINE_LABELS = np.array([0, 0, 1, 1])


def random_balanced_batch(rng, p=3, k=3, d=4):
    labels = np.repeat(np.arange(p), k)
    return rng.normal(size=(p * k, d)), labels


# ---------------------------------------------------------------- distances

def test_pairwise_hand_case():
    d = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
    np.testing.assert_allclose(d, [[0.0, 5.0], [5.0, 0.0]])


def test_pairwise_identical_rows():
    d = pairwise_distances(np.ones((4, 3)))
    np.testing.assert_array_equal(d, np.zeros((4, 4)))


def test_pairwise_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        pairwise_distances(np.array([[0.0, np.nan]]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_pairwise_matrix_properties(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 3))
    d = pairwise_distances(x)
    assert np.all(d >= 0)
    np.testing.assert_array_equal(d, d.T)
    np.testing.assert_array_equal(np.diag(d), np.zeros(6))
    # triangle inequality
    for i in range(6):
        for j in range(6):
            for k in range(6):
                assert d[i, j] <= d[i, k] + d[k, j] + 1e-9


# --------------------------------------------------------------------- lmnn

def lmnn_oracle(x, labels, mu, margin):
    d = pairwise_distances(x)
    n = len(x)
    intra = sum(d[a, b] for a in range(n) for b in range(n) if labels[a] == labels[b])
    hinge = sum(
        max(margin + d[a, b] - d[a, nn], 0.0)
        for a in range(n) for b in range(n) for nn in range(n)
        if a != b and labels[a] == labels[b] and labels[nn] != labels[a]
    )
    return (1 - mu) * intra + mu * hinge


def test_lmnn_zero_intra():
    x = np.array([[1.0], [1.0], [5.0], [5.0]])
    assert lmnn_loss(x, LINE_LABELS, mu=0.0, margin=0.2) == 0.0


def test_lmnn_satisfied_hinge():
    x = np.array([[0.0], [0.1], [100.0], [100.1]])
    assert lmnn_loss(x, LINE_LABELS, mu=1.0, margin=0.0) == 0.0


def test_lmnn_matches_triple_enumeration():
    got = lmnn_loss(LINE, LINE_LABELS, mu=0.5, margin=0.2)
    assert got == pytest.approx(lmnn_oracle(LINE, LINE_LABELS, 0.5, 0.2), rel=1e-12)


# --------------------------------------------------------------- batch hard

def test_batch_hard_hand_case():
    assert batch_hard_loss(LINE, LINE_LABELS, margin=0.2) == pytest.approx(1.4)


def test_batch_hard_separated_inactive():
    x = np.array([[0.0], [0.3], [100.0], [100.3]])
    assert batch_hard_loss(x, LINE_LABELS, margin=-0.1) == 0.0


def test_batch_hard_consistent_with_order_statistics():
    rng = np.random.default_rng(3)
    x, labels = random_balanced_batch(rng)
    d = pairwise_distances(x)
    t = gbh_terms(d, labels, k=1, p=1)
    via_terms = float(np.maximum(0.25 + t, 0.0).sum())
    assert batch_hard_loss(x, labels, margin=0.25) == pytest.approx(via_terms)


def test_batch_hard_degenerate_batches():
    with pytest.raises(DegenerateBatchError):
        batch_hard_loss(np.zeros((3, 2)), [0, 1, 2], margin=0.0)  # K = 1
    with pytest.raises(DegenerateBatchError):
        batch_hard_loss(np.zeros((3, 2)), [0, 0, 0], margin=0.0)  # P = 1


# ----------------------------------------------------------- order statistics

def gbh_oracle(dist, labels, k, p):
    """Full per-anchor sort of positive and negative distance lists."""
    n = len(dist)
    out = np.empty(n)
    for a in range(n):
        pos = sorted((dist[a, b] for b in range(n) if b != a and labels[b] == labels[a]),
                     reverse=True)
        neg = sorted(dist[a, b] for b in range(n) if labels[b] != labels[a])
        out[a] = pos[min(k, len(pos)) - 1] - neg[min(p, len(neg)) - 1]
    return out


def test_gbh_terms_hand_cases():
    x = np.array([[0.0], [1.0], [4.0], [6.0]])
    d = pairwise_distances(x)
    assert gbh_terms(d, LINE_LABELS, k=1, p=1)[0] == pytest.approx(1.0 - 4.0)
    assert gbh_terms(d, LINE_LABELS, k=1, p=2)[0] == pytest.approx(1.0 - 6.0)


def test_gbh_terms_matches_oracle_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = int(rng.integers(2, 9))
        k = int(rng.integers(2, 9))
        x, labels = random_balanced_batch(rng, p=p, k=k, d=int(rng.integers(1, 17)))
        d = pairwise_distances(x)
        kk = int(rng.integers(1, 9))
        pp = int(rng.integers(1, 17))
        np.testing.assert_array_equal(gbh_terms(d, labels, kk, pp),
                                      gbh_oracle(d, labels, kk, pp))


def test_gbh_terms_monotone_in_k_and_p():
    rng = np.random.default_rng(5)
    x, labels = random_balanced_batch(rng, p=4, k=5)
    d = pairwise_distances(x)
    for p in (1, 3):
        prev = gbh_terms(d, labels, 1, p)
        for k in range(2, 6):
            cur = gbh_terms(d, labels, k, p)
            assert np.all(cur <= prev + 1e-12)
            prev = cur
    # larger p picks a farther negative, so the subtracted term grows and
    # T shrinks: non-increasing in p as well
    for k in (1, 3):
        prev = gbh_terms(d, labels, k, 1)
        for p in range(2, 8):
            cur = gbh_terms(d, labels, k, p)
            assert np.all(cur <= prev + 1e-12)
            prev = cur


def test_gbh_terms_degenerate():
    with pytest.raises(DegenerateBatchError):
        gbh_terms(np.zeros((2, 2)), [0, 1], 1, 1)


# ----------------------------------------------------------------- gbh loss

def test_gbh_loss_hand_case():
    w = HyperParams(lam=1.0, margin=0.2, k=1, p=1)
    expected = sum(math.log1p(math.exp(v)) for v in (-0.3, 0.7, 0.7, -0.3))
    got = gbh_loss(LINE, LINE_LABELS, w)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(3.3151, abs=5e-4)


def test_softplus_special_values():
    assert softplus(0.0) == pytest.approx(math.log(2.0))
    assert softplus(1000.0) == pytest.approx(1000.0)
    assert np.isfinite(softplus(np.array([-1000.0, 1000.0]))).all()


def test_gbh_loss_strictly_positive():
    rng = np.random.default_rng(17)
    for _ in range(10):
        x, labels = random_balanced_batch(rng)
        w = HyperParams(lam=1.0, margin=0.0, k=2, p=2)
        assert gbh_loss(x, labels, w) > 0.0


# ------------------------------------------------------------ cross entropy

def test_cross_entropy_uniform_logits():
    logits = np.zeros((5, 7))
    assert cross_entropy_loss(logits, np.arange(5)) == pytest.approx(math.log(7))


def test_cross_entropy_saturated():
    logits = np.zeros((3, 4))
    labels = np.array([0, 1, 2])
    logits[np.arange(3), labels] = 1e4
    assert cross_entropy_loss(logits, labels) == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_matches_logsumexp_oracle():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(3, 4))
    labels = np.array([1, 0, 3])
    expected = np.mean([
        math.log(np.exp(row).sum()) - row[lab]
        for row, lab in zip(logits, labels)
    ])
    assert cross_entropy_loss(logits, labels) == pytest.approx(expected, rel=1e-12)


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(InvalidInputError):
        cross_entropy_loss(np.zeros((2, 3)), [0, 3])


# -------------------------------------------------------------- composite

def test_composite_lambda_zero_equals_ce():
    rng = np.random.default_rng(4)
    x, labels = random_balanced_batch(rng)
    logits = rng.normal(size=(len(x), 3))
    cids = labels % 3
    w = HyperParams(lam=0.0, margin=0.1, k=1, p=1)
    b = composite_loss(x, labels, logits, cids, w)
    assert b.total == cross_entropy_loss(logits, cids)
    assert b.gbh_term > 0.0


def test_composite_is_sum_of_components():
    logits = np.zeros((4, 2))
    cids = LINE_LABELS
    w = HyperParams(lam=1.0, margin=0.2, k=1, p=1)
    b = composite_loss(LINE, LINE_LABELS, logits, cids, w)
    assert b.total == pytest.approx(
        cross_entropy_loss(logits, cids) + gbh_loss(LINE, LINE_LABELS, w))


def test_composite_linear_in_lambda():
    logits = np.zeros((4, 2))
    w1 = HyperParams(lam=1.0, margin=0.2, k=1, p=1)
    w2 = HyperParams(lam=2.0, margin=0.2, k=1, p=1)
    b1 = composite_loss(LINE, LINE_LABELS, logits, LINE_LABELS, w1)
    b2 = composite_loss(LINE, LINE_LABELS, logits, LINE_LABELS, w2)
    assert b2.total == pytest.approx(b1.softmax_term + 2 * b1.gbh_term)


# -------------------------------------------------------------- gradients

def fd_gradients(x, labels, logits, cids, w, h=1e-5):
    def total(e, l):
        return composite_loss(e, labels, l, cids, w).total

    g_emb = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            up, dn = x.copy(), x.copy()
            up[i, j] += h
            dn[i, j] -= h
            g_emb[i, j] = (total(up, logits) - total(dn, logits)) / (2 * h)
    g_log = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            up, dn = logits.copy(), logits.copy()
            up[i, j] += h
            dn[i, j] -= h
            g_log[i, j] = (total(x, up) - total(x, dn)) / (2 * h)
    return g_emb, g_log


def test_grad_lambda_zero_embeddings():
    rng = np.random.default_rng(6)
    x, labels = random_balanced_batch(rng)
    logits = rng.normal(size=(len(x), 3))
    w = HyperParams(lam=0.0, margin=0.1, k=1, p=1)
    g_emb, _ = composite_loss_grad(x, labels, logits, labels % 3, w)
    np.testing.assert_array_equal(g_emb, np.zeros_like(x))


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(5):
        x, labels = random_balanced_batch(rng)
        logits = rng.normal(size=(len(x), 3))
        cids = rng.integers(0, 3, len(x))
        w = HyperParams(lam=1.5, margin=0.1, k=2, p=2)
        g_emb, g_log = composite_loss_grad(x, labels, logits, cids, w)
        fd_emb, fd_log = fd_gradients(x, labels, logits, cids, w)
        assert np.abs(g_emb - fd_emb).max() <= 1e-4 * max(np.abs(fd_emb).max(), 1.0)
        assert np.abs(g_log - fd_log).max() <= 1e-4 * max(np.abs(fd_log).max(), 1.0)


def test_grad_finite_at_coincident_points():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    w = HyperParams(lam=1.0, margin=0.2, k=1, p=1)
    g_emb, _ = composite_loss_grad(x, LINE_LABELS, np.zeros((4, 2)), LINE_LABELS, w)
    assert np.all(np.isfinite(g_emb))


def test_batch_hard_grad_value_matches_loss():
    rng = np.random.default_rng(9)
    x, labels = random_balanced_batch(rng)
    value, grad = batch_hard_grad(x, labels, margin=0.2)
    assert value == pytest.approx(batch_hard_loss(x, labels, 0.2))
    assert grad.shape == x.shape


def test_gbh_grad_value_matches_loss():
    rng = np.random.default_rng(10)
    x, labels = random_balanced_batch(rng)
    w = HyperParams(lam=1.0, margin=0.1, k=2, p=3)
    value, _ = gbh_loss_grad(x, labels, w)
    assert value == pytest.approx(gbh_loss(x, labels, w))


# ------------------------------------------------------------- performance

def test_loss_scaling_spot_check():
    import time

    rng = np.random.default_rng(12)
    w = HyperParams(lam=1.0, margin=0.1, k=2, p=2)

    def best_time(p, k):
        x, labels = random_balanced_batch(rng, p=p, k=k, d=16)
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            gbh_loss(x, labels, w)
            times.append(time.perf_counter() - t0)
        return min(times)

    small = best_time(8, 4)   # N = 32
    large = best_time(8, 8)   # N = 64
    assert large <= 5.0 * small + 1e-3


def test_hyperparams_box_validation():
    with pytest.raises(InvalidInputError):
        HyperParams(lam=2.5, margin=0.0, k=1, p=1)
    with pytest.raises(InvalidInputError):
        HyperParams(lam=1.0, margin=0.5, k=1, p=1)
    with pytest.raises(InvalidInputError):
        HyperParams(lam=1.0, margin=0.0, k=0, p=1)
    with pytest.raises(InvalidInputError):
        HyperParams(lam=1.0, margin=0.0, k=1, p=17)
