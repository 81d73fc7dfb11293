"""Triplet, regularization, and matching losses.

Triplet distance is true (not squared) Euclidean; the regularization terms
use per-pair mean squared error. Both are exposed separately because the
alignment and regularization objectives use different distance functions.
All losses reduce by mean over the batch.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, concat, log_softmax


def euclidean(a: Tensor, b: Tensor) -> Tensor:
    """Per-row Euclidean distance: (B, D), (B, D) -> (B,)."""
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch {a.shape} vs {b.shape}")
    return ((a - b) ** 2).sum(axis=-1).sqrt()


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Per-row mean squared error: (B, D), (B, D) -> (B,)."""
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch {a.shape} vs {b.shape}")
    return ((a - b) ** 2).mean(axis=-1)


def triplet(anchor: Tensor, positive: Tensor, negative: Tensor,
            margin: float) -> Tensor:
    """max(d(a, p) - d(a, n) + margin, 0), per row."""
    return (euclidean(anchor, positive) - euclidean(anchor, negative)
            + margin).relu()


def loss_av(theta_v: Tensor, theta_m: Tensor, theta_v_neg: Tensor,
            theta_m_neg: Tensor, margin: float) -> Tensor:
    return (triplet(theta_v, theta_m, theta_m_neg, margin)
            + triplet(theta_m, theta_v, theta_v_neg, margin)).mean()


def loss_vtag(theta_v, theta_tag, theta_v_neg, theta_tag_neg,
              phi_tag, phi_v, phi_v_neg, margin: float) -> Tensor:
    return (triplet(theta_v, theta_tag, theta_v_neg, margin)
            + triplet(theta_tag, theta_v, theta_tag_neg, margin)
            + triplet(phi_tag, phi_v, phi_v_neg, margin)).mean()


def loss_atag(theta_m, theta_tag, theta_m_neg, theta_tag_neg,
              phi_tag, phi_m, phi_m_neg, margin: float,
              symmetrize: bool = False) -> Tensor:
    """Tag-music alignment. The second term draws its negative from the
    music side; `symmetrize` switches it to the tag negative instead."""
    second_neg = theta_tag_neg if symmetrize else theta_m_neg
    return (triplet(theta_m, theta_tag, theta_m_neg, margin)
            + triplet(theta_tag, theta_m, second_neg, margin)
            + triplet(phi_tag, phi_m, phi_m_neg, margin)).mean()


def loss_regular(xi_v, xi_m, xi_rec_v, xi_rec_m, phi_v, phi_m, phi_tag,
                 xi_tag, theta_v, theta_m, theta_tag) -> Tensor:
    """Sum of the seven MSE regularization terms, mean over the batch."""
    terms = (mse(xi_v, xi_rec_v) + mse(xi_m, xi_rec_m)
             + mse(phi_v, xi_tag) + mse(phi_m, xi_tag)
             + mse(phi_tag, xi_tag)
             + mse(theta_v, theta_tag) + mse(theta_m, theta_tag))
    return terms.mean()


def loss_ce(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Softmax cross-entropy over 2 classes, mean over samples."""
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.size), labels]
    return -picked.mean()


def total_loss(parts: dict[str, Tensor], weights: tuple) -> Tensor:
    """Weighted sum lambda1*L_av + ... + lambda5*L_ce."""
    order = ("av", "vtag", "atag", "regular", "ce")
    if len(weights) != 5:
        raise ValueError("need exactly 5 loss weights")
    total = None
    for w, name in zip(weights, order):
        term = parts[name] * float(w)
        total = term if total is None else total + term
    return total


def batch_losses(matcher, pos: dict[str, Tensor], neg_idx: np.ndarray,
                 margin: float, symmetrize_atag: bool = False) -> dict[str, Tensor]:
    """All five loss parts from matched-pair branch outputs plus in-batch
    negative assignments (`neg_idx[i]` = index of a different-music pair)."""
    neg_idx = np.asarray(neg_idx, dtype=np.int64)
    th_v, th_m, th_t = pos["theta_v"], pos["theta_m"], pos["theta_tag"]
    parts = {
        "av": loss_av(th_v, th_m, th_v[neg_idx], th_m[neg_idx], margin),
        "vtag": loss_vtag(th_v, th_t, th_v[neg_idx], th_t[neg_idx],
                          pos["phi_tag"], pos["phi_v"], pos["phi_v"][neg_idx],
                          margin),
        "atag": loss_atag(th_m, th_t, th_m[neg_idx], th_t[neg_idx],
                          pos["phi_tag"], pos["phi_m"], pos["phi_m"][neg_idx],
                          margin, symmetrize_atag),
        "regular": loss_regular(pos["xi_v"], pos["xi_m"], pos["xi_rec_v"],
                                pos["xi_rec_m"], pos["phi_v"], pos["phi_m"],
                                pos["phi_tag"], pos["xi_tag"],
                                th_v, th_m, th_t),
    }
    th_v_att, th_m_att = pos["theta_v_att"], pos["theta_m_att"]
    matched = matcher.match_logits(th_v_att, th_m_att)
    mismatched = matcher.match_logits(th_v_att, th_m_att[neg_idx])
    logits = concat([matched, mismatched], axis=0)
    labels = np.concatenate([np.ones(th_v.shape[0], dtype=np.int64),
                             np.zeros(th_v.shape[0], dtype=np.int64)])
    parts["ce"] = loss_ce(logits, labels)
    return parts
