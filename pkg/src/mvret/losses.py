"""Cross-modal contrastive losses and the four-component training objective.

Two loss families over an aligned batch of audio/video embedding pairs:

* InfoNCE: for each anchor, the aligned pair in the other modality is the
  sole positive against all in-batch candidates.
* SupCon: every other-modality item sharing the anchor's label is a
  positive; each anchor's log-probabilities are averaged over its positive
  set. The denominator always runs over the full batch.

Both are directional (anchor modality -> candidate modality) and get
symmetrized by averaging the two directions. The training objective sums
the symmetrized InfoNCE and SupCon applied to the intermediate q embeddings
and to the mixed z embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .model import EmbeddingSet


@dataclass
class LossWeights:
    ssl_z: float = 1.0
    sup_z: float = 1.0
    ssl_h: float = 1.0
    sup_h: float = 1.0


@dataclass
class LossBreakdown:
    l_ssl_z: float
    l_sup_z: float
    l_ssl_h: float
    l_sup_h: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"l_ssl_z": self.l_ssl_z, "l_sup_z": self.l_sup_z,
                "l_ssl_h": self.l_ssl_h, "l_sup_h": self.l_sup_h, "total": self.total}


def _check_tau(tau: float) -> None:
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")


def _log_probs(anchor: Var, candidates: Var, tau: float) -> Var:
    sims = ad.matmul(anchor, ad.transpose(candidates))
    return ad.log_softmax_rows(ad.scale(sims, 1.0 / tau))


def infonce_directional(anchor: Var, candidates: Var, tau: float) -> Var:
    """Mean over anchors of -log p(aligned candidate), as a 1x1 graph node."""
    _check_tau(tau)
    n = anchor.shape[0]
    logp = _log_probs(anchor, candidates, tau)
    weights = -np.eye(n) / n
    return ad.weighted_sum(logp, weights)


def supcon_directional(anchor: Var, candidates: Var, labels: np.ndarray, tau: float) -> Var:
    """Label-positive contrastive loss; log-probs averaged per anchor's positive set.

    Anchors with an empty positive set are skipped and the mean runs over
    contributing anchors only (cannot happen for aligned pairs, where the
    anchor's own index is always positive).
    """
    _check_tau(tau)
    labels = np.asarray(labels)
    n = anchor.shape[0]
    positives = labels[:, None] == labels[None, :]
    counts = positives.sum(axis=1)
    contributing = int(np.count_nonzero(counts))
    weights = np.zeros((n, n))
    nonzero = counts > 0
    weights[nonzero] = -positives[nonzero].astype(np.float64) / (counts[nonzero, None] * contributing)
    logp = _log_probs(anchor, candidates, tau)
    return ad.weighted_sum(logp, weights)


def symmetrize(loss_a2v: Var, loss_v2a: Var) -> Var:
    return ad.scale(ad.add(loss_a2v, loss_v2a), 0.5)


def total_loss(embeddings: EmbeddingSet, labels: np.ndarray, tau: float,
               weights: LossWeights | None = None) -> tuple[Var, LossBreakdown]:
    """The four symmetrized components and their weighted sum (default weights 1)."""
    w = weights or LossWeights()
    l_ssl_h = symmetrize(infonce_directional(embeddings.q_ssl_A, embeddings.q_ssl_V, tau),
                         infonce_directional(embeddings.q_ssl_V, embeddings.q_ssl_A, tau))
    l_sup_h = symmetrize(supcon_directional(embeddings.q_sup_A, embeddings.q_sup_V, labels, tau),
                         supcon_directional(embeddings.q_sup_V, embeddings.q_sup_A, labels, tau))
    l_ssl_z = symmetrize(infonce_directional(embeddings.z_A, embeddings.z_V, tau),
                         infonce_directional(embeddings.z_V, embeddings.z_A, tau))
    l_sup_z = symmetrize(supcon_directional(embeddings.z_A, embeddings.z_V, labels, tau),
                         supcon_directional(embeddings.z_V, embeddings.z_A, labels, tau))
    total = ad.add(ad.add(ad.scale(l_ssl_z, w.ssl_z), ad.scale(l_sup_z, w.sup_z)),
                   ad.add(ad.scale(l_ssl_h, w.ssl_h), ad.scale(l_sup_h, w.sup_h)))
    breakdown = LossBreakdown(l_ssl_z.item(), l_sup_z.item(),
                              l_ssl_h.item(), l_sup_h.item(), total.item())
    return total, breakdown
