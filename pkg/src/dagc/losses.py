"""Reconstruction, soft (triplet KL) and hard (pseudo-label) losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ParameterError, ShapeError

STOCHASTIC_TOL = 1e-6


@dataclass(frozen=True)
class Hyperparams:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.1
    r: float = 0.8
    alpha: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ParameterError("loss weights must be nonnegative")
        if not 0 < self.r <= 1:
            raise ParameterError(f"threshold r must lie in (0, 1], got {self.r}")
        if self.alpha <= 0:
            raise ParameterError("alpha must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    soft: float
    hard: float
    total: float
    selected_count: int


def _const(x) -> Tensor:
    return x.detach() if isinstance(x, Tensor) else Tensor(x)


def _check_stochastic(name: str, t: Tensor):
    dev = np.abs(t.data.sum(axis=1) - 1.0)
    if dev.size and dev.max() > STOCHASTIC_TOL:
        raise ContractError(f"{name} rows must sum to 1 (max deviation {dev.max():.3g})")


def reconstruction_loss(x, x_hat: Tensor) -> Tensor:
    """Squared Frobenius norm of the reconstruction error (a sum, not a mean)."""
    x = _const(x)
    if x.shape != x_hat.shape:
        raise ShapeError(f"reconstruction_loss: {x.shape} vs {x_hat.shape}")
    return ad.sum_all(ad.square(ad.sub(x, x_hat)))


def triplet_kl_loss(p, z: Tensor, q: Tensor, lambda1: float, lambda2: float) -> Tensor:
    """lambda1 * (KL(P||Z) + KL(P||Q)) + lambda2 * KL(Z||Q); ``p`` is held constant."""
    p = _const(p)
    if not (p.shape == z.shape == q.shape):
        raise ShapeError(f"triplet_kl_loss: shapes {p.shape}, {z.shape}, {q.shape}")
    for name, t in (("P", p), ("Z", z), ("Q", q)):
        _check_stochastic(name, t)
    log_z = ad.safe_log(z)
    log_q = ad.safe_log(q)
    log_p = np.log(np.maximum(p.data, ad.LOG_FLOOR))
    # sum p*(2 log p - log z - log q); the 2 log p part is constant
    p_term = ad.add_scalar(
        ad.scale(ad.sum_all(ad.hadamard(p, ad.add(log_z, log_q))), -1.0),
        float(2.0 * np.sum(p.data * log_p)),
    )
    zq_term = ad.sum_all(ad.hadamard(z, ad.sub(log_z, log_q)))
    return ad.add(ad.scale(p_term, lambda1), ad.scale(zq_term, lambda2))


def pseudo_labels(z, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Argmax pseudo-labels and the confidence mask ``z >= r``."""
    zd = z.data if isinstance(z, Tensor) else np.asarray(z)
    return np.argmax(zd, axis=1), zd >= r


def pseudo_supervision_loss(z: Tensor, r: float, lambda3: float, mask=None, labels=None):
    """Cross-entropy against confident argmax pseudo-labels.

    Every selected entry (i, j) contributes ``-log z[i, label_i]``. The mask and
    labels may be passed in to freeze them (e.g. for gradient checking).
    Returns ``(loss, mask, labels)``.
    """
    if labels is None or mask is None:
        labels, mask = pseudo_labels(z, r)
    n, k = z.shape
    weight = np.zeros((n, k))
    weight[np.arange(n), labels] = mask.sum(axis=1)
    # adding 0.0 turns a -0.0 from an empty mask into +0.0
    loss = ad.add_scalar(ad.scale(ad.sum_all(ad.hadamard(Tensor(weight), ad.safe_log(z))), -lambda3), 0.0)
    return loss, mask, labels


def total_loss(recon: Tensor, soft: Tensor, hard: Tensor) -> Tensor:
    return ad.add(ad.add(recon, soft), hard)


def breakdown(recon: Tensor, soft: Tensor, hard: Tensor, total: Tensor, mask) -> LossBreakdown:
    return LossBreakdown(
        recon=recon.item(),
        soft=soft.item(),
        hard=hard.item(),
        total=total.item(),
        selected_count=int(np.count_nonzero(np.asarray(mask).any(axis=1))),
    )


def model_loss(state, x, hp: Hyperparams, p=None, mask=None, labels=None):
    """Total loss on a forward state; returns ``(total tensor, LossBreakdown)``.

    ``p`` defaults to the target distribution of ``state.z``.
    """
    from .model import target_distribution_p

    if p is None:
        p = target_distribution_p(state.z)
    recon = reconstruction_loss(x, state.x_hat)
    soft = triplet_kl_loss(p, state.z, state.q, hp.lambda1, hp.lambda2)
    hard, mask, labels = pseudo_supervision_loss(state.z, hp.r, hp.lambda3, mask, labels)
    total = total_loss(recon, soft, hard)
    state.p = np.asarray(p.data if isinstance(p, Tensor) else p)
    state.extras["mask"] = mask
    state.extras["pseudo_labels"] = labels
    return total, breakdown(recon, soft, hard, total, mask)
