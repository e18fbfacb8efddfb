"""Training objectives: segmentation BCE, the adversarial min-max pair,
the shared/private difference loss, the composite objective, and the
LwF logit-distillation loss.

All functions are pure: they take Tensors, return scalar Tensors, and
never mutate state. Numerical stability notes live next to the code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor


@dataclass
class LossWeights:
    """Mixing weights for the composite objective.

    lambda1 scales the segmentation term, lambda2 the adversarial
    confusion term, lambda3 the difference (orthogonality) term.
    """

    lambda1: float = 1.0
    lambda2: float = 0.05
    lambda3: float = 0.3

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ContractError(f"loss weights must be nonnegative, got {self}")


def bce_loss(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy on logits.

    Uses the identity -[y log sigma(l) + (1-y) log(1-sigma(l))]
    = softplus(l) - l*y, which never exponentiates a positive number.
    """
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=logits.dtype)
    if logits.shape != target.shape:
        raise ShapeError(f"bce_loss: logits {logits.shape} vs target {target.shape}")
    return T.mean(T.sub(T.softplus(logits), T.mul(logits, target)))


def _check_labels(labels: np.ndarray, width: int):
    if labels.ndim != 1:
        raise ShapeError(f"labels must be a 1-d integer array, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= width):
        raise ContractError(f"label out of range: labels span [{labels.min()}, {labels.max()}], width {width}")


def adv_loss_discriminator(d_logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of the task-label discriminator.

    Label 0 is reserved for the noise rows; labels 1..T name real tasks.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if d_logits.data.ndim != 2 or labels.shape[0] != d_logits.shape[0]:
        raise ShapeError(f"adv_loss_discriminator: logits {d_logits.shape} vs {labels.shape[0]} labels")
    _check_labels(labels, d_logits.shape[1])
    n = d_logits.shape[0]
    onehot = np.zeros(d_logits.shape, dtype=d_logits.data.dtype)
    onehot[np.arange(n), labels] = 1.0
    picked = T.mul(T.log_softmax(d_logits, axis=1), Tensor(onehot))
    return T.mul(T.sum_(picked), -1.0 / n)


def adv_loss_shared(d_logits_on_real: Tensor, labels) -> Tensor:
    """Confusion objective for the shared encoder: the negated
    discriminator cross-entropy on real rows. Minimizing it pushes the
    discriminator toward maximal error. The caller is responsible for
    detaching/freezing discriminator parameters so the gradient reaches
    only the encoder.
    """
    return T.mul(adv_loss_discriminator(d_logits_on_real, labels), -1.0)


def diff_loss(z_s: Tensor, z_p: Tensor) -> Tensor:
    """|| z_s^T z_p ||_F^2 / N^2 for batch matrices of shape (N, d).

    Zero exactly when every feature column of z_s is orthogonal to every
    feature column of z_p; the N^2 factor keeps the magnitude independent
    of batch size.
    """
    if z_s.shape != z_p.shape:
        raise ShapeError(f"diff_loss: z_s {z_s.shape} vs z_p {z_p.shape}")
    if z_s.data.ndim != 2:
        raise ShapeError(f"diff_loss: expected (N, d) matrices, got {z_s.shape}")
    n = z_s.shape[0]
    cross = T.matmul(T.transpose(z_s), z_p)
    return T.mul(T.sum_(T.square(cross)), 1.0 / (n * n))


def total_loss(task: Tensor, adv_shared: Tensor, diff: Tensor, w: LossWeights) -> Tensor:
    """lambda1*task + lambda2*adv_shared + lambda3*diff."""
    return T.add(T.add(T.mul(task, w.lambda1), T.mul(adv_shared, w.lambda2)), T.mul(diff, w.lambda3))


def lwf_distill(old_logits: Tensor, new_logits: Tensor) -> Tensor:
    """Mean squared error between current and snapshot logits.

    old_logits must come from the frozen snapshot (detached), so the
    gradient flows only through new_logits.
    """
    if old_logits.shape != new_logits.shape:
        raise ShapeError(f"lwf_distill: old {old_logits.shape} vs new {new_logits.shape}")
    return T.mean(T.square(T.sub(new_logits, old_logits.detach())))
