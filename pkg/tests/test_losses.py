"""Loss oracles: closed-form values checked against naive reimplementations."""

import math

import numpy as np
import pytest

from aclseg.errors import ContractError, ShapeError
from aclseg.losses import (
    LossWeights,
    adv_loss_discriminator,
    adv_loss_shared,
    bce_loss,
    diff_loss,
    lwf_distill,
    total_loss,
)
from aclseg.nn import Linear, frozen_params
from aclseg.tensor import Tensor, backward, make_rng


def t(arr, requires_grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


class TestBCE:
    def test_logit_zero_label_one_is_ln2(self):
        loss = bce_loss(t([[0.0]]), t([[1.0]]))
        assert abs(loss.item() - math.log(2.0)) < 1e-9

    def test_logit_zero_label_zero_is_ln2(self):
        loss = bce_loss(t([[0.0]]), t([[0.0]]))
        assert abs(loss.item() - math.log(2.0)) < 1e-9

    def test_matches_naive_loop(self):
        rng = make_rng(11, "bce")
        logits = rng.normal(size=(4, 6)) * 3
        targets = (rng.uniform(size=(4, 6)) > 0.5).astype(np.float64)
        got = bce_loss(t(logits), t(targets)).item()
        total = 0.0
        for l, y in zip(logits.ravel(), targets.ravel()):
            p = 1.0 / (1.0 + math.exp(-l))
            total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
        assert abs(got - total / logits.size) < 1e-9

    def test_extreme_logits_stay_finite(self):
        loss = bce_loss(t([[800.0, -800.0]]), t([[0.0, 1.0]]))
        assert np.isfinite(loss.item())
        assert loss.item() > 700  # ~|logit| when maximally wrong

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            bce_loss(t([[0.0, 1.0]]), t([[1.0]]))


class TestAdversarial:
    def test_uniform_logits_give_ln_k(self):
        for k in (2, 3, 5):
            logits = t(np.zeros((4, k)))
            labels = np.zeros(4, dtype=np.int64)
            loss = adv_loss_discriminator(logits, labels)
            assert abs(loss.item() - math.log(k)) < 1e-9

    def test_matches_naive_cross_entropy(self):
        rng = make_rng(3, "adv")
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        got = adv_loss_discriminator(t(logits), labels).item()
        total = 0.0
        for row, lab in zip(logits, labels):
            p = np.exp(row - row.max())
            p /= p.sum()
            total += -math.log(p[lab])
        assert abs(got - total / 6) < 1e-9

    def test_shared_is_negated_discriminator(self):
        rng = make_rng(4, "adv")
        logits = rng.normal(size=(5, 3))
        labels = rng.integers(0, 3, size=5)
        d = adv_loss_discriminator(t(logits), labels).item()
        s = adv_loss_shared(t(logits), labels).item()
        assert abs(d + s) < 1e-12
        assert s <= 0 or d >= 0

    def test_confusion_gradients_skip_frozen_discriminator(self):
        # The encoder minimizes adv_loss_shared through the discriminator;
        # the discriminator's own weights must receive nothing.
        rng = make_rng(5, "frozen")
        disc = Linear(4, 3, rng=rng)
        z = Tensor(rng.normal(size=(6, 4)).astype(np.float32), requires_grad=True)
        with frozen_params(disc):
            loss = adv_loss_shared(disc(z), np.ones(6, dtype=np.int64))
            backward(loss)
        assert z.grad is not None and np.any(z.grad != 0)
        for p in disc.parameters():
            assert p.grad is None

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ContractError):
            adv_loss_discriminator(t(np.zeros((2, 3))), np.array([0, 3]))


class TestDiff:
    def test_orthogonal_batches_give_zero(self):
        # columns of z_s ({1,1}) vs z_p ({0,0} cross terms): z_s^T z_p = 0
        z_s = t([[1.0, 0.0], [1.0, 0.0]])
        z_p = t([[0.0, 1.0], [0.0, -1.0]])
        assert abs(diff_loss(z_s, z_p).item()) < 1e-12

    def test_matches_naive_frobenius(self):
        rng = make_rng(6, "diff")
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(5, 3))
        got = diff_loss(t(a), t(b)).item()
        m = a.T @ b
        want = float((m * m).sum()) / 25.0
        assert abs(got - want) < 1e-9

    def test_batch_normalization_scale(self):
        # Duplicating every row scales the cross-product by 2 and N^2 by 4,
        # so the loss is unchanged only when the rows are centred; the raw
        # invariant is the explicit 1/N^2 factor.
        a = np.array([[1.0, 2.0]])
        b = np.array([[3.0, 4.0]])
        single = diff_loss(t(a), t(b)).item()
        double = diff_loss(t(np.vstack([a, a])), t(np.vstack([b, b]))).item()
        assert abs(double - single * 4 / 4) < 1e-12


class TestLwF:
    def test_identical_activations_give_zero(self):
        rng = make_rng(7, "lwf")
        x = rng.normal(size=(3, 4, 4))
        assert lwf_distill(t(x), t(x.copy())).item() == 0.0

    def test_matches_mse(self):
        rng = make_rng(8, "lwf")
        old = rng.normal(size=(2, 5))
        new = rng.normal(size=(2, 5))
        got = lwf_distill(t(old), t(new)).item()
        assert abs(got - float(((new - old) ** 2).mean())) < 1e-12

    def test_gradient_only_reaches_new_model(self):
        rng = make_rng(9, "lwf")
        old = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        new = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        backward(lwf_distill(old, new))
        assert new.grad is not None
        assert old.grad is None


class TestTotal:
    def test_default_weights(self):
        w = LossWeights()
        assert (w.lambda1, w.lambda2, w.lambda3) == (1.0, 0.05, 0.3)

    def test_weighted_sum(self):
        w = LossWeights(2.0, 0.5, 0.25)
        task, adv, diff = t(3.0), t(-1.0), t(4.0)
        got = total_loss(task, adv, diff, w).item()
        assert abs(got - (2.0 * 3.0 + 0.5 * -1.0 + 0.25 * 4.0)) < 1e-12

    def test_negative_weight_rejected(self):
        with pytest.raises(Exception):
            LossWeights(1.0, -0.1, 0.3)
