import numpy as np
import pytest

import aclseg.tensor as T
from aclseg.baselines import MultiHeadUNet, UNetConfig
from aclseg.errors import ConfigError, ShapeError
from aclseg.losses import bce_loss
from aclseg.tensor import Tensor, make_rng


def small(heads=0, bc=8):
    m = MultiHeadUNet(UNetConfig(seed=4, base_channels=bc, image_size=(32, 32)))
    for _ in range(heads):
        m.add_head()
    return m


def batch(n=2, seed=0):
    rng = make_rng(seed, "x")
    return Tensor(rng.standard_normal((n, 1, 32, 32)).astype(np.float32))


class TestConfig:
    def test_size_must_fit_three_downsamples(self):
        with pytest.raises(ConfigError):
            UNetConfig(image_size=(100, 100))
        UNetConfig(image_size=(40, 24))  # divisible by 8 is enough

    def test_dict_round_trip(self):
        cfg = UNetConfig(image_size=(64, 32), base_channels=12, seed=9)
        assert UNetConfig.from_dict(cfg.as_dict()) == cfg


class TestShapes:
    def test_features_keep_resolution(self):
        m = small()
        feats = m.features(batch())
        assert feats.shape == (2, 16, 32, 32)  # 2 * base_channels at input size

    def test_head_output_is_single_channel_logit_map(self):
        m = small(heads=3)
        out = m.segment(1, batch())
        assert out.shape == (2, 1, 32, 32)

    def test_input_shape_checked(self):
        m = small(heads=1)
        with pytest.raises(ShapeError):
            m.features(Tensor(np.zeros((2, 1, 16, 16), dtype=np.float32)))
        with pytest.raises(ShapeError):
            m.features(Tensor(np.zeros((2, 3, 32, 32), dtype=np.float32)))

    def test_head_index_range_checked(self):
        m = small(heads=2)
        feats = m.features(batch())
        with pytest.raises(ShapeError):
            m.forward_head(2, feats)
        with pytest.raises(ShapeError):
            m.forward_head(-1, feats)


class TestHeadGrowth:
    def test_add_head_counts(self):
        m = small()
        assert m.n_heads == 0
        for k in range(1, 4):
            m.add_head()
            assert m.n_heads == k

    def test_add_head_preserves_existing_weights(self):
        m = small(heads=2)
        before = [p.data.copy() for p in m.heads[0].parameters()]
        m.add_head()
        after = [p.data for p in m.heads[0].parameters()]
        for a, b in zip(before, after):
            assert np.array_equal(a, b)

    def test_new_heads_differ_from_old(self):
        m = small(heads=2)
        w0 = m.heads[0].parameters()[0].data
        w1 = m.heads[1].parameters()[0].data
        assert not np.array_equal(w0, w1)

    def test_same_seed_rebuild_is_identical(self):
        a, b = small(heads=2), small(heads=2)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.data, pb.data)


class TestTrunkParameters:
    def test_partition_of_all_parameters(self):
        m = small(heads=3)
        trunk = {id(p) for p in m.trunk_parameters()}
        heads = {id(p) for head in m.heads for p in head.parameters()}
        everything = {id(p) for p in m.parameters()}
        assert trunk | heads == everything
        assert trunk & heads == set()

    def test_trunk_set_stable_as_heads_grow(self):
        m = small(heads=1)
        before = {id(p) for p in m.trunk_parameters()}
        m.add_head()
        assert {id(p) for p in m.trunk_parameters()} == before


class TestGradients:
    def test_loss_on_one_head_leaves_other_heads_untouched(self):
        m = small(heads=2)
        x = batch()
        y = Tensor(np.zeros((2, 1, 32, 32), dtype=np.float32))
        loss = bce_loss(m.forward_head(0, m.features(x)), y)
        m.zero_grad()
        T.backward(loss)
        assert all(p.grad is not None for p in m.trunk_parameters())
        assert all(p.grad is not None for p in m.heads[0].parameters())
        assert all(p.grad is None for p in m.heads[1].parameters())


class TestArchive:
    def test_round_trip_restores_structure(self):
        m = small(heads=4)
        doc = m.archive_config()
        again = MultiHeadUNet.from_archive(doc)
        assert again.n_heads == 4
        assert again.config == m.config
        assert [p.shape for p in again.parameters()] == [p.shape for p in m.parameters()]
