"""Bit-exactness and corruption handling for model checkpoints."""

import json

import numpy as np
import pytest

import aclseg.tensor as T
from aclseg.baselines import MultiHeadUNet, UNetConfig
from aclseg.checkpoint import MANIFEST_NAME, WEIGHTS_NAME, clone_model, load_model, save_model
from aclseg.errors import CorruptionError, ShapeError
from aclseg.model import ACLSegModel, ModelConfig


def small_unet(heads=2):
    m = MultiHeadUNet(UNetConfig(seed=5, base_channels=16, image_size=(32, 32)))
    for _ in range(heads):
        m.add_head()
    return m


def small_aclseg(tasks=2):
    m = ACLSegModel(ModelConfig(seed=5, image_size=(32, 32), latent_dim=4))
    for _ in range(tasks):
        m.add_task()
    return m


def assert_state_identical(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    assert sorted(sa) == sorted(sb)
    for name in sa:
        assert sa[name].tobytes() == sb[name].tobytes(), name


def test_unet_round_trip_bit_exact(tmp_path):
    m = small_unet()
    save_model(m, tmp_path / "ck")
    back = load_model(tmp_path / "ck")
    assert_state_identical(m, back)


def test_aclseg_round_trip_bit_exact(tmp_path):
    m = small_aclseg(tasks=3)
    save_model(m, tmp_path / "ck")
    back = load_model(tmp_path / "ck")
    assert_state_identical(m, back)
    assert back.discriminator.width == m.discriminator.width


def test_round_trip_preserves_outputs(tmp_path):
    m = small_aclseg()
    x = T.Tensor(np.random.default_rng(0).standard_normal((2, 1, 32, 32)).astype(np.float32))
    before = m.segment(1, x).data
    back = load_model(save_model(m, tmp_path / "ck"))
    after = back.segment(1, x).data
    assert before.tobytes() == after.tobytes()


def test_clone_is_independent():
    m = small_unet(heads=1)
    c = clone_model(m)
    assert_state_identical(m, c)
    first = c.parameters()[0]
    first.data = first.data + 1.0
    orig = m.parameters()[0]
    assert not np.array_equal(first.data, orig.data)


def test_truncated_weights_rejected(tmp_path):
    save_model(small_unet(heads=1), tmp_path / "ck")
    blob = (tmp_path / "ck" / WEIGHTS_NAME).read_bytes()
    (tmp_path / "ck" / WEIGHTS_NAME).write_bytes(blob[:-8])
    with pytest.raises(CorruptionError):
        load_model(tmp_path / "ck")


def test_missing_manifest_rejected(tmp_path):
    save_model(small_unet(heads=1), tmp_path / "ck")
    (tmp_path / "ck" / MANIFEST_NAME).unlink()
    with pytest.raises(CorruptionError):
        load_model(tmp_path / "ck")


def test_garbled_manifest_rejected(tmp_path):
    save_model(small_unet(heads=1), tmp_path / "ck")
    (tmp_path / "ck" / MANIFEST_NAME).write_text("{not json")
    with pytest.raises(CorruptionError):
        load_model(tmp_path / "ck")


def test_unknown_kind_rejected(tmp_path):
    save_model(small_unet(heads=1), tmp_path / "ck")
    doc = json.loads((tmp_path / "ck" / MANIFEST_NAME).read_text())
    doc["kind"] = "resnet"
    (tmp_path / "ck" / MANIFEST_NAME).write_text(json.dumps(doc))
    with pytest.raises(CorruptionError):
        load_model(tmp_path / "ck")


def test_offset_past_blob_rejected(tmp_path):
    save_model(small_unet(heads=1), tmp_path / "ck")
    doc = json.loads((tmp_path / "ck" / MANIFEST_NAME).read_text())
    name = next(iter(doc["params"]))
    doc["params"][name]["offset"] = doc["blob_bytes"]
    (tmp_path / "ck" / MANIFEST_NAME).write_text(json.dumps(doc))
    with pytest.raises(CorruptionError):
        load_model(tmp_path / "ck")


def test_state_dict_mismatch_rejected(tmp_path):
    one_head = small_unet(heads=1)
    two_heads = small_unet(heads=2)
    with pytest.raises(ShapeError):
        one_head.load_state_dict(two_heads.state_dict())
