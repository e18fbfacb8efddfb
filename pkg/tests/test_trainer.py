"""Optimizer oracles, the fit loop's stopping arithmetic, and tiny
end-to-end sequences at 32x32 scale."""

import json

import numpy as np
import pytest

import aclseg.tensor as T
from aclseg.data import generate_benchmark, load_dataset
from aclseg.errors import ConfigError, TrainingAbortError
from aclseg.metrics import AccuracyMatrix
from aclseg.tensor import Tensor
from aclseg.trainer import Adam, TrainConfig, adam_step, fit_loop, run_sequence


# -- Adam ------------------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    # m/v bias correction makes step 1 equal -lr * g/|g| for any g != 0
    p = Tensor(np.array([2.0, -3.0, 0.5], dtype=np.float32), requires_grad=True)
    p.grad = np.array([0.1, -40.0, 1e-3], dtype=np.float32)
    before = p.data.copy()
    opt = Adam([p], lr=1e-2)
    opt.step()
    step = p.data - before
    np.testing.assert_allclose(step, [-1e-2, 1e-2, -1e-2], rtol=1e-4)


def test_adam_descends_quadratic():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(100):
        p.grad = 2.0 * p.data
        opt.step()
    assert abs(float(p.data[0])) < 0.05


def test_adam_skips_parameters_without_grad():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    q = Tensor(np.array([5.0], dtype=np.float32), requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    opt = Adam([p, q], lr=0.1)
    opt.step()
    assert float(q.data[0]) == 5.0
    assert float(p.data[0]) != 1.0


def test_adam_step_function_matches_class():
    rng = np.random.default_rng(0)
    data = rng.standard_normal(4).astype(np.float32)
    grad = rng.standard_normal(4).astype(np.float32)

    p = Tensor(data.copy(), requires_grad=True)
    p.grad = grad.copy()
    opt = Adam([p], lr=3e-3)
    opt.step()
    opt.step()

    q = Tensor(data.copy(), requires_grad=True)
    state: dict = {}
    for _ in range(2):
        adam_step([q], [grad], state, lr=3e-3)
    np.testing.assert_array_equal(p.data, q.data)


# -- fit loop --------------------------------------------------------------


def run_scripted_loop(vals, cfg, record_lr=None):
    """Drive fit_loop with a scripted validation sequence."""
    state = {"restored": None, "snaps": 0}
    it = iter(vals)

    def train_epoch(lr):
        if record_lr is not None:
            record_lr.append(lr)
        return {"bce": 0.0}

    def validate():
        return next(it)

    def snapshot():
        state["snaps"] += 1
        return state["snaps"]

    def restore(s):
        state["restored"] = s

    logs = fit_loop(train_epoch, validate, snapshot, restore, cfg, "scripted")
    return logs, state


def test_plateau_divides_lr_by_factor():
    # constant validation: patience+1 epochs at lr0, then lr0/3
    lrs = []
    cfg = TrainConfig(seed=0, max_epochs=8, plateau_patience=5, early_stop_patience=50)
    run_scripted_loop([1.0] * 8, cfg, record_lr=lrs)
    assert lrs[:6] == [1e-3] * 6
    assert lrs[6] == pytest.approx(1e-3 / 3.0, rel=1e-12)


def test_lr_never_drops_below_floor():
    lrs = []
    cfg = TrainConfig(seed=0, max_epochs=40, plateau_patience=1, early_stop_patience=50, min_lr=1e-5)
    run_scripted_loop([1.0] * 40, cfg, record_lr=lrs)
    assert min(lrs) == pytest.approx(1e-5)


def test_early_stop_after_patience_stalls():
    cfg = TrainConfig(seed=0, max_epochs=60, early_stop_patience=10)
    logs, _ = run_scripted_loop([0.5] + [0.5] * 59, cfg)
    # epoch 0 sets best; 10 stalled epochs follow
    assert len(logs) == 11


def test_improvement_below_min_delta_does_not_reset_stall():
    cfg = TrainConfig(seed=0, max_epochs=60, early_stop_patience=5, min_delta=1e-2)
    vals = [1.0 - 1e-3 * i for i in range(60)]  # improves, but too slowly
    logs, _ = run_scripted_loop(vals, cfg)
    assert len(logs) == 6


def test_improvement_above_min_delta_resets_stall():
    cfg = TrainConfig(seed=0, max_epochs=12, early_stop_patience=5, min_delta=1e-2)
    vals = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01]
    logs, _ = run_scripted_loop(vals, cfg)
    assert len(logs) == 12


def test_best_epoch_state_is_restored():
    cfg = TrainConfig(seed=0, max_epochs=7, early_stop_patience=50)
    vals = [0.9, 0.5, 0.7, 0.8, 0.9, 1.0, 1.1]
    _, state = run_scripted_loop(vals, cfg)
    # snapshots taken at epochs 0 and 1; the second is the best
    assert state["restored"] == 2


def test_non_finite_validation_aborts_with_term_name():
    cfg = TrainConfig(seed=0, max_epochs=5)
    with pytest.raises(TrainingAbortError, match="val_bce"):
        run_scripted_loop([0.5, float("nan")], cfg)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        TrainConfig(seed=0, lr0=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(seed=0, plateau_factor=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(seed=0, plateau_patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(seed=0, min_delta=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(seed=0, min_delta=1.0)


# -- tiny end-to-end sequences ----------------------------------------------


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyds")
    generate_benchmark(seed=11, n_train_per_class=6, n_val=4, n_test=4, size=(32, 32), out_dir=root)
    return load_dataset(root / "manifest.json")


def tiny_cfg(**over):
    base = dict(seed=3, batch_size=4, max_epochs=3, early_stop_patience=10)
    base.update(over)
    return TrainConfig(**base)


def test_run_sequence_rejects_bad_inputs(tiny_dataset, tmp_path):
    with pytest.raises(ConfigError):
        run_sequence("sgd", (1, 2, 3, 4, 5), tiny_dataset, tiny_cfg(), tmp_path / "x")
    with pytest.raises(ConfigError):
        run_sequence("ft", (1, 1, 2, 3, 4), tiny_dataset, tiny_cfg(), tmp_path / "y")
    with pytest.raises(ConfigError):
        run_sequence("ft", (0, 1, 2, 3, 4), tiny_dataset, tiny_cfg(), tmp_path / "z")


def test_ft_sequence_writes_record(tiny_dataset, tmp_path):
    rec = run_sequence("ft", (1, 2, 3, 4, 5), tiny_dataset, tiny_cfg(), tmp_path / "run")
    m = AccuracyMatrix.from_csv(tmp_path / "run" / "matrix.csv")
    assert m.schedule == (1, 2, 3, 4, 5)
    assert len(m.rows) == 5 and len(m.rows[4]) == 5
    for f in ("config.json", "schedule.json", "epochs.jsonl", "matrix.csv"):
        assert (tmp_path / "run" / f).exists()
    for k in range(1, 6):
        assert (tmp_path / "run" / "checkpoints" / f"task_{k}").is_dir()
    assert rec.elapsed_seconds > 0


def test_lwf_task1_identical_to_ft(tiny_dataset, tmp_path):
    # distillation has nothing to distill on the first task
    ft = run_sequence("ft", (2, 1, 3, 4, 5), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "ft")
    lwf = run_sequence("lwf", (2, 1, 3, 4, 5), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "lwf")
    a = (tmp_path / "ft" / "checkpoints" / "task_1" / "weights.bin").read_bytes()
    b = (tmp_path / "lwf" / "checkpoints" / "task_1" / "weights.bin").read_bytes()
    assert a == b
    assert ft.matrix.rows[0][0] == lwf.matrix.rows[0][0]


def test_lwf_mu_zero_equals_ft_everywhere(tiny_dataset, tmp_path):
    ft = run_sequence("ft", (1, 2, 3, 4, 5), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "ft")
    lwf = run_sequence(
        "lwf", (1, 2, 3, 4, 5), tiny_dataset, tiny_cfg(max_epochs=2, lwf_mu=0.0), tmp_path / "lwf"
    )
    a = (tmp_path / "ft" / "checkpoints" / "task_5" / "weights.bin").read_bytes()
    b = (tmp_path / "lwf" / "checkpoints" / "task_5" / "weights.bin").read_bytes()
    assert a == b
    assert ft.matrix.rows == lwf.matrix.rows


def test_aclseg_sequence_freezes_finished_tasks(tiny_dataset, tmp_path):
    run_sequence("aclseg", (1, 2, 3), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "run")
    ck = tmp_path / "run" / "checkpoints"
    early = json.loads((ck / "task_1" / "manifest.json").read_text())
    final = json.loads((ck / "task_3" / "manifest.json").read_text())
    early_blob = (ck / "task_1" / "weights.bin").read_bytes()
    final_blob = (ck / "task_3" / "weights.bin").read_bytes()
    for name, meta in early["params"].items():
        if ".privates.0." in name or ".heads.0." in name or name.startswith(("privates.0.", "heads.0.")):
            n = int(np.prod(meta["shape"])) * 4
            chunk = early_blob[meta["offset"] : meta["offset"] + n]
            fmeta = final["params"][name]
            fchunk = final_blob[fmeta["offset"] : fmeta["offset"] + n]
            assert chunk == fchunk, f"frozen parameter {name} changed after later tasks"


def test_aclseg_shared_adversarial_loss_trends_down(tiny_dataset, tmp_path):
    # the shared encoder should get better at fooling the discriminator
    # over task-1 training; compare epoch-median halves rather than single
    # epochs so optimizer noise cannot flip the verdict
    rec = run_sequence("aclseg", (2,), tiny_dataset, tiny_cfg(max_epochs=8), tmp_path / "run")
    logs = [l for l in rec.epoch_logs if l["task"] == 1]
    adv = [l["adv_shared"] for l in logs]
    first, second = adv[: len(adv) // 2], adv[len(adv) // 2 :]
    assert np.median(second) <= np.median(first), f"adversarial loss not trending down: {adv}"
    accs = [l["d_acc"] for l in logs]
    assert all(0.0 <= a <= 1.0 for a in accs)


def test_identical_runs_are_byte_identical(tiny_dataset, tmp_path):
    run_sequence("ft", (1, 2), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "a")
    run_sequence("ft", (1, 2), tiny_dataset, tiny_cfg(max_epochs=2), tmp_path / "b")
    for f in ("matrix.csv", "epochs.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_teacher_logit_cache_matches_direct_forward(tiny_dataset):
    from aclseg.baselines import MultiHeadUNet, UNetConfig
    from aclseg.trainer import _teacher_logits

    model = MultiHeadUNet(UNetConfig(seed=8, base_channels=8, image_size=(32, 32)))
    for _ in range(3):
        model.add_head()
    rows, cached = _teacher_logits(model, 2, tiny_dataset, class_id=3, batch_size=4)
    assert len(cached) == 2
    idxs = list(tiny_dataset.split_indices("train", 3))
    assert sorted(rows) == sorted(idxs)
    # single-sample forwards must line up row by row with the batched cache
    for idx in (idxs[0], idxs[-1]):
        images, _ = tiny_dataset.fetch([idx], 3)
        with T.no_grad():
            feats = model.features(Tensor(images))
            for j in range(2):
                ref = model.forward_head(j, feats).data
                np.testing.assert_allclose(cached[j][rows[idx]], ref[0], atol=1e-5)
