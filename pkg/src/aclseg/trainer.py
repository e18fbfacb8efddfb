"""Continual-learning engine: Adam, plateau scheduling with early
stopping, the per-task ACLSeg adversarial loop, the FT/LwF baseline
loops, joint (ideal) training, and sequence orchestration with run
persistence.

Every run is fully determined by its config seed: batch shuffles, noise
draws, and parameter init all flow from named SeedSequence streams.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from . import tensor as T
from .baselines import MultiHeadUNet, UNetConfig
from .checkpoint import clone_model, save_model
from .data import Dataset
from .errors import ConfigError, ShapeError, TrainingAbortError
from .losses import (
    LossWeights,
    adv_loss_discriminator,
    adv_loss_shared,
    bce_loss,
    diff_loss,
    lwf_distill,
    total_loss,
)
from .metrics import AccuracyMatrix, IdealScores, compute_omegas, dice, write_omega_json
from .model import ACLSegModel, ModelConfig
from .tensor import Tensor, make_rng


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    plateau_factor: float = 3.0
    plateau_patience: int = 5
    min_lr: float = 1e-5
    early_stop_patience: int = 10
    # Relative val-BCE drop that counts as improvement for the plateau and
    # early-stop counters: val < best * (1 - min_delta). A fraction, so easy
    # tasks (tiny BCE floors) and hard ones stall on the same terms.
    min_delta: float = 0.03
    batch_size: int = 8
    max_epochs: int = 45
    weights: LossWeights = field(default_factory=LossWeights)
    lwf_mu: float = 1.0
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.plateau_factor <= 1:
            raise ConfigError(f"plateau_factor must be > 1, got {self.plateau_factor}")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if not 0 <= self.min_delta < 1:
            raise ConfigError(f"min_delta must be a fraction in [0, 1), got {self.min_delta}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")

    def as_dict(self) -> dict:
        doc = {
            "lr0": self.lr0,
            "plateau_factor": self.plateau_factor,
            "plateau_patience": self.plateau_patience,
            "min_lr": self.min_lr,
            "early_stop_patience": self.early_stop_patience,
            "min_delta": self.min_delta,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "weights": [self.weights.lambda1, self.weights.lambda2, self.weights.lambda3],
            "lwf_mu": self.lwf_mu,
            "seed": self.seed,
            "deterministic": self.deterministic,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        w = doc.pop("weights", None)
        cfg = cls(**doc)
        if w is not None:
            cfg.weights = LossWeights(*w)
        return cfg


# -- optimizer -------------------------------------------------------------


def adam_step(params, grads, state: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update over parallel lists of parameters and gradients.

    state maps parameter position -> {"m", "v", "t"}; entries are created
    on first use. A None gradient skips the parameter entirely (its state
    does not advance), which is how frozen/inactive parameters avoid
    stale-momentum updates.
    """
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} vs param {p.data.shape}")
        st = state.setdefault(i, {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0})
        st["t"] += 1
        st["m"] = beta1 * st["m"] + (1.0 - beta1) * g
        st["v"] = beta2 * st["v"] + (1.0 - beta2) * (g * g)
        m_hat = st["m"] / (1.0 - beta1 ** st["t"])
        v_hat = st["v"] / (1.0 - beta2 ** st["t"])
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Stateful wrapper around adam_step bound to a fixed parameter list."""

    def __init__(self, params, lr: float):
        seen: set[int] = set()
        self.params = []
        for p in params:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                self.params.append(p)
        self.lr = lr
        self.state: dict = {}

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- generic fit loop ------------------------------------------------------


def _require_finite(value: float, term: str, context: str):
    if not np.isfinite(value):
        raise TrainingAbortError(f"non-finite {term} ({value}) during {context}")


def fit_loop(train_epoch, validate, snapshot, restore, cfg: TrainConfig, context: str) -> list[dict]:
    """Epochs with plateau LR decay and early stopping.

    train_epoch(lr) -> dict of scalar losses; validate() -> float;
    snapshot()/restore(state) save and reinstate the best model. Returns
    the per-epoch log. The best-validation state is restored at the end.
    """
    lr = cfg.lr0
    best = float("inf")
    best_state = None
    plateau = 0
    stall = 0
    logs: list[dict] = []
    for epoch in range(cfg.max_epochs):
        losses = train_epoch(lr)
        val = validate()
        _require_finite(val, "val_bce", context)
        if val < best * (1.0 - cfg.min_delta):
            best = val
            best_state = snapshot()
            plateau = 0
            stall = 0
        else:
            plateau += 1
            stall += 1
        logs.append({"epoch": epoch, "lr": lr, "val_bce": val, **losses})
        if stall >= cfg.early_stop_patience:
            break
        if plateau >= cfg.plateau_patience:
            lr = max(lr / cfg.plateau_factor, cfg.min_lr)
            plateau = 0
    if best_state is not None:
        restore(best_state)
    return logs


def _epoch_shuffle_seed(seed: int, task: int, epoch: int) -> int:
    return seed * 1_000_000 + task * 1_000 + epoch


def _model_snapshot(model) -> dict:
    return model.state_dict()


# -- evaluation ------------------------------------------------------------


def mean_test_dice(predict_logits, dataset: Dataset, class_id: int, batch_size: int) -> float:
    """Per-image Dice against class_id's mask, averaged over the test split."""
    scores: list[float] = []
    for images, masks, _ in dataset.batches("test", class_id, batch_size):
        with T.no_grad():
            logits = predict_logits(Tensor(images))
        for n in range(images.shape[0]):
            scores.append(dice(logits.data[n, 0], masks[n, 0]))
    return float(np.mean(scores))


def _val_bce(predict_logits, dataset: Dataset, class_id: int, batch_size: int) -> float:
    total, count = 0.0, 0
    for images, masks, _ in dataset.batches("val", class_id, batch_size):
        with T.no_grad():
            loss = bce_loss(predict_logits(Tensor(images)), Tensor(masks))
        n = images.shape[0]
        total += loss.item() * n
        count += n
    return total / max(count, 1)


# -- ACLSeg task training ---------------------------------------------------


def train_task_aclseg(model: ACLSegModel, k: int, dataset: Dataset, class_id: int, cfg: TrainConfig) -> list[dict]:
    """Alternating discriminator/main optimization for one task.

    Per batch: (1) the discriminator learns to classify detached real
    latents as task k+1 against standard-normal noise rows labeled 0;
    (2) the main step minimizes BCE + lambda2*confusion + lambda3*diff,
    updating shared/private_k/head_k only. The discriminator's parameters
    are excluded from the confusion gradient by temporarily dropping
    their requires_grad, so the signal flows through Z_S alone.
    """
    context = f"aclseg task {k + 1} (class {class_id})"
    opt_main = Adam(model.task_parameters(k), cfg.lr0)
    opt_d = Adam(model.discriminator.parameters(), cfg.lr0)
    noise_rng = make_rng(cfg.seed, "noise", k)

    def train_epoch(lr: float) -> dict:
        opt_main.lr = lr
        opt_d.lr = lr
        sums = {"bce": 0.0, "adv_d": 0.0, "adv_shared": 0.0, "diff": 0.0, "total": 0.0, "d_acc": 0.0}
        batches = 0
        epoch = train_epoch.epoch
        train_epoch.epoch += 1
        shuffle = _epoch_shuffle_seed(cfg.seed, k, epoch)
        for images, masks, _ in dataset.batches("train", class_id, cfg.batch_size, shuffle_seed=shuffle):
            x = Tensor(images)
            y = Tensor(masks)
            n = images.shape[0]

            # discriminator step on detached latents + noise rows
            with T.no_grad():
                z_real = model.forward_shared(x)
            noise = Tensor(noise_rng.standard_normal(z_real.shape).astype(np.float32))
            d_in = T.concat([Tensor(z_real.data), noise], axis=0)
            d_labels = np.concatenate([np.full(n, k + 1), np.zeros(n)]).astype(np.int64)
            d_logits = model.forward_discriminator(d_in)
            loss_d = adv_loss_discriminator(d_logits, d_labels)
            _require_finite(loss_d.item(), "adv_loss_discriminator", context)
            model.zero_grad()
            T.backward(loss_d)
            opt_d.step()
            d_pred = d_logits.data.argmax(axis=1)
            sums["d_acc"] += float((d_pred == d_labels).mean())

            # main step: segmentation + confusion + orthogonality
            z_s = model.forward_shared(x)
            z_p = model.forward_private(k, x)
            logits = model.forward_head(k, model.fuse(z_s, z_p))
            loss_task = bce_loss(logits, y)
            with nn.frozen_params(model.discriminator):
                d_real = model.forward_discriminator(z_s)
            loss_adv = adv_loss_shared(d_real, np.full(n, k + 1, dtype=np.int64))
            loss_diff = diff_loss(z_s, z_p)
            for term, name in ((loss_task, "bce_loss"), (loss_adv, "adv_loss_shared"), (loss_diff, "diff_loss")):
                _require_finite(term.item(), name, context)
            loss = total_loss(loss_task, loss_adv, loss_diff, cfg.weights)
            model.zero_grad()
            T.backward(loss)
            opt_main.step()

            sums["bce"] += loss_task.item()
            sums["adv_d"] += loss_d.item()
            sums["adv_shared"] += loss_adv.item()
            sums["diff"] += loss_diff.item()
            sums["total"] += loss.item()
            batches += 1
        return {key: value / max(batches, 1) for key, value in sums.items()}

    train_epoch.epoch = 0

    logs = fit_loop(
        train_epoch,
        lambda: _val_bce(lambda x: model.segment(k, x), dataset, class_id, cfg.batch_size),
        lambda: _model_snapshot(model),
        model.load_state_dict,
        cfg,
        context,
    )
    model.freeze_task(k)
    return logs


# -- baseline task training --------------------------------------------------


def _teacher_logits(model: MultiHeadUNet, k: int, dataset: Dataset, class_id: int, batch_size: int):
    """Snapshot the model and record its logits for heads 0..k-1 over the
    task's training split.  Returns (row-by-sample-index map, per-head
    logit arrays) for distillation lookups during the epochs."""
    snapshot = clone_model(model)
    snapshot.freeze()
    indices = list(dataset.split_indices("train", class_id))
    rows = {index: row for row, index in enumerate(indices)}
    h, w = dataset.image_size
    cached = [np.empty((len(indices), 1, h, w), dtype=np.float32) for _ in range(k)]
    for start in range(0, len(indices), batch_size):
        chunk = indices[start : start + batch_size]
        images, _ = dataset.fetch(chunk, class_id)
        with T.no_grad():
            feats = snapshot.features(Tensor(images))
            for j in range(k):
                cached[j][start : start + len(chunk)] = snapshot.forward_head(j, feats).data
    return rows, cached


def _train_task_unet(model: MultiHeadUNet, k: int, dataset: Dataset, class_id: int, cfg: TrainConfig, distill: bool) -> list[dict]:
    """Shared FT/LwF loop; distill=True adds the snapshot-logit MSE over
    all previous heads (LwF). With lwf_mu == 0 the two are identical."""
    method = "lwf" if distill else "ft"
    context = f"{method} task {k + 1} (class {class_id})"
    if distill:
        params = model.parameters()  # trunk + every head (old heads track the snapshot)
    else:
        params = model.trunk_parameters() + model.heads[k].parameters()
    opt = Adam(params, cfg.lr0)
    teacher = None
    if distill and k > 0:
        # The task's training images never change, so the snapshot logits
        # are computed once here rather than re-forwarded every step.
        teacher = _teacher_logits(model, k, dataset, class_id, cfg.batch_size)

    def train_epoch(lr: float) -> dict:
        opt.lr = lr
        sums = {"bce": 0.0, "distill": 0.0, "total": 0.0}
        batches = 0
        epoch = train_epoch.epoch
        train_epoch.epoch += 1
        shuffle = _epoch_shuffle_seed(cfg.seed, k, epoch)
        for images, masks, _, chunk in dataset.batches(
            "train", class_id, cfg.batch_size, shuffle_seed=shuffle, with_indices=True
        ):
            x = Tensor(images)
            y = Tensor(masks)
            feats = model.features(x)
            loss = bce_loss(model.forward_head(k, feats), y)
            _require_finite(loss.item(), "bce_loss", context)
            sums["bce"] += loss.item()
            if teacher is not None:
                rows, cached = teacher
                pick = [rows[i] for i in chunk]
                for j in range(k):
                    term = lwf_distill(Tensor(cached[j][pick]), model.forward_head(j, feats))
                    _require_finite(term.item(), "lwf_distill", context)
                    sums["distill"] += term.item()
                    loss = T.add(loss, T.mul(term, cfg.lwf_mu))
            _require_finite(loss.item(), "total_loss", context)
            sums["total"] += loss.item()
            model.zero_grad()
            T.backward(loss)
            opt.step()
            batches += 1
        return {key: value / max(batches, 1) for key, value in sums.items()}

    train_epoch.epoch = 0

    return fit_loop(
        train_epoch,
        lambda: _val_bce(lambda x: model.segment(k, x), dataset, class_id, cfg.batch_size),
        lambda: _model_snapshot(model),
        model.load_state_dict,
        cfg,
        context,
    )


def train_task_ft(model, k, dataset, class_id, cfg):
    return _train_task_unet(model, k, dataset, class_id, cfg, distill=False)


def train_task_lwf(model, k, dataset, class_id, cfg):
    return _train_task_unet(model, k, dataset, class_id, cfg, distill=True)


# -- joint (ideal) training ---------------------------------------------------


def _joint_indices(dataset: Dataset) -> list[int]:
    out: list[int] = []
    for cid in sorted(dataset.manifest.train_subsets):
        out.extend(dataset.manifest.train_subsets[cid])
    return out


def train_joint_unet(dataset: Dataset, cfg: TrainConfig, unet_config: UNetConfig) -> tuple[MultiHeadUNet, IdealScores]:
    """Offline upper bound for the U-Net family: all five masks of every
    training image are supervised simultaneously."""
    context = "joint unet"
    model = MultiHeadUNet(unet_config)
    for _ in range(5):
        model.add_head()
    opt = Adam(model.parameters(), cfg.lr0)
    indices = _joint_indices(dataset)

    def train_epoch(lr: float) -> dict:
        opt.lr = lr
        sums = {"bce": 0.0}
        batches = 0
        epoch = train_epoch.epoch
        train_epoch.epoch += 1
        order = make_rng(cfg.seed, "joint_shuffle", epoch).permutation(len(indices))
        for start in range(0, len(indices), cfg.batch_size):
            chunk = [indices[i] for i in order[start : start + cfg.batch_size]]
            images, masks = dataset.fetch_joint(chunk)
            feats = model.features(Tensor(images))
            losses = [bce_loss(model.forward_head(j, feats), Tensor(masks[:, j : j + 1])) for j in range(5)]
            loss = T.mul(losses[0], 0.2)
            for term in losses[1:]:
                loss = T.add(loss, T.mul(term, 0.2))
            _require_finite(loss.item(), "bce_loss", context)
            model.zero_grad()
            T.backward(loss)
            opt.step()
            sums["bce"] += loss.item()
            batches += 1
        return {key: value / max(batches, 1) for key, value in sums.items()}

    train_epoch.epoch = 0

    def validate() -> float:
        return float(
            np.mean([_val_bce(lambda x, j=j: model.segment(j, x), dataset, j + 1, cfg.batch_size) for j in range(5)])
        )

    fit_loop(train_epoch, validate, lambda: _model_snapshot(model), model.load_state_dict, cfg, context)
    per_class = {
        cid: mean_test_dice(lambda x, j=cid - 1: model.segment(j, x), dataset, cid, cfg.batch_size)
        for cid in range(1, 6)
    }
    return model, IdealScores(per_class=per_class, model="unet")


def train_joint_aclseg(dataset: Dataset, cfg: TrainConfig, model_config: ModelConfig) -> tuple[ACLSegModel, IdealScores]:
    """Offline upper bound for ACLSeg: all five tasks exist from the
    start (nothing frozen) and batches cycle through the tasks, so every
    head keeps training until global convergence."""
    context = "joint aclseg"
    model = ACLSegModel(model_config)
    for _ in range(5):
        model.add_task()
    model.unfreeze_all_tasks()
    opt_main = Adam(
        model.shared.parameters()
        + [p for k in range(5) for p in model.privates[k].parameters()]
        + [p for k in range(5) for p in model.heads[k].parameters()],
        cfg.lr0,
    )
    opt_d = Adam(model.discriminator.parameters(), cfg.lr0)
    noise_rng = make_rng(cfg.seed, "joint_noise")
    indices = _joint_indices(dataset)

    def train_epoch(lr: float) -> dict:
        opt_main.lr = lr
        opt_d.lr = lr
        sums = {"bce": 0.0, "adv_d": 0.0, "adv_shared": 0.0, "diff": 0.0}
        batches = 0
        epoch = train_epoch.epoch
        train_epoch.epoch += 1
        order = make_rng(cfg.seed, "joint_shuffle", epoch).permutation(len(indices))
        for start in range(0, len(indices), cfg.batch_size):
            chunk = [indices[i] for i in order[start : start + cfg.batch_size]]
            task = batches % 5
            class_id = task + 1
            images, masks = dataset.fetch(chunk, class_id)
            x = Tensor(images)
            n = images.shape[0]

            with T.no_grad():
                z_real = model.forward_shared(x)
            noise = Tensor(noise_rng.standard_normal(z_real.shape).astype(np.float32))
            d_in = T.concat([Tensor(z_real.data), noise], axis=0)
            d_labels = np.concatenate([np.full(n, task + 1), np.zeros(n)]).astype(np.int64)
            d_logits = model.forward_discriminator(d_in)
            loss_d = adv_loss_discriminator(d_logits, d_labels)
            _require_finite(loss_d.item(), "adv_loss_discriminator", context)
            model.zero_grad()
            T.backward(loss_d)
            opt_d.step()

            z_s = model.forward_shared(x)
            z_p = model.forward_private(task, x)
            logits = model.forward_head(task, model.fuse(z_s, z_p))
            loss_task = bce_loss(logits, Tensor(masks))
            with nn.frozen_params(model.discriminator):
                d_real = model.forward_discriminator(z_s)
            loss_adv = adv_loss_shared(d_real, np.full(n, task + 1, dtype=np.int64))
            loss_diff = diff_loss(z_s, z_p)
            loss = total_loss(loss_task, loss_adv, loss_diff, cfg.weights)
            _require_finite(loss.item(), "total_loss", context)
            model.zero_grad()
            T.backward(loss)
            opt_main.step()

            sums["bce"] += loss_task.item()
            sums["adv_d"] += loss_d.item()
            sums["adv_shared"] += loss_adv.item()
            sums["diff"] += loss_diff.item()
            batches += 1
        return {key: value / max(batches, 1) for key, value in sums.items()}

    train_epoch.epoch = 0

    def validate() -> float:
        return float(
            np.mean([_val_bce(lambda x, j=j: model.segment(j, x), dataset, j + 1, cfg.batch_size) for j in range(5)])
        )

    fit_loop(train_epoch, validate, lambda: _model_snapshot(model), model.load_state_dict, cfg, context)
    per_class = {
        cid: mean_test_dice(lambda x, j=cid - 1: model.segment(j, x), dataset, cid, cfg.batch_size)
        for cid in range(1, 6)
    }
    return model, IdealScores(per_class=per_class, model="aclseg")


def train_joint(dataset: Dataset, cfg: TrainConfig, arch: str = "unet", arch_config=None):
    if arch == "unet":
        return train_joint_unet(dataset, cfg, arch_config or UNetConfig(image_size=dataset.image_size, seed=cfg.seed))
    if arch == "aclseg":
        if arch_config is None:
            h, w = dataset.image_size
            arch_config = ModelConfig(image_size=(h, w), latent_dim=(h // 16) * (w // 16), seed=cfg.seed)
        return train_joint_aclseg(dataset, cfg, arch_config)
    raise ConfigError(f"unknown joint architecture {arch!r}")


# -- sequence orchestration ---------------------------------------------------


@dataclass
class RunRecord:
    method: str
    schedule: tuple[int, ...]
    out_dir: Path
    matrix: AccuracyMatrix
    epoch_logs: list[dict]
    elapsed_seconds: float


_TASK_TRAINERS = {
    "aclseg": train_task_aclseg,
    "ft": train_task_ft,
    "lwf": train_task_lwf,
}


def _build_sequence_model(method: str, dataset: Dataset, cfg: TrainConfig, variant: str):
    h, w = dataset.image_size
    if method == "aclseg":
        return ACLSegModel(
            ModelConfig(image_size=(h, w), latent_dim=(h // 16) * (w // 16), variant=variant, seed=cfg.seed)
        )
    return MultiHeadUNet(UNetConfig(image_size=(h, w), seed=cfg.seed))


def run_sequence(
    method: str,
    schedule,
    dataset: Dataset,
    cfg: TrainConfig,
    out_dir,
    variant: str = "full",
    ideal: IdealScores | None = None,
) -> RunRecord:
    """Train the schedule task by task, evaluating every learned class on
    the shared test split after each task. Persists config.json,
    schedule.json, epochs.jsonl, per-task checkpoints, matrix.csv, and
    omega.json when an ideal reference is supplied. A partial record
    (completed tasks only) is kept if training aborts."""
    if method not in _TASK_TRAINERS:
        raise ConfigError(f"unknown method {method!r}, expected one of {sorted(_TASK_TRAINERS)}")
    schedule = tuple(int(c) for c in schedule)
    if sorted(schedule) != sorted(set(schedule)) or not set(schedule) <= {1, 2, 3, 4, 5}:
        raise ConfigError(f"schedule must be distinct class ids in 1..5, got {schedule}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(
            {"method": method, "variant": variant, "schedule": list(schedule), "train": cfg.as_dict()},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    (out_dir / "schedule.json").write_text(json.dumps({"classes": list(schedule)}) + "\n")
    epochs_path = out_dir / "epochs.jsonl"
    epochs_path.write_text("")

    model = _build_sequence_model(method, dataset, cfg, variant)
    trainer = _TASK_TRAINERS[method]
    rows: list[list[float]] = []
    all_logs: list[dict] = []
    start = time.monotonic()
    try:
        for k, class_id in enumerate(schedule):
            if method == "aclseg":
                model.add_task()
            else:
                model.add_head()
            task_logs = trainer(model, k, dataset, class_id, cfg)
            with open(epochs_path, "a") as fh:
                for entry in task_logs:
                    entry = {"task": k + 1, "class": class_id, **entry}
                    all_logs.append(entry)
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            row = [
                mean_test_dice(lambda x, j=j: model.segment(j, x), dataset, schedule[j], cfg.batch_size)
                for j in range(k + 1)
            ]
            rows.append(row)
            save_model(model, out_dir / "checkpoints" / f"task_{k + 1}")
    finally:
        elapsed = time.monotonic() - start
        if rows:
            matrix = AccuracyMatrix(schedule=schedule[: len(rows)], rows=rows)
            matrix.to_csv(out_dir / "matrix.csv")
            if ideal is not None and len(rows) >= 2:
                write_omega_json(
                    out_dir / "omega.json",
                    compute_omegas(matrix, ideal),
                    matrix,
                    ideal,
                    config_echo={"method": method, "variant": variant, "seed": cfg.seed},
                )
        (out_dir / "run.json").write_text(
            json.dumps(
                {"method": method, "elapsed_seconds": elapsed, "tasks_completed": len(rows)},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return RunRecord(method, schedule, out_dir, matrix, all_logs, elapsed)
