"""Dice coefficient and the knowledge-retention scores.

The AccuracyMatrix records per-step test Dice for every class learned so
far; the Omega scores normalize it against the ideal (joint-training)
reference. Everything here is a pure function of its inputs, so a
persisted matrix.csv can be re-scored at any time and must reproduce the
original omega.json exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, CorruptionError, DegenerateIdealError, ShapeError

CLASS_NAMES = {1: "cord", 2: "right_lung", 3: "left_lung", 4: "heart", 5: "oesophagus"}


def dice_masks(pred: np.ndarray, gt: np.ndarray, eps: float = 1e-6) -> float:
    """Dice of two binary masks: (2|A n B| + eps) / (|A| + |B| + eps).

    The eps smoothing makes two empty masks score 1.0.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"dice: pred {pred.shape} vs gt {gt.shape}")
    a = pred.astype(bool)
    b = gt.astype(bool)
    inter = np.logical_and(a, b).sum()
    return float((2.0 * inter + eps) / (a.sum() + b.sum() + eps))


def dice(pred_logits: np.ndarray, gt: np.ndarray, threshold: float = 0.5, eps: float = 1e-6) -> float:
    """Binarize sigmoid(logits) at threshold, then score against gt."""
    if pred_logits.shape != gt.shape:
        raise ShapeError(f"dice: logits {pred_logits.shape} vs gt {gt.shape}")
    x = np.asarray(pred_logits, dtype=np.float64)
    prob = np.empty_like(x)
    pos = x >= 0
    prob[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    prob[~pos] = ex / (1.0 + ex)
    return dice_masks(prob > threshold, np.asarray(gt) > 0.5, eps)


@dataclass
class AccuracyMatrix:
    """Lower-triangular Dice table over a task schedule.

    rows[i-1][j-1] = test Dice of the class at schedule position j after
    the first i classes have been learned (1 <= j <= i <= T).
    """

    schedule: tuple[int, ...]
    rows: list[list[float]]

    @property
    def T(self) -> int:
        return len(self.schedule)

    def validate(self):
        if sorted(self.schedule) != sorted(set(self.schedule)):
            raise ContractError(f"schedule has duplicate class ids: {self.schedule}")
        if len(self.rows) != self.T:
            raise ContractError(f"matrix has {len(self.rows)} rows for a {self.T}-task schedule")
        for i, row in enumerate(self.rows, start=1):
            if len(row) != i:
                raise ContractError(f"row {i} has {len(row)} entries, expected {i}")
            for v in row:
                if not (0.0 <= v <= 1.0):
                    raise ContractError(f"dice value {v} outside [0, 1] in row {i}")

    def alpha(self, i: int, j: int) -> float:
        """1-indexed lookup: Dice of schedule position j after i steps."""
        return self.rows[i - 1][j - 1]

    def diagonal(self) -> list[float]:
        return [self.rows[i][i] for i in range(self.T)]

    def to_csv(self, path):
        self.validate()
        lines = ["step,class,dice"]
        for i, row in enumerate(self.rows, start=1):
            for j, value in enumerate(row, start=1):
                lines.append(f"{i},{self.schedule[j - 1]},{value!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["step", "class", "dice"]:
                raise CorruptionError(f"{path}: expected header 'step,class,dice', got {header}")
            try:
                entries = [(int(s), int(c), float(d)) for s, c, d in reader]
            except ValueError as exc:
                raise CorruptionError(f"{path}: malformed row: {exc}") from exc
        if not entries:
            raise CorruptionError(f"{path}: no matrix rows")
        steps = max(s for s, _, _ in entries)
        schedule: list[int] = []
        rows: list[list[float]] = []
        for i in range(1, steps + 1):
            step_entries = [(c, d) for s, c, d in entries if s == i]
            if len(step_entries) != i:
                raise CorruptionError(f"{path}: step {i} has {len(step_entries)} entries, expected {i}")
            new = [c for c, _ in step_entries if c not in schedule]
            if len(new) != 1:
                raise CorruptionError(f"{path}: step {i} introduces {new} instead of exactly one new class")
            schedule.append(new[0])
            by_class = dict(step_entries)
            rows.append([by_class[c] for c in schedule])
        m = cls(schedule=tuple(schedule), rows=rows)
        m.validate()
        return m


@dataclass
class IdealScores:
    """Per-class joint-training Dice; the normalizer of every Omega score."""

    per_class: dict[int, float]
    model: str = "unet"

    def validate(self):
        for cid, v in self.per_class.items():
            if not (0.0 <= v <= 1.0):
                raise ContractError(f"ideal dice {v} for class {cid} outside [0, 1]")

    def base(self, schedule) -> float:
        return self.per_class[schedule[0]]

    def running_mean(self, schedule, i: int) -> float:
        """Mean ideal Dice of the first i scheduled classes."""
        vals = [self.per_class[c] for c in schedule[:i]]
        return float(np.mean(vals))

    def to_json(self, path, schedule=(1, 2, 3, 4, 5), config_echo: dict | None = None):
        self.validate()
        doc = {
            "model": self.model,
            "per_class": {str(c): self.per_class[c] for c in sorted(self.per_class)},
            "class_names": {str(c): CLASS_NAMES.get(c, str(c)) for c in sorted(self.per_class)},
            "schedule": list(schedule),
            "running_means": [self.running_mean(schedule, i) for i in range(2, len(schedule) + 1)],
            "config": config_echo or {},
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "IdealScores":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
            scores = cls(
                per_class={int(c): float(v) for c, v in doc["per_class"].items()},
                model=doc.get("model", "unet"),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptionError(f"{path}: not a valid ideal-scores file ({exc})") from exc
        scores.validate()
        return scores


def _require_multi_task(m: AccuracyMatrix):
    m.validate()
    if m.T < 2:
        raise ContractError(f"omega scores need at least 2 tasks, got {m.T}")


def omega_base(m: AccuracyMatrix, ideal: IdealScores) -> float:
    """Retention of the first learned class, averaged over steps 2..T and
    normalized by that class's ideal Dice (a constant denominator)."""
    _require_multi_task(m)
    denom = ideal.base(m.schedule)
    if denom == 0.0:
        raise DegenerateIdealError(f"ideal Dice of base class {m.schedule[0]} is zero")
    return float(sum(m.alpha(i, 1) / denom for i in range(2, m.T + 1)) / (m.T - 1))


def omega_new(m: AccuracyMatrix, ideal: IdealScores) -> float:
    """Plasticity: Dice of each class right after it is learned, each
    normalized by its own ideal, averaged over steps 2..T."""
    _require_multi_task(m)
    total = 0.0
    for i in range(2, m.T + 1):
        denom = ideal.per_class[m.schedule[i - 1]]
        if denom == 0.0:
            raise DegenerateIdealError(f"ideal Dice of class {m.schedule[i - 1]} is zero")
        total += m.alpha(i, i) / denom
    return float(total / (m.T - 1))


def omega_all(m: AccuracyMatrix, ideal: IdealScores) -> float:
    """Combined retention/plasticity: ratio of the mean Dice over all
    classes seen so far to the ideal running mean, averaged over 2..T."""
    _require_multi_task(m)
    total = 0.0
    for i in range(2, m.T + 1):
        denom = ideal.running_mean(m.schedule, i)
        if denom == 0.0:
            raise DegenerateIdealError(f"ideal running mean over first {i} classes is zero")
        total += float(np.mean(m.rows[i - 1])) / denom
    return float(total / (m.T - 1))


def overall_dice(m: AccuracyMatrix) -> float:
    """Unweighted mean of the final model's per-class Dice."""
    m.validate()
    return float(np.mean(m.rows[m.T - 1]))


@dataclass
class OmegaScores:
    omega_base: float
    omega_new: float
    omega_all: float
    overall_dice: float

    def as_dict(self) -> dict:
        return {
            "omega_base": self.omega_base,
            "omega_new": self.omega_new,
            "omega_all": self.omega_all,
            "overall_dice": self.overall_dice,
        }


def compute_omegas(m: AccuracyMatrix, ideal: IdealScores) -> OmegaScores:
    return OmegaScores(
        omega_base=omega_base(m, ideal),
        omega_new=omega_new(m, ideal),
        omega_all=omega_all(m, ideal),
        overall_dice=overall_dice(m),
    )


def write_omega_json(path, scores: OmegaScores, m: AccuracyMatrix, ideal: IdealScores, config_echo: dict | None = None):
    doc = scores.as_dict()
    doc["schedule"] = list(m.schedule)
    doc["ideal_model"] = ideal.model
    doc["ideal_per_class"] = {str(c): ideal.per_class[c] for c in sorted(ideal.per_class)}
    doc["config"] = config_echo or {}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
