"""Omega metric oracles and properties, plus Dice conventions and the
matrix/ideal file round-trips."""

import numpy as np
import pytest

from aclseg.errors import ContractError, CorruptionError, DegenerateIdealError
from aclseg.metrics import (
    AccuracyMatrix,
    IdealScores,
    OmegaScores,
    compute_omegas,
    dice,
    dice_masks,
    omega_all,
    omega_base,
    omega_new,
    overall_dice,
    write_omega_json,
)
from aclseg.tensor import Tensor, make_rng


def matrix_from_rows(schedule, rows):
    return AccuracyMatrix(schedule=tuple(schedule), rows=[list(r) for r in rows])


def ideal_for(schedule, values, model="unet"):
    return IdealScores(per_class={c: v for c, v in zip(schedule, values)}, model=model)


class TestDice:
    def test_identical_nonempty(self):
        m = np.zeros((8, 8)); m[2:5, 2:5] = 1
        assert dice_masks(m, m) == pytest.approx(1.0, abs=1e-6)

    def test_half_overlap(self):
        a = np.zeros(16); a[:4] = 1
        b = np.zeros(16); b[2:6] = 1
        # |A|=4 |B|=4 |A∩B|=2 -> 0.5
        assert dice_masks(a, b) == pytest.approx(0.5, abs=1e-6)

    def test_both_empty_is_one(self):
        z = np.zeros((4, 4))
        assert dice_masks(z, z) == 1.0

    def test_one_empty_is_zero(self):
        a = np.zeros((4, 4)); a[0, 0] = 1
        assert dice_masks(a, np.zeros((4, 4))) < 1e-5

    def test_symmetry(self):
        rng = make_rng(0, "dice")
        for trial in range(20):
            a = (rng.uniform(size=(6, 6)) > 0.6).astype(float)
            b = (rng.uniform(size=(6, 6)) > 0.6).astype(float)
            assert dice_masks(a, b) == pytest.approx(dice_masks(b, a), abs=1e-12)

    def test_logits_threshold(self):
        # sigmoid(logit) > 0.5 means logit > 0: pred = [[0,1],[1,0]]
        logits = np.array([[-2.0, 1.0], [0.5, -0.1]])
        gt = np.array([[0.0, 1.0], [0.0, 1.0]])
        assert dice(logits, gt) == pytest.approx(
            (2 * 1 + 1e-6) / (2 + 2 + 1e-6), abs=1e-9
        )


class TestOmegaOracles:
    def test_base_hand_value(self):
        # T=3: alpha_base 0.4 then 0.2 against ideal 0.8 -> (0.5+0.25)/2
        m = matrix_from_rows((1, 2, 3), [[0.9], [0.4, 0.8], [0.2, 0.7, 0.8]])
        ideal = ideal_for((1, 2, 3), [0.8, 0.9, 0.9])
        assert omega_base(m, ideal) == pytest.approx(0.375, abs=1e-9)

    def test_new_hand_value(self):
        # diagonal (., 0.45, 0.6) over ideals (., 0.9, 0.6) -> (0.5+1.0)/2
        m = matrix_from_rows((1, 2, 3), [[0.9], [0.5, 0.45], [0.2, 0.4, 0.6]])
        ideal = ideal_for((1, 2, 3), [0.8, 0.9, 0.6])
        assert omega_new(m, ideal) == pytest.approx(0.75, abs=1e-9)

    def test_all_hand_value(self):
        # T=2: row2 (0.4, 0.6) vs ideals (0.8, 0.6): mean 0.5 / mean 0.7
        m = matrix_from_rows((1, 2), [[0.8], [0.4, 0.6]])
        ideal = ideal_for((1, 2), [0.8, 0.6])
        assert omega_all(m, ideal) == pytest.approx(0.5 / 0.7, abs=1e-9)

    def test_overall_dice_mean(self):
        m = matrix_from_rows((1, 2), [[1.0], [0.8, 0.6]])
        assert overall_dice(m) == pytest.approx(0.7, abs=1e-12)

    def test_retention_above_ideal_not_clipped(self):
        m = matrix_from_rows((1, 2), [[0.5], [0.9, 0.9]])
        ideal = ideal_for((1, 2), [0.6, 0.9])
        assert omega_base(m, ideal) > 1.0


class TestOmegaProperties:
    def random_case(self, rng, T):
        schedule = tuple(rng.permutation(np.arange(1, 6))[:T])
        rows = [[float(rng.uniform(0.05, 1.0)) for _ in range(i + 1)] for i in range(T)]
        ideals = [float(rng.uniform(0.2, 1.0)) for _ in range(T)]
        return matrix_from_rows(schedule, rows), ideal_for(schedule, ideals)

    def test_fixed_point_identity_on_100_matrices(self):
        # rows equal to ideal prefixes -> all three omegas exactly 1
        rng = make_rng(42, "fixed-point")
        for trial in range(100):
            T = int(rng.integers(2, 6))
            schedule = tuple(rng.permutation(np.arange(1, 6))[:T])
            ideals = [float(rng.uniform(0.2, 1.0)) for _ in range(T)]
            rows = [ideals[: i + 1] for i in range(T)]
            m = matrix_from_rows(schedule, rows)
            ideal = ideal_for(schedule, ideals)
            scores = compute_omegas(m, ideal)
            assert scores.omega_base == pytest.approx(1.0, abs=1e-9)
            assert scores.omega_new == pytest.approx(1.0, abs=1e-9)
            assert scores.omega_all == pytest.approx(1.0, abs=1e-9)

    def test_ratio_homogeneity_on_100_matrices(self):
        rng = make_rng(43, "homogeneity")
        for trial in range(100):
            T = int(rng.integers(2, 6))
            m, ideal = self.random_case(rng, T)
            c = float(rng.uniform(0.1, 1.0))
            m2 = matrix_from_rows(m.schedule, [[v * c for v in row] for row in m.rows])
            ideal2 = IdealScores(
                per_class={k: v * c for k, v in ideal.per_class.items()}, model=ideal.model
            )
            a = compute_omegas(m, ideal)
            b = compute_omegas(m2, ideal2)
            assert b.omega_base == pytest.approx(a.omega_base, rel=1e-9)
            assert b.omega_new == pytest.approx(a.omega_new, rel=1e-9)
            assert b.omega_all == pytest.approx(a.omega_all, rel=1e-9)

    def test_single_task_matrix_rejected(self):
        m = matrix_from_rows((1,), [[0.9]])
        with pytest.raises(ContractError):
            omega_base(m, ideal_for((1,), [0.9]))

    def test_zero_ideal_degenerate(self):
        m = matrix_from_rows((1, 2), [[0.5], [0.5, 0.5]])
        with pytest.raises(DegenerateIdealError):
            omega_base(m, ideal_for((1, 2), [0.0, 0.9]))


class TestMatrixIO:
    def test_csv_round_trip_lossless(self, tmp_path):
        rng = make_rng(1, "csv")
        rows = [[float(rng.uniform()) for _ in range(i + 1)] for i in range(5)]
        m = matrix_from_rows((3, 1, 5, 2, 4), rows)
        path = tmp_path / "matrix.csv"
        m.to_csv(path)
        back = AccuracyMatrix.from_csv(path)
        assert back.schedule == m.schedule
        assert back.rows == m.rows  # repr round-trip keeps every bit

    def test_csv_header(self, tmp_path):
        m = matrix_from_rows((1, 2), [[0.5], [0.5, 0.5]])
        path = tmp_path / "matrix.csv"
        m.to_csv(path)
        assert path.read_text().splitlines()[0] == "step,class,dice"

    def test_entry_count_lower_triangle(self, tmp_path):
        rows = [[0.1 * (j + 1) for j in range(i + 1)] for i in range(5)]
        m = matrix_from_rows((1, 2, 3, 4, 5), rows)
        path = tmp_path / "matrix.csv"
        m.to_csv(path)
        assert len(path.read_text().strip().splitlines()) == 1 + 15

    def test_malformed_csv_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("step,class,dice\n1,1,not-a-number\n")
        with pytest.raises(CorruptionError):
            AccuracyMatrix.from_csv(path)

    def test_out_of_range_value_rejected(self):
        m = matrix_from_rows((1, 2), [[0.5], [0.5, 1.5]])
        with pytest.raises(Exception):
            m.validate()


class TestIdealIO:
    def test_json_round_trip(self, tmp_path):
        ideal = IdealScores(per_class={1: 0.9, 2: 0.8, 3: 0.85, 4: 0.7, 5: 0.2}, model="unet")
        path = tmp_path / "ideal_scores.json"
        ideal.to_json(path, config_echo={"seed": 0})
        back = IdealScores.from_json(path)
        assert back.per_class == ideal.per_class
        assert back.model == "unet"

    def test_running_means(self):
        ideal = IdealScores(per_class={1: 0.8, 2: 0.6, 3: 1.0}, model="unet")
        sched = (1, 2, 3)
        assert ideal.running_mean(sched, 1) == pytest.approx(0.8)
        assert ideal.running_mean(sched, 2) == pytest.approx(0.7)
        assert ideal.running_mean(sched, 3) == pytest.approx(0.8)


class TestOmegaJson:
    def test_written_fields(self, tmp_path):
        m = matrix_from_rows((1, 2), [[0.8], [0.4, 0.6]])
        ideal = ideal_for((1, 2), [0.8, 0.6])
        scores = compute_omegas(m, ideal)
        path = tmp_path / "omega.json"
        write_omega_json(path, scores, m, ideal, {"method": "ft"})
        import json

        doc = json.loads(path.read_text())
        assert doc["omega_all"] == pytest.approx(0.5 / 0.7, abs=1e-9)
        assert doc["config"]["method"] == "ft"

    def test_recompute_from_persisted_matrix_is_exact(self, tmp_path):
        rng = make_rng(2, "recompute")
        rows = [[float(rng.uniform(0.1, 1.0)) for _ in range(i + 1)] for i in range(4)]
        m = matrix_from_rows((2, 4, 1, 3), rows)
        ideal = ideal_for((2, 4, 1, 3), [0.9, 0.8, 0.7, 0.6])
        before = compute_omegas(m, ideal)
        path = tmp_path / "matrix.csv"
        m.to_csv(path)
        after = compute_omegas(AccuracyMatrix.from_csv(path), ideal)
        assert after == OmegaScores(
            omega_base=before.omega_base,
            omega_new=before.omega_new,
            omega_all=before.omega_all,
            overall_dice=before.overall_dice,
        )
