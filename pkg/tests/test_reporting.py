import json

import pytest

from aclseg.errors import CorruptionError
from aclseg.metrics import AccuracyMatrix, IdealScores, OmegaScores, compute_omegas
from aclseg.reporting import (
    dice_curves_svg,
    format_cell,
    load_run,
    method_label,
    omega_table,
    write_report,
)


def full_matrix(scale=1.0, schedule=(1, 2, 3, 4, 5)):
    rows = [[round(scale * (0.9 - 0.05 * (i - j)), 6) for j in range(i + 1)] for i in range(5)]
    return AccuracyMatrix(schedule=schedule, rows=rows)


def flat_ideal(value=0.9, model="unet"):
    return IdealScores(per_class={c: value for c in range(1, 6)}, model=model)


class TestFormatCell:
    def test_single_value_reads_zero_std(self):
        assert format_cell([0.5]) == "0.500(0.000)"

    def test_mean_and_population_std(self):
        # population std of {0.4, 0.6} is 0.1, not the sample 0.1414
        assert format_cell([0.4, 0.6]) == "0.500(0.100)"

    def test_rounding(self):
        assert format_cell([1 / 3, 1 / 3]) == "0.333(0.000)"


class TestOmegaTable:
    def test_header_and_sorted_methods(self):
        s = OmegaScores(omega_base=0.5, omega_new=0.9, omega_all=0.7, overall_dice=0.6)
        text = omega_table({"lwf": [s], "aclseg": [s, s]})
        lines = text.strip().split("\n")
        assert lines[0] == "method,omega_base,omega_new,omega_all,overall_dice"
        assert [l.split(",")[0] for l in lines[1:]] == ["aclseg", "lwf"]
        assert lines[1].split(",")[1] == "0.500(0.000)"

    def test_cells_aggregate_across_runs(self):
        a = OmegaScores(omega_base=0.4, omega_new=0.8, omega_all=0.6, overall_dice=0.5)
        b = OmegaScores(omega_base=0.6, omega_new=0.8, omega_all=0.8, overall_dice=0.7)
        row = omega_table({"ft": [a, b]}).strip().split("\n")[1].split(",")
        assert row == ["ft", "0.500(0.100)", "0.800(0.000)", "0.700(0.100)", "0.600(0.100)"]


class TestMethodLabel:
    def test_full_aclseg_stays_bare(self):
        assert method_label("aclseg", "full") == "aclseg"

    def test_variant_is_suffixed(self):
        assert method_label("aclseg", "basic_enc") == "aclseg:basic_enc"

    def test_unet_methods_ignore_variant(self):
        assert method_label("ft", "full") == "ft"


class TestDiceCurvesSvg:
    def test_polyline_per_method_and_class(self):
        svg = dice_curves_svg({"ft": [full_matrix()], "aclseg": [full_matrix(0.99)]}, flat_ideal())
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 10  # 2 methods x 5 learned classes
        for name in ("cord", "right_lung", "left_lung", "heart", "oesophagus"):
            assert name in svg

    def test_ideal_horizontals_present(self):
        svg = dice_curves_svg({"ft": [full_matrix()]}, flat_ideal())
        # five per-class dashed horizontals plus the one legend sample
        assert svg.count('stroke-dasharray="3,5"') == 6

    def test_runs_average_into_one_curve_set(self):
        svg = dice_curves_svg({"ft": [full_matrix(), full_matrix(0.9)]}, flat_ideal())
        assert svg.count("<polyline") == 5

    def test_mismatched_schedules_refused(self):
        runs = [full_matrix(), full_matrix(schedule=(5, 4, 3, 2, 1))]
        with pytest.raises(CorruptionError):
            dice_curves_svg({"ft": runs}, flat_ideal())


def fake_run(tmp_path, name, method, variant="full", scale=1.0):
    run = tmp_path / name
    run.mkdir()
    (run / "config.json").write_text(json.dumps({"method": method, "variant": variant}))
    full_matrix(scale).to_csv(run / "matrix.csv")
    return run


class TestLoadRun:
    def test_round_trip(self, tmp_path):
        run = fake_run(tmp_path, "r1", "lwf")
        method, variant, matrix = load_run(run)
        assert (method, variant) == ("lwf", "full")
        assert matrix.schedule == (1, 2, 3, 4, 5)

    def test_garbled_config_raises(self, tmp_path):
        run = fake_run(tmp_path, "r2", "ft")
        (run / "config.json").write_text("{not json")
        with pytest.raises(CorruptionError):
            load_run(run)


class TestWriteReport:
    def test_emits_table_and_chart(self, tmp_path):
        runs = [
            fake_run(tmp_path, "ft_0", "ft", scale=0.7),
            fake_run(tmp_path, "ft_1", "ft", scale=0.72),
            fake_run(tmp_path, "acl_0", "aclseg"),
        ]
        out = write_report(tmp_path / "report", runs, flat_ideal())
        table = (out / "omega_table.csv").read_text()
        assert [l.split(",")[0] for l in table.strip().split("\n")] == ["method", "aclseg", "ft"]
        assert (out / "dice_curves.svg").read_text().count("<polyline") == 10

    def test_aclseg_scored_against_its_own_ideal(self, tmp_path):
        runs = [fake_run(tmp_path, "acl", "aclseg"), fake_run(tmp_path, "ft", "ft")]
        shared = flat_ideal(0.9)
        theirs = flat_ideal(0.45, model="aclseg")
        out = write_report(tmp_path / "rep", runs, shared, aclseg_ideal=theirs)
        rows = {l.split(",")[0]: l.split(",") for l in (out / "omega_table.csv").read_text().strip().split("\n")[1:]}
        # same matrices, but the aclseg normalizer is half as large
        matrix = full_matrix()
        expect_acl = compute_omegas(matrix, theirs)
        expect_ft = compute_omegas(matrix, shared)
        assert rows["aclseg"][3] == format_cell([expect_acl.omega_all])
        assert rows["ft"][3] == format_cell([expect_ft.omega_all])
        assert rows["aclseg"][3] != rows["ft"][3]

    def test_variant_label_split(self, tmp_path):
        runs = [
            fake_run(tmp_path, "full", "aclseg", variant="full"),
            fake_run(tmp_path, "basic", "aclseg", variant="basic_enc"),
        ]
        out = write_report(tmp_path / "rep2", runs, flat_ideal())
        table = (out / "omega_table.csv").read_text()
        labels = [l.split(",")[0] for l in table.strip().split("\n")[1:]]
        assert labels == ["aclseg", "aclseg:basic_enc"]
