"""Aggregate reporting: the omega summary table (mean(std) cells, one
row per method) and a dependency-free SVG line chart of per-class test
Dice against the number of tasks learned, with dashed horizontals at the
ideal scores.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CorruptionError
from .metrics import CLASS_NAMES, AccuracyMatrix, IdealScores, OmegaScores, compute_omegas

_CLASS_COLORS = {
    1: "#d62728",  # cord
    2: "#1f77b4",  # right lung
    3: "#17becf",  # left lung
    4: "#9467bd",  # heart
    5: "#ff7f0e",  # oesophagus
}
_METHOD_DASH = {"aclseg": "", "lwf": "7,4", "ft": "2,3"}


def format_cell(values) -> str:
    """Paper-style table cell: mean(std), three decimals each.

    Population std, so a single run reads 0.000.
    """
    arr = np.asarray(list(values), dtype=np.float64)
    return f"{arr.mean():.3f}({arr.std():.3f})"


def load_run(run_dir) -> tuple[str, str, AccuracyMatrix]:
    """Read back (method, variant, matrix) from a run directory."""
    run_dir = Path(run_dir)
    try:
        config = json.loads((run_dir / "config.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"cannot read run config in {run_dir}: {exc}") from exc
    matrix = AccuracyMatrix.from_csv(run_dir / "matrix.csv")
    return config.get("method", "unknown"), config.get("variant", "full"), matrix


def method_label(method: str, variant: str) -> str:
    if method == "aclseg" and variant != "full":
        return f"aclseg:{variant}"
    return method


def omega_table(groups: dict[str, list[OmegaScores]]) -> str:
    """CSV text: one row per method label, each cell mean(std) over runs."""
    lines = ["method,omega_base,omega_new,omega_all,overall_dice"]
    for label in sorted(groups):
        scores = groups[label]
        lines.append(
            ",".join(
                [
                    label,
                    format_cell(s.omega_base for s in scores),
                    format_cell(s.omega_new for s in scores),
                    format_cell(s.omega_all for s in scores),
                    format_cell(s.overall_dice for s in scores),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _mean_matrices(matrices: list[AccuracyMatrix]) -> AccuracyMatrix:
    first = matrices[0]
    for m in matrices[1:]:
        if m.schedule != first.schedule:
            raise CorruptionError(f"cannot average runs with schedules {m.schedule} and {first.schedule}")
    rows = [
        [float(np.mean([m.rows[i][j] for m in matrices])) for j in range(i + 1)]
        for i in range(first.T)
    ]
    return AccuracyMatrix(schedule=first.schedule, rows=rows)


def dice_curves_svg(matrices_by_method: dict[str, list[AccuracyMatrix]], ideal: IdealScores) -> str:
    """One polyline per (method, learned class); dashed ideal horizontals."""
    width, height = 760, 480
    left, right, top, bottom = 64, 210, 28, 48
    plot_w, plot_h = width - left - right, height - top - bottom
    t_max = max(m.T for runs in matrices_by_method.values() for m in runs)

    def sx(step: float) -> float:
        return left + (step - 1) / max(t_max - 1, 1) * plot_w

    def sy(v: float) -> float:
        return top + (1.0 - v) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#888"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{tick:.2f}</text>')
    for step in range(1, t_max + 1):
        x = sx(step)
        parts.append(f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" stroke="#888"/>')
        parts.append(f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle">{step}</text>')
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" text-anchor="middle">classes learned</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">test Dice</text>'
    )

    for cid, value in sorted(ideal.per_class.items()):
        y = sy(value)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            f'stroke="{_CLASS_COLORS[cid]}" stroke-dasharray="3,5" stroke-opacity="0.55"/>'
        )

    for method in sorted(matrices_by_method):
        mean = _mean_matrices(matrices_by_method[method])
        dash = _METHOD_DASH.get(method.split(":")[0], "5,5")
        for pos, cid in enumerate(mean.schedule, start=1):
            points = " ".join(
                f"{sx(i):.1f},{sy(mean.rows[i - 1][pos - 1]):.1f}" for i in range(pos, mean.T + 1)
            )
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(
                f'<polyline fill="none" stroke="{_CLASS_COLORS[cid]}" stroke-width="1.8"{dash_attr} '
                f'points="{points}"/>'
            )

    legend_x = left + plot_w + 14
    y = top + 6
    parts.append(f'<text x="{legend_x}" y="{y}" font-weight="bold">classes</text>')
    for cid in sorted(_CLASS_COLORS):
        y += 17
        parts.append(
            f'<line x1="{legend_x}" y1="{y - 4}" x2="{legend_x + 24}" y2="{y - 4}" '
            f'stroke="{_CLASS_COLORS[cid]}" stroke-width="3"/>'
        )
        parts.append(f'<text x="{legend_x + 30}" y="{y}">{CLASS_NAMES[cid]}</text>')
    y += 26
    parts.append(f'<text x="{legend_x}" y="{y}" font-weight="bold">methods</text>')
    for method in sorted(matrices_by_method):
        y += 17
        dash = _METHOD_DASH.get(method.split(":")[0], "5,5")
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(
            f'<line x1="{legend_x}" y1="{y - 4}" x2="{legend_x + 24}" y2="{y - 4}" stroke="#333" '
            f'stroke-width="2"{dash_attr}/>'
        )
        parts.append(f'<text x="{legend_x + 30}" y="{y}">{method}</text>')
    y += 17
    parts.append(
        f'<line x1="{legend_x}" y1="{y - 4}" x2="{legend_x + 24}" y2="{y - 4}" stroke="#666" '
        f'stroke-dasharray="3,5"/>'
    )
    parts.append(f'<text x="{legend_x + 30}" y="{y}">ideal (joint)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(out_dir, run_dirs, ideal: IdealScores, aclseg_ideal: IdealScores | None = None) -> Path:
    """Score each run against the right ideal reference (ACLSeg runs use
    aclseg_ideal when provided) and emit omega_table.csv + dice_curves.svg."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[OmegaScores]] = {}
    matrices: dict[str, list[AccuracyMatrix]] = {}
    for run_dir in run_dirs:
        method, variant, matrix = load_run(run_dir)
        label = method_label(method, variant)
        ref = aclseg_ideal if (method == "aclseg" and aclseg_ideal is not None) else ideal
        groups.setdefault(label, []).append(compute_omegas(matrix, ref))
        matrices.setdefault(label, []).append(matrix)
    (out_dir / "omega_table.csv").write_text(omega_table(groups))
    (out_dir / "dice_curves.svg").write_text(dice_curves_svg(matrices, ideal))
    return out_dir
