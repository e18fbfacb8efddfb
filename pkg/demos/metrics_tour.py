"""What the retention scores measure, on two hand-built extremes: a
learner that keeps everything and one that forgets a task the moment
the next one starts.

Omega scores divide observed Dice by what joint (all classes at once)
training reaches, so 1.0 reads "as good as never having learned
incrementally at all".

Run:  python3 demos/metrics_tour.py
"""

from aclseg.metrics import AccuracyMatrix, IdealScores, compute_omegas
from aclseg.reporting import omega_table

IDEAL = IdealScores(per_class={1: 0.92, 2: 0.95, 3: 0.94, 4: 0.90, 5: 0.45})


def perfect_retention():
    # every class stays at 95% of its ideal once learned
    rows = [[0.95 * IDEAL.per_class[c] for c in range(1, i + 2)] for i in range(5)]
    return AccuracyMatrix(schedule=(1, 2, 3, 4, 5), rows=rows)


def instant_forgetting():
    # the newest class is learned well, every older one collapses
    rows = []
    for i in range(5):
        row = [0.02] * i + [0.95 * IDEAL.per_class[i + 1]]
        rows.append(row)
    return AccuracyMatrix(schedule=(1, 2, 3, 4, 5), rows=rows)


def main():
    for name, matrix in (("keeps everything", perfect_retention()),
                         ("forgets instantly", instant_forgetting())):
        scores = compute_omegas(matrix, IDEAL)
        print(f"-- learner that {name}")
        for i, row in enumerate(matrix.rows, start=1):
            print("   after task", i, " ".join(f"{v:.2f}" for v in row))
        print(f"   omega_base={scores.omega_base:.3f} omega_new={scores.omega_new:.3f} "
              f"omega_all={scores.omega_all:.3f} overall_dice={scores.overall_dice:.3f}\n")

    groups = {
        "keeps": [compute_omegas(perfect_retention(), IDEAL)],
        "forgets": [compute_omegas(instant_forgetting(), IDEAL)],
    }
    print("as a summary table (mean(std) across runs):")
    print(omega_table(groups))


if __name__ == "__main__":
    main()
