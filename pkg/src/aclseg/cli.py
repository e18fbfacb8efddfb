"""Command line front end.

Subcommands: datagen, train, eval, report, gradcheck.  Exit codes are
part of the contract: 0 success, 1 runtime failure, 2 refusal (bad
config, or an output that exists and --force was not given), 3 missing
prerequisite (dataset, ideal reference, or run artifacts not found).

Heavy imports happen inside the handlers: when ACLSEG_DETERMINISTIC=1
we pin the BLAS thread pools before numpy is first loaded, which is
what makes repeated runs byte-identical on the same machine.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class _MissingPrerequisite(Exception):
    pass


def deterministic_requested() -> bool:
    return os.environ.get("ACLSEG_DETERMINISTIC", "") == "1"


def _apply_determinism() -> None:
    # Must run before numpy's first import anywhere in this process.
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def _parse_size(text: str) -> tuple[int, int]:
    from .errors import ConfigError

    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"--size expects HxW, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_order(text: str):
    from .data import SCHEDULE_PRESETS
    from .errors import ConfigError

    if text.upper() in SCHEDULE_PRESETS:
        return SCHEDULE_PRESETS[text.upper()]
    try:
        ids = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"--order expects A, B, C or a comma list of class ids, got {text!r}") from None
    if len(set(ids)) != len(ids):
        raise ConfigError(f"--order contains duplicate class ids: {text}")
    return ids


def _load_train_config(args):
    """Defaults, overridden by --config file fields, overridden by flags."""
    from .errors import ConfigError
    from .trainer import TrainConfig

    fields: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise _MissingPrerequisite(f"config file not found: {path}")
        try:
            fields = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for flag in ("seed", "batch_size", "max_epochs", "lr0", "lwf_mu"):
        value = getattr(args, flag, None)
        if value is not None:
            fields[flag] = value
    if deterministic_requested():
        fields["deterministic"] = True
    base = TrainConfig().as_dict()
    base.update(fields)
    return TrainConfig.from_dict(base)


def _load_dataset(path_text: str):
    path = Path(path_text)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise _MissingPrerequisite(
            f"dataset manifest not found: {path} (run `aclseg datagen` first)"
        )
    from .data import load_dataset

    return load_dataset(path)


def _load_ideal(path_text: str, what: str = "--ideal"):
    path = Path(path_text)
    if path.is_dir():
        path = path / "ideal_scores.json"
    if not path.exists():
        raise _MissingPrerequisite(
            f"ideal reference not found: {path} "
            f"(train it with `aclseg train --method joint` and pass the ideal_scores.json via {what})"
        )
    from .metrics import IdealScores

    return IdealScores.from_json(path)


def _cmd_datagen(args) -> int:
    from .data import generate_benchmark

    size = _parse_size(args.size)
    manifest = generate_benchmark(
        seed=args.seed,
        n_train_per_class=args.train_per_class,
        n_val=args.val,
        n_test=args.test,
        size=size,
        out_dir=args.out,
        force=args.force,
    )
    n = len(manifest.sample_indices())
    print(f"wrote {n} samples ({size[0]}x{size[1]}) to {args.out}")
    return 0


def _prepare_out(out: str, force: bool) -> Path:
    from .errors import ConfigError

    out_dir = Path(out)
    if (out_dir / "run.json").exists() or (out_dir / "ideal_scores.json").exists():
        if not force:
            raise ConfigError(f"output {out_dir} already holds a run; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _cmd_train(args) -> int:
    dataset = _load_dataset(args.dataset)
    cfg = _load_train_config(args)
    out_dir = _prepare_out(args.out, args.force)

    if args.method == "joint":
        return _train_joint(args, dataset, cfg, out_dir)

    ideal = _load_ideal(args.ideal) if args.ideal else None
    schedule = _parse_order(args.order)
    from .trainer import run_sequence

    seeds = [cfg.seed + i for i in range(args.repeats)]
    records = []
    for seed in seeds:
        run_cfg = _replace_seed(cfg, seed)
        run_out = out_dir if args.repeats == 1 else out_dir / f"seed_{seed}"
        record = run_sequence(
            args.method, schedule, dataset, run_cfg, run_out,
            variant=args.variant, ideal=ideal,
        )
        records.append(record)
        final = record.matrix.rows[-1]
        print(f"[seed {seed}] final dice per class: " + " ".join(f"{v:.3f}" for v in final))
    if args.repeats > 1:
        _write_aggregate(out_dir, records, ideal)
    if ideal is not None:
        from .metrics import compute_omegas

        for seed, record in zip(seeds, records):
            o = compute_omegas(record.matrix, ideal)
            print(
                f"[seed {seed}] omega_base={o.omega_base:.3f} omega_new={o.omega_new:.3f} "
                f"omega_all={o.omega_all:.3f} overall_dice={o.overall_dice:.3f}"
            )
    return 0


def _replace_seed(cfg, seed: int):
    from .trainer import TrainConfig

    fields = cfg.as_dict()
    fields["seed"] = seed
    return TrainConfig.from_dict(fields)


def _write_aggregate(out_dir: Path, records, ideal) -> None:
    import numpy as np

    from .metrics import compute_omegas

    payload: dict = {"runs": [str(r.out_dir) for r in records]}
    if ideal is not None:
        scores = [compute_omegas(r.matrix, ideal) for r in records]
        for key in ("omega_base", "omega_new", "omega_all", "overall_dice"):
            values = np.array([getattr(s, key) for s in scores])
            payload[key] = {"mean": float(values.mean()), "std": float(values.std())}
    else:
        finals = np.array([np.mean(r.matrix.rows[-1]) for r in records])
        payload["overall_dice"] = {"mean": float(finals.mean()), "std": float(finals.std())}
    (out_dir / "aggregate.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _train_joint(args, dataset, cfg, out_dir: Path) -> int:
    from .checkpoint import save_model
    from .trainer import train_joint

    model, ideal = train_joint(dataset, cfg, arch=args.arch)
    ideal.to_json(out_dir / "ideal_scores.json", config_echo={"arch": args.arch, "seed": cfg.seed})
    save_model(model, out_dir / "checkpoint")
    print(f"ideal per-class dice: " + " ".join(
        f"{cid}:{ideal.per_class[cid]:.3f}" for cid in sorted(ideal.per_class)
    ))
    print(f"wrote {out_dir / 'ideal_scores.json'}")
    return 0


def _cmd_eval(args) -> int:
    run_dir = Path(args.run)
    matrix_path = run_dir / "matrix.csv"
    if not matrix_path.exists():
        raise _MissingPrerequisite(f"no matrix.csv under {run_dir}; train a run first")
    ideal = _load_ideal(args.ideal)
    from .metrics import AccuracyMatrix, compute_omegas, write_omega_json

    matrix = AccuracyMatrix.from_csv(matrix_path)
    scores = compute_omegas(matrix, ideal)
    out_path = Path(args.out) if args.out else run_dir / "omega.json"
    config_echo = {}
    config_path = run_dir / "config.json"
    if config_path.exists():
        stored = json.loads(config_path.read_text())
        config_echo = {k: stored.get(k) for k in ("method", "variant") if k in stored}
    write_omega_json(out_path, scores, matrix, ideal, config_echo)
    print(
        f"omega_base={scores.omega_base:.4f} omega_new={scores.omega_new:.4f} "
        f"omega_all={scores.omega_all:.4f} overall_dice={scores.overall_dice:.4f}"
    )
    print(f"wrote {out_path}")
    return 0


def _cmd_report(args) -> int:
    for run in args.runs:
        if not (Path(run) / "matrix.csv").exists():
            raise _MissingPrerequisite(f"no matrix.csv under {run}")
    ideal = _load_ideal(args.ideal)
    aclseg_ideal = _load_ideal(args.aclseg_ideal, "--aclseg-ideal") if args.aclseg_ideal else None
    from .reporting import write_report

    out_dir = write_report(args.out, args.runs, ideal, aclseg_ideal)
    table = (out_dir / "omega_table.csv").read_text()
    sys.stdout.write(table)
    print(f"wrote {out_dir / 'omega_table.csv'} and {out_dir / 'dice_curves.svg'}")
    return 0


def _cmd_gradcheck(args) -> int:
    import time

    from .gradcheck import run_suite, summarize

    ops = args.ops.split(",") if args.ops else None
    start = time.monotonic()
    results = run_suite(ops=ops, instances=args.instances, tol=args.tol, seed=args.seed)
    elapsed = time.monotonic() - start
    failed_ops = {r.op for r in results if not r.passed}
    failed = []
    for op, err in sorted(summarize(results).items()):
        mark = "FAIL" if op in failed_ops else "ok "
        print(f"{mark} {op:<28s} max rel err {err:.3e}")
        if op in failed_ops:
            failed.append(op)
    print(f"{len(results)} checks in {elapsed:.1f}s")
    if failed:
        print("failing ops: " + ", ".join(failed))
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aclseg",
        description="Continual segmentation laboratory on a synthetic thoracic benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="synthesize the benchmark dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--train-per-class", type=int, default=40)
    p.add_argument("--val", type=int, default=16)
    p.add_argument("--test", type=int, default=48)
    p.add_argument("--size", default="128x128", help="HxW, each divisible by 16")
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    p.set_defaults(handler=_cmd_datagen)

    p = sub.add_parser("train", help="train a continual sequence or a joint ideal model")
    p.add_argument("--dataset", required=True, help="dataset directory or manifest.json")
    p.add_argument("--method", required=True, choices=("aclseg", "ft", "lwf", "joint"))
    p.add_argument("--order", default="A", help="A, B, C, or e.g. 4,2,1,3,5")
    p.add_argument("--variant", default="full", choices=("basic_enc", "aspp_ps", "full"))
    p.add_argument("--arch", default="unet", choices=("unet", "aclseg"),
                   help="architecture for --method joint")
    p.add_argument("--config", help="JSON file of training fields; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--max-epochs", type=int, default=None, dest="max_epochs")
    p.add_argument("--lr0", type=float, default=None)
    p.add_argument("--lwf-mu", type=float, default=None, dest="lwf_mu")
    p.add_argument("--repeats", type=int, default=1, help="run this many seeds (seed, seed+1, ...)")
    p.add_argument("--ideal", help="ideal_scores.json for omega scoring of the finished run")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing run")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="recompute omega scores for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--ideal", required=True)
    p.add_argument("--out", help="omega.json path (default: inside the run)")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("report", help="summary table and dice curves across runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--ideal", required=True, help="joint ideal_scores.json reference")
    p.add_argument("--aclseg-ideal", dest="aclseg_ideal",
                   help="separate ideal_scores.json for scoring aclseg runs")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--ops", help="comma list to restrict which ops run")
    p.add_argument("--instances", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    if deterministic_requested():
        _apply_determinism()
    parser = build_parser()
    args = parser.parse_args(argv)

    from .errors import AclsegError, ConfigError

    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except _MissingPrerequisite as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return 3
    except AclsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
