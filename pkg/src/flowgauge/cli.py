"""Command-line surface: audit, split, eval, tune, report.

All outputs are UTF-8; numeric report tables print as percentages with two
decimals. Timestamps only ever appear inside a ``meta`` block so reruns
with identical inputs produce byte-identical payloads elsewhere.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import DataError, UsageError
from .features import ScalingConfig, default_config, featurize_flows
from .ingest import FileFormat, load_dataset
from .knn import NeighborIndex, VotingConfig, evaluate
from .metrics import gap, max_achievable_accuracy, mean_std, minimal_fpr, spearman
from .model import Dataset, KeyVariant
from .redundancy import (
    cluster_duplicates,
    ecdf_by_length,
    ecdf_csv,
    heatmap_by_length,
    heatmap_csv,
    redundancy_fraction,
)
from .splits import (
    Partition,
    RepeatedSplits,
    SplitStrategy,
    disjoint_key_split,
    fixed_split,
    random_split,
    read_plan_csv,
    repeat,
    time_split,
    write_plan_csv,
)
from .tuning import SearchSpace, read_trial_log, tune


def _meta() -> dict:
    return {
        "tool": "flowgauge",
        "version": __version__,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _parse_format(value: str | None) -> FileFormat | None:
    if value is None or value == "auto":
        return None
    try:
        return FileFormat(value)
    except ValueError:
        raise UsageError(f"unknown format {value!r} (expected csv or jsonl)")


def _load(args) -> tuple[Dataset, object]:
    return load_dataset(args.input, _parse_format(getattr(args, "format", None)))


def _parse_fracs(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated fractions, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise UsageError(f"non-numeric fraction in {text!r}")


def _parse_mode(text: str) -> VotingConfig | None:
    if text == "top1":
        return None
    if text.startswith("vote:"):
        try:
            return VotingConfig(t_maj=float(text[len("vote:") :]))
        except ValueError:
            raise UsageError(f"bad vote threshold in {text!r}")
    raise UsageError(f"unknown mode {text!r} (expected top1 or vote:<t>)")


def _parse_config(spec: str) -> ScalingConfig:
    if spec == "default":
        return default_config()
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"config file {spec!r} does not exist")
    if path.suffix == ".jsonl":
        trials = read_trial_log(path)
        if not trials:
            raise DataError(f"{spec}: empty trial log")
        best = max(trials, key=lambda t: t.mean_val_accuracy)
        return best.cfg
    return ScalingConfig.from_json(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def cmd_audit(args) -> int:
    ds, ingest_report = _load(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    benign = (
        [s for s in args.benign_labels.split(",") if s]
        if args.benign_labels
        else None
    )

    variants: dict[str, dict] = {}
    for variant in (KeyVariant.SIZES_DIRS, KeyVariant.SIZES_DIRS_IPTS):
        report = cluster_duplicates(ds, variant)
        entry = {
            "report": report.to_json_dict(),
            "unique_fraction": redundancy_fraction(report),
            "max_achievable_accuracy": max_achievable_accuracy(report),
        }
        if benign is not None:
            entry["minimal_fpr"] = minimal_fpr(report, benign)
        variants[str(variant)] = entry
        if variant is KeyVariant.SIZES_DIRS:
            curves = ecdf_by_length(report, ds)
            (out_dir / "ecdf_all.csv").write_text(
                ecdf_csv(curves.all_samples), encoding="utf-8"
            )
            (out_dir / "ecdf_same_class.csv").write_text(
                ecdf_csv(curves.same_class_dups), encoding="utf-8"
            )
            (out_dir / "ecdf_mixed.csv").write_text(
                ecdf_csv(curves.mixed_dups), encoding="utf-8"
            )
            (out_dir / "heatmap.csv").write_text(
                heatmap_csv(heatmap_by_length(report, ds)), encoding="utf-8"
            )

    headline = variants[str(KeyVariant.SIZES_DIRS)]
    bundle = {
        "kind": "audit",
        "dataset": ds.name,
        "ingest": ingest_report.to_json_dict(),
        "variants": variants,
        "max_achievable_accuracy": headline["max_achievable_accuracy"],
        "unique_fraction": headline["unique_fraction"],
        "meta": _meta(),
    }
    if benign is not None:
        bundle["minimal_fpr"] = headline["minimal_fpr"]
    _write_json(out_dir / "audit.json", bundle)
    print(
        f"{ds.name}: {len(ds)} flows, unique fraction "
        f"{100 * headline['unique_fraction']:.2f}%, max achievable accuracy "
        f"{100 * headline['max_achievable_accuracy']:.2f}%"
    )
    if benign is not None:
        print(f"{ds.name}: minimal FPR {100 * headline['minimal_fpr']:.2f}%")
    return 0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def _build_plans(args, ds: Dataset) -> RepeatedSplits:
    strategy = args.strategy
    if strategy == "random":
        fracs = _parse_fracs(args.fracs)
        return repeat(lambda s: random_split(ds, fracs, s), args.reps, args.seed)
    if strategy == "disjoint":
        fracs = _parse_fracs(args.fracs)
        key_of = (lambda f: f.dst_key) if args.key == "dst" else (lambda f: f.src_key)
        return repeat(
            lambda s: disjoint_key_split(ds, key_of, fracs, s), args.reps, args.seed
        )
    if args.reps != 1:
        raise UsageError(f"--reps > 1 requires a seeded strategy, not {strategy!r}")
    if strategy == "time":
        if not args.boundaries:
            raise UsageError("time strategy requires --boundaries t0,t1,t2")
        parts = args.boundaries.split(",")
        if len(parts) != 3:
            raise UsageError("expected --boundaries t_train_end,t_test_start,t_test_end")
        try:
            bounds = tuple(int(p) for p in parts)
        except ValueError:
            raise UsageError(f"non-integer boundary in {args.boundaries!r}")
        plan = time_split(ds, bounds, val_frac=args.val_frac)
        return RepeatedSplits(plans=(plan,))
    if strategy == "fixed":
        if not args.fixed_file:
            raise UsageError("fixed strategy requires --fixed-file")
        return RepeatedSplits(plans=(fixed_split(ds, args.fixed_file),))
    raise UsageError(f"unknown strategy {strategy!r}")


def _verify_plan(plan, ds: Dataset, key_attr: str) -> None:
    if plan.strategy is SplitStrategy.TIME:
        by_part: dict[Partition, list[int]] = {p: [] for p in Partition}
        for f in ds.flows:
            part = plan.assignment.get(f.id)
            if part is not None:
                by_part[part].append(f.ts_ms)
        train_ts = by_part[Partition.TRAIN] + by_part[Partition.VAL]
        if train_ts and by_part[Partition.TEST]:
            assert max(train_ts) < min(by_part[Partition.TEST]), "time overlap"
    if plan.strategy is SplitStrategy.DISJOINT_KEY:
        keys: dict[Partition, set[str]] = {p: set() for p in Partition}
        for f in ds.flows:
            part = plan.assignment.get(f.id)
            if part is not None:
                keys[part].add(getattr(f, key_attr))
        for a in Partition:
            for b in Partition:
                if a is not b:
                    assert not (keys[a] & keys[b]), f"key overlap {a}/{b}"


def cmd_split(args) -> int:
    ds, _ = _load(args)
    plans = _build_plans(args, ds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_plans = []
    for k, plan in enumerate(plans.plans):
        path = out_dir / f"plan_{k:03d}.csv"
        write_plan_csv(plan, path)
        if args.verify:
            _verify_plan(plan, ds, "dst_key" if args.key == "dst" else "src_key")
        counts = plan.counts()
        summary_plans.append(
            {
                "file": path.name,
                "seed": plan.seed,
                "counts": {p.value: counts[p] for p in Partition},
                "n_excluded": len(plan.excluded),
                "params": plan.params,
            }
        )
        print(
            f"{path.name}: train={counts[Partition.TRAIN]} "
            f"val={counts[Partition.VAL]} test={counts[Partition.TEST]} "
            f"excluded={len(plan.excluded)}"
        )
    _write_json(
        out_dir / "split_summary.json",
        {
            "kind": "split",
            "dataset": ds.name,
            "strategy": args.strategy,
            "plans": summary_plans,
            "meta": _meta(),
        },
    )
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _plan_matrices(ds: Dataset, plan, matrix, labels, row_of):
    for fid in plan.assignment:
        if fid not in row_of:
            raise DataError(f"plan references unknown flow id {fid!r}")
    train_rows = [row_of[fid] for fid, p in plan.assignment.items() if p is Partition.TRAIN]
    test_rows = [row_of[fid] for fid, p in plan.assignment.items() if p is Partition.TEST]
    return train_rows, test_rows


def cmd_eval(args) -> int:
    ds, _ = _load(args)
    cfg = _parse_config(args.config)
    voting = _parse_mode(args.mode)
    plans = [read_plan_csv(p) for p in args.plan]

    matrix = featurize_flows(ds.flows, cfg)
    labels = [f.label for f in ds.flows]
    ids = [f.id for f in ds.flows]
    row_of = {fid: i for i, fid in enumerate(ids)}

    per_rep = []
    accs = []
    f1s = []
    for k, plan in enumerate(plans):
        train_rows, test_rows = _plan_matrices(ds, plan, matrix, labels, row_of)
        if not train_rows:
            raise UsageError(f"plan {k} has an empty training partition")
        if not test_rows:
            raise UsageError(f"plan {k} has an empty test partition")
        idx = NeighborIndex.from_matrix(
            matrix[train_rows], [labels[i] for i in train_rows], cfg=cfg
        )
        outcome = evaluate(
            idx,
            zip(matrix[test_rows], (labels[i] for i in test_rows)),
            voting=voting,
        )
        accs.append(outcome.result.accuracy)
        f1s.append(outcome.result.weighted_f1)
        per_rep.append(
            {
                "accuracy": outcome.result.accuracy,
                "weighted_f1": outcome.result.weighted_f1,
                "n_train": len(train_rows),
                "n_test": len(test_rows),
            }
        )
        if args.dump_preds:
            dump = Path(f"{args.dump_preds}_rep{k:03d}.csv")
            lines = ["flow_id,truth,pred,nn_distance,n_voters"]
            for row, pred in zip(test_rows, outcome.predictions):
                lines.append(
                    f"{ids[row]},{labels[row]},{pred.label},"
                    f"{pred.nn_distance!r},{pred.n_voters}"
                )
            dump.write_text("\n".join(lines) + "\n", encoding="utf-8")

    acc_mean, acc_std = mean_std(accs)
    f1_mean, f1_std = mean_std(f1s)
    payload = {
        "kind": "eval",
        "dataset": ds.name,
        "config": cfg.to_json_dict(),
        "mode": {"name": "vote" if voting else "top1"}
        | ({"t_maj": voting.t_maj} if voting else {}),
        "n_reps": len(plans),
        "per_rep": per_rep,
        "mean": {"accuracy": acc_mean, "weighted_f1": f1_mean},
        "std": {"accuracy": acc_std, "weighted_f1": f1_std},
        "meta": _meta(),
    }
    _write_json(Path(args.out), payload)
    std_text = f" ± {100 * acc_std:.2f}" if acc_std is not None else ""
    print(
        f"{ds.name}: accuracy {100 * acc_mean:.2f}%{std_text}, "
        f"weighted F1 {100 * f1_mean:.2f}% over {len(plans)} rep(s)"
    )
    return 0


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


def cmd_tune(args) -> int:
    ds, _ = _load(args)
    plans = RepeatedSplits(plans=tuple(read_plan_csv(p) for p in args.plans))
    space = (
        SearchSpace.from_json_dict(
            json.loads(Path(args.space).read_text(encoding="utf-8"))
        )
        if args.space
        else SearchSpace()
    )
    log_path = Path(args.out_log)
    completed = []
    if args.resume and log_path.exists():
        completed = read_trial_log(log_path)
    with open(log_path, "a" if completed else "w", encoding="utf-8") as sink:
        best, log = tune(
            ds,
            plans,
            space,
            budget=args.budget,
            seed=args.seed,
            completed=completed,
            log_sink=sink,
        )
    print(
        json.dumps(
            {
                "best_trial": best.trial,
                "cfg": best.cfg.to_json_dict(),
                "mean_val_accuracy": best.mean_val_accuracy,
                "n_trials": len(log),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _collect_json(paths: list[str], kind: str, filename_hint: str) -> list[dict]:
    found = []
    for raw in paths:
        p = Path(raw)
        candidates = []
        if p.is_dir():
            candidates = sorted(p.rglob(filename_hint))
            if kind == "eval":
                candidates = sorted(q for q in p.rglob("*.json") if q.is_file())
        elif p.is_file():
            candidates = [p]
        else:
            raise DataError(f"no such file or directory: {raw}")
        for c in candidates:
            try:
                obj = json.loads(c.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                continue
            if isinstance(obj, dict) and obj.get("kind") == kind:
                found.append(obj)
    return found


def cmd_report(args) -> int:
    audits = _collect_json(args.audits, "audit", "audit.json")
    evals = _collect_json(args.evals, "eval", "*.json")
    if not audits or not evals:
        raise UsageError("need at least one audit and one eval result")

    audit_by_ds = {a["dataset"]: a for a in audits}
    best_by_ds: dict[str, float] = {}
    for e in evals:
        name = e["dataset"]
        acc = float(e["mean"]["accuracy"])
        if name not in best_by_ds or acc > best_by_ds[name]:
            best_by_ds[name] = acc

    rows = []
    for name in sorted(best_by_ds):
        audit = audit_by_ds.get(name)
        if audit is None:
            continue
        best_pct = 100 * best_by_ds[name]
        max_pct = 100 * float(audit["max_achievable_accuracy"])
        sd = audit["variants"][str(KeyVariant.SIZES_DIRS)]["report"]
        same_frac = sd["n_same_class_dup"] / sd["n_total"]
        rows.append(
            {
                "dataset": name,
                "best_input_space": best_pct,
                "max_acc": max_pct,
                "gap": gap(best_pct, max_pct),
                "same_class_dup_fraction": same_frac,
            }
        )
    if not rows:
        raise UsageError("no dataset appears in both an audit and an eval")

    out = Path(args.out)
    lines = ["dataset,best_input_space,max_acc,gap"]
    print(f"{'dataset':<24} {'best':>8} {'max acc':>8} {'gap':>8}")
    for r in rows:
        lines.append(
            f"{r['dataset']},{r['best_input_space']:.2f},{r['max_acc']:.2f},{r['gap']:.2f}"
        )
        print(
            f"{r['dataset']:<24} {r['best_input_space']:>8.2f} "
            f"{r['max_acc']:>8.2f} {r['gap']:>8.2f}"
        )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    if len(rows) >= 3:
        corr = spearman(
            [r["same_class_dup_fraction"] for r in rows],
            [r["best_input_space"] for r in rows],
        )
        _write_json(
            out.with_suffix(out.suffix + ".spearman.json"),
            {
                "kind": "spearman",
                "x": "same_class_dup_fraction",
                "y": "best_input_space",
                **corr.to_json_dict(),
                "meta": _meta(),
            },
        )
        print(f"spearman rho={corr.rho:.4f} p={corr.p_value:.4g} n={corr.n}")
    else:
        print("spearman omitted: need at least 3 datasets")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgauge",
        description=(
            "Audit packet-sequence datasets for duplicates and label conflicts, "
            "and benchmark the exact L1 nearest-neighbor baseline under "
            "random, time-based, disjoint-entity, and fixed splits."
        ),
    )
    parser.add_argument("--version", action="version", version=f"flowgauge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="duplicate clusters, accuracy bound, minimal FPR")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument("--benign-labels", default=None, help="comma-separated benign labels")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("split", help="build train/val/test plans")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument(
        "--strategy", required=True, choices=["random", "time", "disjoint", "fixed"]
    )
    p.add_argument("--fracs", default="0.6,0.2,0.2", help="train,val,test fractions")
    p.add_argument("--boundaries", default=None, help="t_train_end,t_test_start,t_test_end (ms)")
    p.add_argument("--val-frac", type=float, default=0.0, help="val share of the train window (time strategy)")
    p.add_argument("--key", choices=["src", "dst"], default="src")
    p.add_argument("--fixed-file", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--verify", action="store_true", help="recheck plan invariants")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="evaluate the baseline on saved plans")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument("--plan", action="append", required=True, help="plan CSV (repeatable)")
    p.add_argument(
        "--config",
        default="default",
        help="'default', a scaling-config JSON file, or a tune log (.jsonl)",
    )
    p.add_argument("--mode", default="top1", help="top1 or vote:<t_maj>")
    p.add_argument("--dump-preds", default=None, help="prefix for per-sample CSVs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="random-search scaling parameters on validation")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument("--plans", nargs="+", required=True, help="plan CSVs with VAL partitions")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--space", default=None, help="search-space JSON file")
    p.add_argument("--out-log", required=True, help="trial log (JSONL)")
    p.add_argument("--resume", action="store_true", help="continue an existing log")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("report", help="combine audits and evals into a gap table")
    p.add_argument("--audits", nargs="+", required=True)
    p.add_argument("--evals", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 4


if __name__ == "__main__":
    sys.exit(main())
