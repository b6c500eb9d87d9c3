"""Command-line interface.

Subcommands: ingest, diff, transitions, label, prep, train, eval, classify,
scoretest, report, synth. Global flags (before the subcommand): --config,
--seed, --out-dir, --format. Exit codes: 0 success, 1 usage error, 2 data
error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import churn as churn_mod
from . import cnn, imageprep, pipeline, snapshots, stats
from .errors import DataError, FollowshiftError, InvariantError, UsageError
from .weaklabel import NameLexicon, WeakLabel, weak_label

_EXTENSIONS = {"csv": "csv", "markdown": "md", "json": "json"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of exiting with argparse's code 2
        raise UsageError(message)


def _add_global_flags(parser: argparse.ArgumentParser, top_level: bool) -> None:
    """Accept the global flags both before and after the subcommand."""
    suppress = {} if top_level else {"default": argparse.SUPPRESS}
    parser.add_argument("--config", type=Path, help="key-value config file", **suppress)
    parser.add_argument(
        "--seed", type=int, help="master RNG seed", **({"default": 0} if top_level else suppress)
    )
    parser.add_argument("--out-dir", type=Path, help="directory for output files", **suppress)
    parser.add_argument(
        "--format",
        choices=("csv", "markdown", "json"),
        help="output format for rendered results",
        **({"default": "csv"} if top_level else suppress),
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="followshift", description=__doc__)
    _add_global_flags(parser, top_level=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        _add_global_flags(p, top_level=False)
        return p

    p = add_command("ingest", "parse, validate, and normalize snapshot files")
    p.add_argument("paths", nargs="+", type=Path)

    p = add_command("diff", "churn record between two snapshots")
    p.add_argument("before", type=Path)
    p.add_argument("after", type=Path)
    p.add_argument(
        "--write-sets",
        action="store_true",
        help="also write new/unfollower/retained ID files to --out-dir",
    )

    p = add_command("transitions", "where one account's unfollowers went")
    p.add_argument("--before", type=Path, required=True, help="source snapshot at window start")
    p.add_argument("--after", type=Path, required=True, help="source snapshot at window end")
    p.add_argument("destinations", nargs="+", type=Path, help="destination snapshots")

    p = add_command("label", "weak gender labels for display names")
    p.add_argument("--profiles", type=Path, required=True, help="CSV user_id,display_name")
    p.add_argument("--lexicon-male", type=Path)
    p.add_argument("--lexicon-female", type=Path)

    p = add_command("prep", "filter/crop/resize manifest images into faces.npz")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--images-root", type=Path, help="defaults to the manifest's directory")
    p.add_argument("--threshold", type=int, default=imageprep.SIZE_THRESHOLD_BYTES)
    p.add_argument("--filter-on", choices=("source", "crop"), default="source")

    p = add_command("train", "train the gender classifier")
    p.add_argument("--faces", type=Path, required=True, help="faces.npz from prep")
    p.add_argument("--labels", type=Path, required=True, help="labels.csv from label")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument(
        "--val-fraction",
        type=float,
        default=0.0,
        help="held-out fraction for per-epoch validation accuracy",
    )

    p = add_command("eval", "precision/recall/F1/accuracy on labeled faces")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--faces", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--positive-class", choices=("male", "female"), required=True)

    p = add_command("classify", "predict gender for prepared faces")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--faces", type=Path, required=True)

    p = add_command("scoretest", "two-proportion score test")
    p.add_argument("--x1", type=int, required=True, help="successes of sample 1")
    p.add_argument("--n1", type=int, required=True, help="trials of sample 1")
    p.add_argument("--x2", type=int, required=True, help="successes of sample 2")
    p.add_argument("--n2", type=int, required=True, help="trials of sample 2")

    p = add_command("report", "full before/after composition analysis")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    p = add_command("synth", "generate a deterministic synthetic dataset")
    p.add_argument("--account", default="alpha")
    p.add_argument("--retained", type=int, default=200)
    p.add_argument("--new-before", type=int, default=500)
    p.add_argument("--new-after", type=int, default=500)
    p.add_argument("--unfollow-before", type=int, default=50)
    p.add_argument("--unfollow-after", type=int, default=50)
    p.add_argument("--female-new-before", type=float, default=0.5)
    p.add_argument("--female-new-after", type=float, default=0.5)
    p.add_argument("--female-unfollow-before", type=float, default=0.5)
    p.add_argument("--female-unfollow-after", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--image-side", type=int, default=28)

    return parser


def _emit(args, text: str, stem: str) -> None:
    """Write rendered output to --out-dir/<stem>.<ext>, or stdout without one."""
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        path = args.out_dir / f"{stem}.{_EXTENSIONS[args.format]}"
        path.write_text(text, encoding="utf-8")
        print(str(path))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _require_out_dir(args) -> Path:
    if args.out_dir is None:
        raise UsageError("this command requires --out-dir")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir


def _lexicon(male: Optional[Path], female: Optional[Path]) -> NameLexicon:
    if (male is None) != (female is None):
        raise UsageError("--lexicon-male and --lexicon-female must be given together")
    if male is None:
        return NameLexicon.default()
    return NameLexicon.from_files(male, female)


def _cmd_ingest(args) -> int:
    rows = []
    for path in args.paths:
        if not path.exists():
            raise DataError(f"snapshot file not found: {path}")
        snap = snapshots.parse_snapshot(path)
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            ts = snapshots.format_utc_timestamp(snap.captured_at).replace(":", "")
            snapshots.write_snapshot(snap, args.out_dir / f"{snap.account}_{ts}.snap")
        rows.append(
            {
                "account": snap.account,
                "captured_at": snapshots.format_utc_timestamp(snap.captured_at),
                "followers": len(snap.follower_ids),
                "duplicate_warnings": snap.duplicate_warnings,
            }
        )
    if args.format == "json":
        text = json.dumps(rows, indent=2, sort_keys=True)
    elif args.format == "markdown":
        lines = ["| Account | Captured | Followers | Duplicate warnings |", "|---|---|---|---|"]
        lines += [
            f"| {r['account']} | {r['captured_at']} | {r['followers']} | {r['duplicate_warnings']} |"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    else:
        lines = ["account,captured_at,followers,duplicate_warnings"]
        lines += [
            f"{r['account']},{r['captured_at']},{r['followers']},{r['duplicate_warnings']}"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    _emit(args, text, "ingest")
    return 0


def _load_snapshot_file(path: Path) -> snapshots.FollowerSnapshot:
    if not path.exists():
        raise DataError(f"snapshot file not found: {path}")
    return snapshots.parse_snapshot(path)


def _cmd_diff(args) -> int:
    before = _load_snapshot_file(args.before)
    after = _load_snapshot_file(args.after)
    record = snapshots.diff(before, after)
    if args.write_sets:
        out = _require_out_dir(args)
        for name, ids in (
            ("new_followers", record.new_followers),
            ("unfollowers", record.unfollowers),
            ("retained", record.retained),
        ):
            cohort = snapshots.FollowerSnapshot(
                account=f"{record.account}#{name}",
                captured_at=record.window_end,
                follower_ids=ids,
            )
            snapshots.write_snapshot(cohort, out / f"{record.account}_{name}.snap")
    if args.format == "json":
        text = json.dumps(
            {
                "account": record.account,
                "window_start": snapshots.format_utc_timestamp(record.window_start),
                "window_end": snapshots.format_utc_timestamp(record.window_end),
                "new_followers": len(record.new_followers),
                "unfollowers": len(record.unfollowers),
                "retained": len(record.retained),
            },
            indent=2,
            sort_keys=True,
        )
    elif args.format == "markdown":
        text = churn_mod.churn_records_to_markdown([record])
    else:
        text = churn_mod.churn_records_to_csv([record])
    _emit(args, text, "diff")
    return 0


def _cmd_transitions(args) -> int:
    before = _load_snapshot_file(args.before)
    after = _load_snapshot_file(args.after)
    record = snapshots.diff(before, after)
    destinations = [_load_snapshot_file(p) for p in args.destinations]
    report = churn_mod.transition_report(
        source_account=record.account,
        window_start=record.window_start,
        window_end=record.window_end,
        unfollowers=record.unfollowers,
        destinations=destinations,
    )
    if args.format == "json":
        text = json.dumps(
            {
                "source_account": report.source_account,
                "window_start": snapshots.format_utc_timestamp(report.window_start),
                "window_end": snapshots.format_utc_timestamp(report.window_end),
                "rows": [
                    {
                        "destination": r.destination_account,
                        "fraction": r.fraction,
                        "numerator": r.numerator,
                        "denominator": r.denominator,
                    }
                    for r in report.rows
                ],
            },
            indent=2,
            sort_keys=True,
        )
    elif args.format == "markdown":
        window = (
            f"{snapshots.format_utc_timestamp(report.window_start)} .. "
            f"{snapshots.format_utc_timestamp(report.window_end)}"
        )
        text = churn_mod.transitions_to_markdown([(window, report)])
    else:
        text = churn_mod.transition_to_csv(report)
    _emit(args, text, "transitions")
    return 0


def _cmd_label(args) -> int:
    lexicon = _lexicon(args.lexicon_male, args.lexicon_female)
    profiles = pipeline.read_profiles(args.profiles)
    rows = [(uid, weak_label(name, lexicon)) for uid, name in profiles]
    if args.out_dir is not None:
        out = _require_out_dir(args)
        pipeline.write_labels(out / "labels.csv", rows)
        print(str(out / "labels.csv"))
    else:
        sys.stdout.write("user_id,label\n")
        for uid, label in rows:
            sys.stdout.write(f"{uid},{label.value}\n")
    return 0


def _cmd_prep(args) -> int:
    out = _require_out_dir(args)
    entries = imageprep.read_manifest(args.manifest)
    images_root = args.images_root or args.manifest.parent
    result = imageprep.prepare_faces(
        entries, images_root, threshold_bytes=args.threshold, filter_on=args.filter_on
    )
    pipeline.save_faces(out / "faces.npz", result.user_ids, result.tensors)
    pipeline.write_drops(out / "prep_drops.csv", result.drops)
    print(str(out / "faces.npz"))
    return 0


def _split_validation(
    x: np.ndarray, y: np.ndarray, fraction: float, seed: int
):
    if not (0.0 <= fraction < 1.0):
        raise UsageError("--val-fraction must be in [0, 1)")
    if fraction == 0.0:
        return x, y, None
    n_val = int(round(len(y) * fraction))
    if n_val == 0 or n_val == len(y):
        raise DataError("validation split would leave an empty partition")
    order = np.random.default_rng(seed).permutation(len(y))
    val_idx, train_idx = order[:n_val], order[n_val:]
    return x[train_idx], y[train_idx], (x[val_idx], y[val_idx])


def _cmd_train(args) -> int:
    out = _require_out_dir(args)
    user_ids, tensors = pipeline.load_faces(args.faces)
    labels = pipeline.read_labels(args.labels)
    x, y, _ = pipeline.assemble_training_set(user_ids, tensors, labels, seed=args.seed)
    x, y, val = _split_validation(x, y, args.val_fraction, seed=args.seed)
    config = cnn.TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    model, history = cnn.train(x, y, config, val=val)
    cnn.save_model(model, out / "model.cnnw")
    (out / "history.csv").write_text(cnn.history_to_csv(history), encoding="utf-8")
    print(str(out / "model.cnnw"))
    return 0


def _load_labeled_faces(args) -> tuple:
    user_ids, tensors = pipeline.load_faces(args.faces)
    labels = pipeline.read_labels(args.labels)
    keep, y = [], []
    for i, uid in enumerate(user_ids):
        label = labels.get(int(uid), WeakLabel.UNKNOWN)
        if label is not WeakLabel.UNKNOWN:
            keep.append(i)
            y.append(cnn.LABEL_TO_CLASS[label])
    if not keep:
        raise DataError("no labeled faces to evaluate")
    idx = np.asarray(keep, dtype=np.intp)
    return tensors[idx], np.asarray(y, dtype=np.intp)


def _cmd_eval(args) -> int:
    model = cnn.load_model(args.model)
    tensors, y = _load_labeled_faces(args)
    positive = WeakLabel(args.positive_class)
    metrics = cnn.evaluate(model, tensors, y, positive)
    payload = {
        "positive_class": positive.value,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "accuracy": metrics.accuracy,
        "zero_division": list(metrics.zero_division),
        "n": int(len(y)),
    }
    if args.format == "json":
        text = json.dumps(payload, indent=2, sort_keys=True)
    elif args.format == "markdown":
        text = (
            "| Positive class | Precision | Recall | F1 | Accuracy |\n"
            "|---|---|---|---|---|\n"
            f"| {positive.value} | {metrics.precision * 100:.2f} | "
            f"{metrics.recall * 100:.2f} | {metrics.f1 * 100:.2f} | "
            f"{metrics.accuracy * 100:.2f} |\n"
        )
    else:
        text = (
            "positive_class,precision,recall,f1,accuracy,n\n"
            f"{positive.value},{metrics.precision!r},{metrics.recall!r},"
            f"{metrics.f1!r},{metrics.accuracy!r},{len(y)}\n"
        )
    _emit(args, text, "eval")
    return 0


def _cmd_classify(args) -> int:
    model = cnn.load_model(args.model)
    user_ids, tensors = pipeline.load_faces(args.faces)
    rows = []
    for start in range(0, len(user_ids), 512):
        classes, probs = cnn.predict_batch(model, tensors[start : start + 512])
        for uid, c, p in zip(user_ids[start : start + 512], classes, probs):
            rows.append((int(uid), cnn.CLASS_LABELS[int(c)], float(p)))
    if args.out_dir is not None:
        out = _require_out_dir(args)
        pipeline.write_predictions(out / "predictions.csv", rows)
        print(str(out / "predictions.csv"))
    else:
        sys.stdout.write("user_id,label,probability\n")
        for uid, label, prob in rows:
            sys.stdout.write(f"{uid},{label.value},{prob!r}\n")
    return 0


def _cmd_scoretest(args) -> int:
    result = stats.score_test(
        stats.ProportionSample(successes=args.x1, trials=args.n1),
        stats.ProportionSample(successes=args.x2, trials=args.n2),
    )
    if args.format == "json":
        text = stats.score_result_to_json(result)
    elif args.format == "markdown":
        text = (
            "| z | p (two-sided) | pooled p |\n|---|---|---|\n"
            f"| {result.z:.4f} | {result.p_two_sided:.4g} | {result.pooled_p:.4f} |\n"
        )
    else:
        text = stats.score_result_to_csv(result)
    _emit(args, text, "scoretest")
    return 0


def _cmd_report(args) -> int:
    if args.config is None:
        raise UsageError("report requires --config")
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    config = pipeline.AnalysisConfig.from_file(args.config, overrides=overrides)
    report = pipeline.run_analysis(config)
    _emit(args, pipeline.render_report(report, args.format), "report")
    return 0


def _cmd_synth(args) -> int:
    out = _require_out_dir(args)
    spec = pipeline.SyntheticSpec(
        account=args.account,
        retained=args.retained,
        new_before=args.new_before,
        new_after=args.new_after,
        unfollow_before=args.unfollow_before,
        unfollow_after=args.unfollow_after,
        female_frac_new_before=args.female_new_before,
        female_frac_new_after=args.female_new_after,
        female_frac_unfollow_before=args.female_unfollow_before,
        female_frac_unfollow_after=args.female_unfollow_after,
        noise_level=args.noise,
        image_side=args.image_side,
    )
    dataset = pipeline.gen_synthetic(args.seed, spec, out)
    print(str(dataset.config_path))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "diff": _cmd_diff,
    "transitions": _cmd_transitions,
    "label": _cmd_label,
    "prep": _cmd_prep,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "classify": _cmd_classify,
    "scoretest": _cmd_scoretest,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return 1
    if isinstance(exc, InvariantError):
        return 3
    if isinstance(exc, FollowshiftError):
        return 2
    return 3


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except FollowshiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except Exception as exc:  # anything unexpected is an internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
