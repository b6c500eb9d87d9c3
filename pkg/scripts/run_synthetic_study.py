#!/usr/bin/env python3
"""End-to-end demonstration on synthetic data.

Generates a training corpus and a study dataset with a planted female-share
shift among new followers, trains the classifier on weak labels, runs the
before/after analysis, and prints the Markdown report.

Usage: python scripts/run_synthetic_study.py [--seed N] [--shift PP] [--out DIR]
"""
from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from followshift.cnn import TrainConfig, save_model, train
from followshift.imageprep import prepare_faces, read_manifest
from followshift.pipeline import (
    AnalysisConfig,
    SyntheticSpec,
    assemble_training_set,
    gen_synthetic,
    read_profiles,
    render_report,
    run_analysis,
)
from followshift.weaklabel import NameLexicon, weak_label


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument(
        "--shift",
        type=float,
        default=5.0,
        help="planted after-window female-share shift in percentage points",
    )
    parser.add_argument("--cohort", type=int, default=1500, help="new-follower cohort size")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--out", type=Path, default=None, help="work directory (default: temp)")
    args = parser.parse_args()

    work = args.out or Path(tempfile.mkdtemp(prefix="followshift_study_"))
    work.mkdir(parents=True, exist_ok=True)
    print(f"work directory: {work}", file=sys.stderr)

    print("generating training corpus ...", file=sys.stderr)
    corpus = gen_synthetic(
        args.seed,
        SyntheticSpec(new_before=400, new_after=400, unfollow_before=50, unfollow_after=50),
        work / "corpus",
    )
    faces = prepare_faces(read_manifest(corpus.manifest_path), corpus.root, threshold_bytes=1)
    lexicon = NameLexicon.from_files(corpus.lexicon_male, corpus.lexicon_female)
    labels = {
        uid: weak_label(name, lexicon) for uid, name in read_profiles(corpus.profiles_path)
    }
    x, y, _ = assemble_training_set(faces.user_ids, faces.tensors, labels, seed=args.seed)

    print(f"training on {len(y)} weakly labeled faces ...", file=sys.stderr)
    model, history = train(x, y, TrainConfig(epochs=args.epochs, seed=args.seed))
    for row in history:
        print(
            f"  epoch {row.epoch}: loss {row.loss:.4f}, train acc {row.train_acc:.4f}",
            file=sys.stderr,
        )
    model_path = work / "model.cnnw"
    save_model(model, model_path)

    base = 0.45
    print(f"generating study dataset (+{args.shift} pp among new followers) ...", file=sys.stderr)
    study = gen_synthetic(
        args.seed + 1,
        SyntheticSpec(
            new_before=args.cohort,
            new_after=args.cohort,
            unfollow_before=args.cohort // 5,
            unfollow_after=args.cohort // 5,
            female_frac_new_before=base,
            female_frac_new_after=base + args.shift / 100.0,
            female_frac_unfollow_before=base,
            female_frac_unfollow_after=base,
            noise_level=0.05,
        ),
        work / "study",
    )
    config = AnalysisConfig.from_file(
        study.config_path, overrides={"model": str(model_path)}
    )
    report = run_analysis(config)
    print(render_report(report, "markdown"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
