"""End-to-end before/after composition analysis.

Pipeline per cohort (new followers, unfollowers) and window (before, after):
snapshot diff -> manifest lookup -> image prep -> gender prediction ->
female share, then a two-proportion score test comparing the after window
against the before window (positive z = higher female share after). Every
cohort member is accounted for: classified + itemized drops = cohort size.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Optional

from ..churn import churn_summary
from ..cnn import CnnModel, load_model, predict_batch
from ..errors import DataError, InvariantError
from ..imageprep import DropReason, ManifestEntry, prepare_faces, read_manifest
from ..snapshots import SnapshotSeries, parse_snapshot
from ..stats import DegeneratePool, ProportionSample, ScoreTestResult, score_test
from .config import AnalysisConfig

NEW_FOLLOWERS = "new_followers"
UNFOLLOWERS = "unfollowers"

_PREDICT_CHUNK = 512


class PipelineStageError(DataError):
    """A stage failed; carries the stage name and item context."""

    def __init__(self, stage: str, item: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed on {item}: {cause}")
        self.stage = stage
        self.item = item
        self.cause = cause


class EmptyCohort(DataError):
    """A cohort has no members (or none that survived the filters)."""

    def __init__(self, cohort: str, window: str, detail: str):
        super().__init__(f"{cohort}/{window}: {detail}")
        self.cohort = cohort
        self.window = window


@dataclass(frozen=True)
class CohortWindowStats:
    """One cohort in one window: classification counts and the drop ledger."""

    cohort_size: int
    classified: int
    female: int
    drops: dict[DropReason, int]

    def __post_init__(self):
        dropped = sum(self.drops.values())
        if self.classified + dropped != self.cohort_size:
            raise InvariantError(
                f"ledger mismatch: classified {self.classified} + dropped {dropped}"
                f" != cohort size {self.cohort_size}"
            )
        if not (0 <= self.female <= self.classified):
            raise InvariantError("female count outside [0, classified]")

    @property
    def female_share(self) -> float:
        return self.female / self.classified

    @property
    def dropped(self) -> int:
        return sum(self.drops.values())


@dataclass(frozen=True)
class CohortComparison:
    cohort: str
    before: CohortWindowStats
    after: CohortWindowStats
    test: Optional[ScoreTestResult]
    degenerate_reason: Optional[str] = None


@dataclass(frozen=True)
class CompositionReport:
    account: str
    before_start: datetime
    event_time: datetime
    after_end: datetime
    snapshot_times: tuple[datetime, datetime, datetime]
    new_followers: CohortComparison
    unfollowers: CohortComparison
    notes: tuple[str, ...] = ()

    def comparisons(self) -> tuple[CohortComparison, CohortComparison]:
        return (self.new_followers, self.unfollowers)


def load_account_series(snapshots_dir, account: str) -> SnapshotSeries:
    """Parse every snapshot file in a directory and keep the account's series."""
    snapshots_dir = Path(snapshots_dir)
    if not snapshots_dir.is_dir():
        raise DataError(f"snapshot directory not found: {snapshots_dir}")
    snaps = []
    for path in sorted(snapshots_dir.iterdir()):
        if not path.is_file():
            continue
        snap = parse_snapshot(path)
        if snap.account == account:
            snaps.append(snap)
    if not snaps:
        raise DataError(f"no snapshots for account {account!r} in {snapshots_dir}")
    return SnapshotSeries.build(snaps)


def _manifest_index(entries: list[ManifestEntry]) -> dict[int, ManifestEntry]:
    index: dict[int, ManifestEntry] = {}
    for entry in entries:
        if entry.user_id in index:
            raise DataError(f"duplicate manifest entry for user {entry.user_id}")
        index[entry.user_id] = entry
    return index


def classify_cohort(
    member_ids: frozenset[int],
    manifest_index: dict[int, ManifestEntry],
    images_root,
    model: CnnModel,
    config: AnalysisConfig,
    cohort: str,
    window: str,
) -> CohortWindowStats:
    """Classify one cohort; returns counts plus the reconciled drop ledger."""
    if not member_ids:
        raise EmptyCohort(cohort, window, "cohort is empty")
    drops = {reason: 0 for reason in DropReason}
    entries = []
    for uid in sorted(member_ids):
        entry = manifest_index.get(uid)
        if entry is None:
            drops[DropReason.NO_IMAGE] += 1
        else:
            entries.append(entry)
    try:
        prep = prepare_faces(
            entries,
            images_root,
            threshold_bytes=config.image_byte_threshold,
            filter_on=config.filter_on,
        )
    except DataError as exc:
        raise PipelineStageError("imageprep", f"{cohort}/{window}", exc) from exc
    for _, reason in prep.drops:
        drops[reason] += 1

    classified = 0
    female = 0
    for start in range(0, len(prep.user_ids), _PREDICT_CHUNK):
        classes, probs = predict_batch(model, prep.tensors[start : start + _PREDICT_CHUNK])
        keep = probs >= config.probability_floor
        drops[DropReason.BELOW_PROBABILITY_FLOOR] += int((~keep).sum())
        classified += int(keep.sum())
        female += int((classes[keep] == 1).sum())

    stats = CohortWindowStats(
        cohort_size=len(member_ids),
        classified=classified,
        female=female,
        drops=drops,
    )
    if stats.classified == 0:
        raise EmptyCohort(cohort, window, "no members survived the filters")
    return stats


def _compare(
    cohort: str, before: CohortWindowStats, after: CohortWindowStats
) -> CohortComparison:
    try:
        result = score_test(
            ProportionSample(successes=after.female, trials=after.classified),
            ProportionSample(successes=before.female, trials=before.classified),
        )
        return CohortComparison(cohort=cohort, before=before, after=after, test=result)
    except DegeneratePool as exc:
        return CohortComparison(
            cohort=cohort,
            before=before,
            after=after,
            test=None,
            degenerate_reason=str(exc),
        )


def run_analysis(config: AnalysisConfig) -> CompositionReport:
    """Run the full before/after composition analysis described by the config."""
    series = load_account_series(config.snapshots_dir, config.account)
    boundaries = [config.before_start, config.event_time, config.after_end]
    summary = churn_summary(series, boundaries)
    rec_before, rec_after = summary.records

    if not config.manifest_path.exists():
        raise DataError(f"image manifest not found: {config.manifest_path}")
    manifest_index = _manifest_index(read_manifest(config.manifest_path))
    images_root = config.manifest_path.parent
    try:
        model = load_model(config.model_path)
    except FileNotFoundError:
        raise DataError(f"model file not found: {config.model_path}") from None

    cohort_sets = {
        (NEW_FOLLOWERS, "before"): rec_before.new_followers,
        (NEW_FOLLOWERS, "after"): rec_after.new_followers,
        (UNFOLLOWERS, "before"): rec_before.unfollowers,
        (UNFOLLOWERS, "after"): rec_after.unfollowers,
    }
    stats = {
        key: classify_cohort(
            ids, manifest_index, images_root, model, config, key[0], key[1]
        )
        for key, ids in cohort_sets.items()
    }

    notes = (
        "female shares use successfully classified members as denominators;"
        " drops are itemized per cohort",
        "score test compares the after window against the before window:"
        " positive z means a higher female share after the event",
        "windows: before = [before_start, event_time), after = [event_time, after_end];"
        " each boundary resolves to the nearest snapshot at or before it",
    )
    return CompositionReport(
        account=config.account,
        before_start=config.before_start,
        event_time=config.event_time,
        after_end=config.after_end,
        snapshot_times=tuple(sel.snapshot_time for sel in summary.selections),
        new_followers=_compare(
            NEW_FOLLOWERS,
            stats[(NEW_FOLLOWERS, "before")],
            stats[(NEW_FOLLOWERS, "after")],
        ),
        unfollowers=_compare(
            UNFOLLOWERS,
            stats[(UNFOLLOWERS, "before")],
            stats[(UNFOLLOWERS, "after")],
        ),
        notes=notes,
    )
