"""Multi-account transition analytics: unfollower destinations and windowed churn."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Iterator, Sequence

from .errors import DataError, InvariantError
from .snapshots import (
    ChurnRecord,
    FollowerSnapshot,
    SnapshotSeries,
    diff,
    format_utc_timestamp,
)


class EmptyUnfollowerSet(DataError):
    """A destination rate is undefined for an empty unfollower set."""


class InsufficientSnapshots(DataError):
    """A churn summary needs at least two usable (distinct) snapshots."""


@dataclass(frozen=True)
class DestinationRate:
    fraction: float
    numerator: int
    denominator: int


@dataclass(frozen=True)
class TransitionRow:
    destination_account: str
    fraction: float
    numerator: int
    denominator: int

    def __post_init__(self):
        if self.denominator <= 0:
            raise InvariantError("transition row denominator must be positive")
        if self.fraction != self.numerator / self.denominator:
            raise InvariantError("transition row fraction != numerator/denominator")


@dataclass(frozen=True)
class TransitionReport:
    """Where one account's unfollowers went, over one window."""

    source_account: str
    window_start: datetime
    window_end: datetime
    rows: tuple[TransitionRow, ...]

    def __post_init__(self):
        handles = [row.destination_account for row in self.rows]
        if handles != sorted(handles):
            raise InvariantError("transition rows must be sorted by destination")


def destination_rate(
    unfollowers: frozenset[int] | set[int],
    destination_followers: FollowerSnapshot,
) -> DestinationRate:
    """Fraction of the unfollowers present among the destination's followers."""
    if not unfollowers:
        raise EmptyUnfollowerSet(
            "destination rate undefined: empty unfollower set"
        )
    numerator = len(unfollowers & destination_followers.follower_ids)
    denominator = len(unfollowers)
    return DestinationRate(
        fraction=numerator / denominator,
        numerator=numerator,
        denominator=denominator,
    )


def transition_report(
    source_account: str,
    window_start: datetime,
    window_end: datetime,
    unfollowers: frozenset[int] | set[int],
    destinations: Sequence[FollowerSnapshot],
) -> TransitionReport:
    """Compute destination rates against each destination snapshot.

    Rows are sorted by destination handle so output is deterministic
    regardless of input or evaluation order.
    """
    rows = []
    for dest in sorted(destinations, key=lambda s: s.account):
        rate = destination_rate(unfollowers, dest)
        rows.append(
            TransitionRow(
                destination_account=dest.account,
                fraction=rate.fraction,
                numerator=rate.numerator,
                denominator=rate.denominator,
            )
        )
    return TransitionReport(
        source_account=source_account,
        window_start=window_start,
        window_end=window_end,
        rows=tuple(rows),
    )


@dataclass(frozen=True)
class BoundarySelection:
    """Which snapshot served one requested boundary (nearest at-or-before)."""

    boundary: datetime
    snapshot_time: datetime


@dataclass(frozen=True)
class ChurnSummary:
    """Churn records for consecutive boundary pairs, plus selection metadata."""

    account: str
    records: tuple[ChurnRecord, ...]
    selections: tuple[BoundarySelection, ...]

    def __iter__(self) -> Iterator[ChurnRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]


def _snapshot_at_or_before(
    series: SnapshotSeries, boundary: datetime
) -> FollowerSnapshot:
    chosen = None
    for snap in series.snapshots:
        if snap.captured_at <= boundary:
            chosen = snap
        else:
            break
    if chosen is None:
        raise InsufficientSnapshots(
            f"no snapshot at or before boundary {format_utc_timestamp(boundary)}"
        )
    return chosen


def churn_summary(
    series: SnapshotSeries, boundaries: Sequence[datetime]
) -> ChurnSummary:
    """Diff the snapshots nearest (at-or-before) each consecutive boundary pair."""
    if len(boundaries) < 2:
        raise DataError("churn summary needs at least two boundaries")
    for prev, cur in zip(boundaries, boundaries[1:]):
        if cur <= prev:
            raise DataError("boundaries must be strictly increasing")
    if not series.snapshots:
        raise InsufficientSnapshots("series contains no snapshots")
    first = series.snapshots[0].captured_at
    last = series.snapshots[-1].captured_at
    for boundary in boundaries:
        if not (first <= boundary <= last):
            raise DataError(
                f"boundary {format_utc_timestamp(boundary)} outside series range "
                f"[{format_utc_timestamp(first)}, {format_utc_timestamp(last)}]"
            )

    picks = [_snapshot_at_or_before(series, b) for b in boundaries]
    for a, b in zip(picks, picks[1:]):
        if a.captured_at == b.captured_at:
            raise InsufficientSnapshots(
                "consecutive boundaries resolve to the same snapshot "
                f"({format_utc_timestamp(a.captured_at)})"
            )
    records = tuple(diff(a, b) for a, b in zip(picks, picks[1:]))
    selections = tuple(
        BoundarySelection(boundary=b, snapshot_time=p.captured_at)
        for b, p in zip(boundaries, picks)
    )
    return ChurnSummary(account=series.account, records=records, selections=selections)


def transition_to_csv(report: TransitionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["destination", "fraction", "numerator", "denominator"])
    for row in report.rows:
        writer.writerow(
            [row.destination_account, repr(row.fraction), row.numerator, row.denominator]
        )
    return buf.getvalue()


def transitions_to_markdown(
    labeled_reports: Sequence[tuple[str, TransitionReport]]
) -> str:
    """Markdown table: one row per labeled window, one column per destination."""
    if not labeled_reports:
        raise DataError("no transition reports to render")
    destinations = [r.destination_account for r in labeled_reports[0][1].rows]
    for _, rep in labeled_reports:
        if [r.destination_account for r in rep.rows] != destinations:
            raise DataError("transition reports cover different destination sets")
    lines = [
        "| Window | " + " | ".join(destinations) + " |",
        "|---" * (len(destinations) + 1) + "|",
    ]
    for label, rep in labeled_reports:
        cells = [f"{row.fraction * 100:.2f}%" for row in rep.rows]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def churn_records_to_csv(records: Iterable[ChurnRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["account", "window_start", "window_end", "new_followers", "unfollowers", "retained"]
    )
    for rec in records:
        writer.writerow(
            [
                rec.account,
                format_utc_timestamp(rec.window_start),
                format_utc_timestamp(rec.window_end),
                len(rec.new_followers),
                len(rec.unfollowers),
                len(rec.retained),
            ]
        )
    return buf.getvalue()


def churn_records_to_markdown(records: Sequence[ChurnRecord]) -> str:
    """Markdown table with one column pair layout per record window."""
    if not records:
        raise DataError("no churn records to render")
    headers = [
        f"{format_utc_timestamp(r.window_start)} .. {format_utc_timestamp(r.window_end)}"
        for r in records
    ]
    lines = [
        "| Cohort | " + " | ".join(headers) + " |",
        "|---" * (len(records) + 1) + "|",
        "| New Followers | " + " | ".join(str(len(r.new_followers)) for r in records) + " |",
        "| Unfollowers | " + " | ".join(str(len(r.unfollowers)) for r in records) + " |",
    ]
    return "\n".join(lines) + "\n"
