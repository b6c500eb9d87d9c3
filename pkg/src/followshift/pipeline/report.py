"""Render composition reports as CSV, Markdown, or JSON.

Rendering is deterministic: the same report always produces identical
bytes. The CSV form can be parsed back into an equal report (modulo the
free-text notes, which are not data).
"""
from __future__ import annotations

import csv
import io
import json
from typing import Iterable

from ..errors import DataError
from ..imageprep import DropReason
from ..snapshots import format_utc_timestamp, parse_utc_timestamp
from ..stats import ProportionSample, ScoreTestResult
from .analysis import CohortComparison, CohortWindowStats, CompositionReport

_DROP_ORDER = (
    DropReason.NO_IMAGE,
    DropReason.NO_FACE,
    DropReason.BELOW_SIZE_THRESHOLD,
    DropReason.BELOW_PROBABILITY_FLOOR,
)

CSV_COLUMNS = (
    ["account", "cohort", "before_start", "event_time", "after_end"]
    + [f"snapshot_{i}" for i in range(3)]
    + [f"{col}_{window}" for window in ("before", "after") for col in (
        ["size", "classified", "female"] + [f"drop_{r.value}" for r in _DROP_ORDER]
    )]
    + ["z", "p_two_sided", "pooled_p", "degenerate_reason"]
)


def _window_cells(stats: CohortWindowStats) -> list:
    return [stats.cohort_size, stats.classified, stats.female] + [
        stats.drops.get(reason, 0) for reason in _DROP_ORDER
    ]


def render_csv(report: CompositionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for comp in report.comparisons():
        row = [
            report.account,
            comp.cohort,
            format_utc_timestamp(report.before_start),
            format_utc_timestamp(report.event_time),
            format_utc_timestamp(report.after_end),
        ]
        row += [format_utc_timestamp(ts) for ts in report.snapshot_times]
        row += _window_cells(comp.before)
        row += _window_cells(comp.after)
        if comp.test is None:
            row += ["", "", "", comp.degenerate_reason or "degenerate"]
        else:
            row += [
                repr(comp.test.z),
                repr(comp.test.p_two_sided),
                repr(comp.test.pooled_p),
                "",
            ]
        writer.writerow(row)
    return buf.getvalue()


def _parse_window(cells: list[str]) -> CohortWindowStats:
    size, classified, female = (int(v) for v in cells[:3])
    drops = {
        reason: int(cells[3 + i]) for i, reason in enumerate(_DROP_ORDER)
    }
    return CohortWindowStats(
        cohort_size=size, classified=classified, female=female, drops=drops
    )


def report_from_csv(text: str) -> CompositionReport:
    """Parse render_csv output back into a CompositionReport (notes empty)."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or rows[0] != CSV_COLUMNS:
        raise DataError("not a composition report CSV")
    if len(rows) != 3:
        raise DataError(f"expected 2 cohort rows, got {len(rows) - 1}")
    comparisons = {}
    header_fields = {}
    for row in rows[1:]:
        header_fields = {
            "account": row[0],
            "before_start": parse_utc_timestamp(row[2]),
            "event_time": parse_utc_timestamp(row[3]),
            "after_end": parse_utc_timestamp(row[4]),
            "snapshot_times": tuple(parse_utc_timestamp(v) for v in row[5:8]),
        }
        before = _parse_window(row[8:15])
        after = _parse_window(row[15:22])
        z_cell, p_cell, pooled_cell, reason = row[22:26]
        if z_cell == "":
            test = None
            degenerate = reason or "degenerate"
        else:
            test = ScoreTestResult(
                z=float(z_cell),
                p_two_sided=float(p_cell),
                pooled_p=float(pooled_cell),
                sample1=ProportionSample(successes=after.female, trials=after.classified),
                sample2=ProportionSample(successes=before.female, trials=before.classified),
            )
            degenerate = None
        comparisons[row[1]] = CohortComparison(
            cohort=row[1],
            before=before,
            after=after,
            test=test,
            degenerate_reason=degenerate,
        )
    missing = {"new_followers", "unfollowers"} - set(comparisons)
    if missing:
        raise DataError(f"report CSV missing cohorts: {sorted(missing)}")
    return CompositionReport(
        new_followers=comparisons["new_followers"],
        unfollowers=comparisons["unfollowers"],
        notes=(),
        **header_fields,
    )


_COHORT_TITLES = {"new_followers": "New Followers", "unfollowers": "Unfollowers"}

_DROP_TITLES = {
    DropReason.NO_IMAGE: "no image",
    DropReason.NO_FACE: "no face",
    DropReason.BELOW_SIZE_THRESHOLD: "below size threshold",
    DropReason.BELOW_PROBABILITY_FLOOR: "below probability floor",
}


def _markdown_cohort(comp: CohortComparison) -> Iterable[str]:
    yield f"## {_COHORT_TITLES.get(comp.cohort, comp.cohort)}"
    yield ""
    yield "| | Before | After |"
    yield "|---|---|---|"
    b, a = comp.before, comp.after
    yield f"| Cohort size | {b.cohort_size} | {a.cohort_size} |"
    yield f"| Classified | {b.classified} | {a.classified} |"
    yield f"| Female | {b.female} | {a.female} |"
    yield f"| Female share | {b.female_share * 100:.2f}% | {a.female_share * 100:.2f}% |"
    for reason in _DROP_ORDER:
        yield (
            f"| Dropped: {_DROP_TITLES[reason]} | "
            f"{b.drops.get(reason, 0)} | {a.drops.get(reason, 0)} |"
        )
    yield ""
    if comp.test is None:
        yield f"Score test (after vs before): n/a ({comp.degenerate_reason})"
    else:
        yield (
            f"Score test (after vs before): z = {comp.test.z:.4f}, "
            f"p = {comp.test.p_two_sided:.4g}, pooled p = {comp.test.pooled_p:.4f}"
        )
    yield ""


def render_markdown(report: CompositionReport) -> str:
    lines = [
        f"# Composition shift report: {report.account}",
        "",
        (
            f"Windows: before = [{format_utc_timestamp(report.before_start)}, "
            f"{format_utc_timestamp(report.event_time)}), after = "
            f"[{format_utc_timestamp(report.event_time)}, "
            f"{format_utc_timestamp(report.after_end)}]"
        ),
        (
            "Snapshots used: "
            + ", ".join(format_utc_timestamp(ts) for ts in report.snapshot_times)
        ),
        "",
    ]
    for comp in report.comparisons():
        lines.extend(_markdown_cohort(comp))
    if report.notes:
        lines.append("Notes:")
        lines.extend(f"- {note}" for note in report.notes)
        lines.append("")
    return "\n".join(lines)


def report_to_json(report: CompositionReport) -> str:
    def window(stats: CohortWindowStats) -> dict:
        return {
            "cohort_size": stats.cohort_size,
            "classified": stats.classified,
            "female": stats.female,
            "female_share": stats.female_share,
            "drops": {r.value: stats.drops.get(r, 0) for r in _DROP_ORDER},
        }

    def comparison(comp: CohortComparison) -> dict:
        out = {
            "cohort": comp.cohort,
            "before": window(comp.before),
            "after": window(comp.after),
        }
        if comp.test is None:
            out["test"] = None
            out["degenerate_reason"] = comp.degenerate_reason
        else:
            out["test"] = {
                "z": comp.test.z,
                "p_two_sided": comp.test.p_two_sided,
                "pooled_p": comp.test.pooled_p,
            }
        return out

    return json.dumps(
        {
            "account": report.account,
            "before_start": format_utc_timestamp(report.before_start),
            "event_time": format_utc_timestamp(report.event_time),
            "after_end": format_utc_timestamp(report.after_end),
            "snapshot_times": [
                format_utc_timestamp(ts) for ts in report.snapshot_times
            ],
            "new_followers": comparison(report.new_followers),
            "unfollowers": comparison(report.unfollowers),
            "notes": list(report.notes),
        },
        indent=2,
        sort_keys=True,
    )


def render_report(report: CompositionReport, format: str = "markdown") -> str:
    """Render a report as 'csv', 'markdown', or 'json'; byte-deterministic."""
    if format == "csv":
        return render_csv(report)
    if format == "markdown":
        return render_markdown(report)
    if format == "json":
        return report_to_json(report)
    raise DataError(f"unknown report format {format!r}")
