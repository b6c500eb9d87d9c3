"""Follower-ID snapshots: parse, validate, persist, and diff.

A snapshot file is line-oriented UTF-8: line 1 is the header
``account=<handle> ts=<ISO-8601 UTC>``, every following line is one decimal
follower ID. Lines starting with ``#`` are comments. Files ending in ``.gz``
are gzip-compressed variants of the same format.
"""
from __future__ import annotations

import gzip
import io
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Union

from .errors import DataError, InvariantError

MAX_FOLLOWER_ID = 2**64 - 1

_HEADER_RE = re.compile(r"^account=(\S+) ts=(\S+)$")


class SnapshotFormatError(DataError):
    """A snapshot file violates the line-oriented format."""

    def __init__(self, path: Union[str, Path], line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class MalformedHeader(SnapshotFormatError):
    pass


class MalformedId(SnapshotFormatError):
    pass


class AccountMismatch(DataError):
    pass


class NonIncreasingTimestamps(DataError):
    pass


def parse_utc_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 instant and normalize it to whole-second UTC."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise DataError(f"invalid timestamp {text!r}: {exc}") from None
    if ts.tzinfo is None:
        raise DataError(f"timestamp {text!r} lacks a UTC offset")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_utc_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class FollowerSnapshot:
    """An account's follower-ID set captured at one instant.

    ``duplicate_warnings`` counts ID lines that repeated an already-seen ID
    while parsing; it is diagnostic only and excluded from equality.
    """

    account: str
    captured_at: datetime
    follower_ids: frozenset[int]
    duplicate_warnings: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.account:
            raise DataError("snapshot account handle is empty")
        if self.captured_at.tzinfo is None:
            raise DataError("captured_at must be timezone-aware UTC")
        if self.captured_at.microsecond != 0:
            object.__setattr__(
                self, "captured_at", self.captured_at.replace(microsecond=0)
            )
        if self.follower_ids:
            lo, hi = min(self.follower_ids), max(self.follower_ids)
            if lo < 0 or hi > MAX_FOLLOWER_ID:
                raise DataError("follower ID outside unsigned 64-bit range")

    def __len__(self) -> int:
        return len(self.follower_ids)


@dataclass(frozen=True)
class SnapshotSeries:
    """Snapshots of one account, strictly increasing in capture time."""

    account: str
    snapshots: tuple[FollowerSnapshot, ...]

    def __post_init__(self):
        for snap in self.snapshots:
            if snap.account != self.account:
                raise AccountMismatch(
                    f"series for {self.account!r} contains snapshot of {snap.account!r}"
                )
        for prev, cur in zip(self.snapshots, self.snapshots[1:]):
            if cur.captured_at <= prev.captured_at:
                raise NonIncreasingTimestamps(
                    f"snapshots not strictly increasing at {format_utc_timestamp(cur.captured_at)}"
                )

    @classmethod
    def build(cls, snapshots: Iterable[FollowerSnapshot]) -> "SnapshotSeries":
        """Sort snapshots by capture time and validate them as a series."""
        snaps = sorted(snapshots, key=lambda s: s.captured_at)
        if not snaps:
            raise DataError("cannot build a series from zero snapshots")
        return cls(account=snaps[0].account, snapshots=tuple(snaps))

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass(frozen=True)
class ChurnRecord:
    """New-follower / unfollower / retained sets between two snapshots."""

    account: str
    window_start: datetime
    window_end: datetime
    new_followers: frozenset[int]
    unfollowers: frozenset[int]
    retained: frozenset[int]

    def __post_init__(self):
        if self.new_followers & self.unfollowers:
            raise InvariantError("new_followers and unfollowers overlap")
        if self.retained & self.new_followers:
            raise InvariantError("retained and new_followers overlap")
        if self.retained & self.unfollowers:
            raise InvariantError("retained and unfollowers overlap")

    @property
    def before_size(self) -> int:
        return len(self.retained) + len(self.unfollowers)

    @property
    def after_size(self) -> int:
        return len(self.retained) + len(self.new_followers)


def _open_text(path: Path) -> io.TextIOWrapper:
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def parse_snapshot(path: Union[str, Path]) -> FollowerSnapshot:
    """Parse one snapshot file.

    Duplicate ID lines are deduplicated and counted in
    ``duplicate_warnings`` rather than treated as errors; real crawls
    contain retries. Every other malformation raises a named error.
    """
    path = Path(path)
    ids: set[int] = set()
    duplicates = 0
    with _open_text(path) as fh:
        header = fh.readline()
        if not header:
            raise MalformedHeader(path, 1, "empty file: missing header")
        m = _HEADER_RE.match(header.rstrip("\n"))
        if m is None:
            raise MalformedHeader(path, 1, f"bad header {header.rstrip()!r}")
        account = m.group(1)
        try:
            captured_at = parse_utc_timestamp(m.group(2))
        except DataError as exc:
            raise MalformedHeader(path, 1, str(exc)) from None
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if line.startswith("#"):
                continue
            if not (line.isascii() and line.isdigit()):
                raise MalformedId(path, line_no, f"not a decimal ID: {line!r}")
            fid = int(line)
            if fid > MAX_FOLLOWER_ID:
                raise MalformedId(path, line_no, f"ID {fid} exceeds 64 bits")
            if fid in ids:
                duplicates += 1
            else:
                ids.add(fid)
    return FollowerSnapshot(
        account=account,
        captured_at=captured_at,
        follower_ids=frozenset(ids),
        duplicate_warnings=duplicates,
    )


def write_snapshot(snapshot: FollowerSnapshot, path: Union[str, Path]) -> None:
    """Write a snapshot in canonical form (IDs ascending); round-trips exactly."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(
        f"account={snapshot.account} ts={format_utc_timestamp(snapshot.captured_at)}\n"
    )
    for fid in sorted(snapshot.follower_ids):
        buf.write(f"{fid}\n")
    data = buf.getvalue().encode("utf-8")
    if path.suffix == ".gz":
        # pin mtime and omit the name field so identical snapshots produce
        # identical bytes regardless of path or time
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as fh:
                fh.write(data)
    else:
        path.write_bytes(data)


def diff(before: FollowerSnapshot, after: FollowerSnapshot) -> ChurnRecord:
    """Set-difference two snapshots of the same account into a churn record."""
    if before.account != after.account:
        raise AccountMismatch(
            f"cannot diff {before.account!r} against {after.account!r}"
        )
    if after.captured_at <= before.captured_at:
        raise NonIncreasingTimestamps(
            "after snapshot must be captured strictly later than before snapshot"
        )
    return ChurnRecord(
        account=before.account,
        window_start=before.captured_at,
        window_end=after.captured_at,
        new_followers=frozenset(after.follower_ids - before.follower_ids),
        unfollowers=frozenset(before.follower_ids - after.follower_ids),
        retained=frozenset(before.follower_ids & after.follower_ids),
    )
