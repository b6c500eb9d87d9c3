"""Weak gender labels from display names, and balanced training-set construction.

Labels are "weak" because they come from a given-name lexicon rather than
human annotation: a display name whose given name appears in the male list
is labeled Male, in the female list Female, and anything else Unknown.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, TypeVar, Union

import numpy as np

from .errors import DataError

T = TypeVar("T")

# Small built-in starter lexicon; real runs should point at fuller lists.
DEFAULT_MALE_NAMES = ("james", "john", "luke", "michael")
DEFAULT_FEMALE_NAMES = ("caroline", "elizabeth", "emily", "isabella", "maria")


class WeakLabel(Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class AmbiguousLexicon(DataError):
    """A name appears in both the male and the female list."""


class EmptyLabelClass(DataError):
    """A balanced set needs at least one item of each gender."""


def _load_name_file(path: Union[str, Path]) -> frozenset[str]:
    names = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        name = line.strip().casefold()
        if name:
            names.add(name)
    return frozenset(names)


@dataclass(frozen=True)
class NameLexicon:
    """Disjoint case-folded male and female given-name sets."""

    male_names: frozenset[str]
    female_names: frozenset[str]

    def __post_init__(self):
        overlap = self.male_names & self.female_names
        if overlap:
            sample = ", ".join(sorted(overlap)[:5])
            raise AmbiguousLexicon(
                f"{len(overlap)} name(s) appear in both lists (e.g. {sample})"
            )

    @classmethod
    def default(cls) -> "NameLexicon":
        return cls(
            male_names=frozenset(DEFAULT_MALE_NAMES),
            female_names=frozenset(DEFAULT_FEMALE_NAMES),
        )

    @classmethod
    def from_files(
        cls, male_path: Union[str, Path], female_path: Union[str, Path]
    ) -> "NameLexicon":
        return cls(
            male_names=_load_name_file(male_path),
            female_names=_load_name_file(female_path),
        )


def given_name_token(display_name: str) -> str:
    """Extract the case-folded given name from a display name.

    Takes the first whitespace-delimited token, strips non-letter edge
    characters, and truncates at the first remaining non-letter so handles
    like ``"emily_r"`` or ``"john.doe"`` yield the bare given name.
    """
    parts = display_name.split()
    if not parts:
        return ""
    token = parts[0].casefold()
    start, end = 0, len(token)
    while start < end and not token[start].isalpha():
        start += 1
    while end > start and not token[end - 1].isalpha():
        end -= 1
    token = token[start:end]
    for i, ch in enumerate(token):
        if not ch.isalpha():
            return token[:i]
    return token


def weak_label(display_name: str, lexicon: NameLexicon) -> WeakLabel:
    """Label a display name by given-name lookup. Total: never raises."""
    token = given_name_token(display_name)
    if token in lexicon.male_names:
        return WeakLabel.MALE
    if token in lexicon.female_names:
        return WeakLabel.FEMALE
    return WeakLabel.UNKNOWN


def build_balanced_set(
    pool: Sequence[tuple[T, WeakLabel]], seed: int
) -> list[tuple[T, WeakLabel]]:
    """Drop Unknowns and downsample the majority class to an exact 1:1 ratio.

    The majority class is subsampled uniformly at random (seeded); the
    result is a subsequence of the input pool, so relative order is kept
    and the same seed always yields the same output.
    """
    male_idx = [i for i, (_, lab) in enumerate(pool) if lab is WeakLabel.MALE]
    female_idx = [i for i, (_, lab) in enumerate(pool) if lab is WeakLabel.FEMALE]
    if not male_idx:
        raise EmptyLabelClass("no male-labeled items in pool")
    if not female_idx:
        raise EmptyLabelClass("no female-labeled items in pool")

    k = min(len(male_idx), len(female_idx))
    rng = np.random.default_rng(seed)

    def downsample(idx: list[int]) -> list[int]:
        if len(idx) == k:
            return idx
        chosen = rng.choice(len(idx), size=k, replace=False)
        return [idx[i] for i in sorted(chosen)]

    keep = sorted(downsample(male_idx) + downsample(female_idx))
    return [pool[i] for i in keep]
