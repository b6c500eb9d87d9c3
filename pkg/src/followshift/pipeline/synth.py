"""Deterministic synthetic dataset generator for desk-scale verification.

Generates three follower snapshots with planted churn, one profile image
per cohort member whose gender is encoded as a geometric pattern (bright
upper half = female, bright lower half = male) plus seeded pixel noise,
display names drawn from the gendered name pools, and a ready-to-run
analysis config. Everything is a pure function of (seed, spec): the same
seed reproduces the dataset byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

from ..errors import DataError
from ..imageprep import FaceBox, ManifestEntry, write_manifest
from ..snapshots import FollowerSnapshot, format_utc_timestamp, write_snapshot
from ..weaklabel import DEFAULT_FEMALE_NAMES, DEFAULT_MALE_NAMES, WeakLabel
from .datafiles import write_profiles

_FAMILY_NAMES = ("brook", "fox", "frost", "hill", "lane", "rivers", "stone", "vale")

BRIGHT = 220
DARK = 35

# cohort keys, in generation order
NEW_BEFORE = "new_before"
NEW_AFTER = "new_after"
UNFOLLOW_BEFORE = "unfollow_before"
UNFOLLOW_AFTER = "unfollow_after"
COHORTS = (NEW_BEFORE, NEW_AFTER, UNFOLLOW_BEFORE, UNFOLLOW_AFTER)


@dataclass(frozen=True)
class SyntheticSpec:
    """Sizes, planted female fractions, and image noise for one dataset."""

    account: str = "alpha"
    retained: int = 200
    new_before: int = 500
    new_after: int = 500
    unfollow_before: int = 50
    unfollow_after: int = 50
    female_frac_new_before: float = 0.5
    female_frac_new_after: float = 0.5
    female_frac_unfollow_before: float = 0.5
    female_frac_unfollow_after: float = 0.5
    noise_level: float = 0.0  # pixel noise stddev on the 0..255 scale, /255
    image_side: int = 28
    start_time: datetime = datetime(2021, 3, 1, tzinfo=timezone.utc)
    window_days: int = 7

    def __post_init__(self):
        for name in (
            "female_frac_new_before",
            "female_frac_new_after",
            "female_frac_unfollow_before",
            "female_frac_unfollow_after",
        ):
            frac = getattr(self, name)
            if not (0.0 <= frac <= 1.0):
                raise DataError(f"{name} must be in [0, 1], got {frac}")
        if self.noise_level < 0.0:
            raise DataError("noise_level must be >= 0")
        if self.image_side < 2:
            raise DataError("image_side must be >= 2")
        if min(self.new_before, self.new_after, self.unfollow_before, self.unfollow_after) < 0:
            raise DataError("cohort sizes must be >= 0")
        if self.retained < 0:
            raise DataError("retained must be >= 0")

    def cohort_size(self, cohort: str) -> int:
        return getattr(self, cohort)

    def female_frac(self, cohort: str) -> float:
        return getattr(self, f"female_frac_{cohort}")


@dataclass(frozen=True)
class SyntheticDataset:
    """Paths of one generated dataset."""

    root: Path
    account: str
    snapshot_paths: tuple[Path, Path, Path]
    manifest_path: Path
    profiles_path: Path
    truth_path: Path
    lexicon_male: Path
    lexicon_female: Path
    config_path: Path
    images_dir: Path
    boundaries: tuple[datetime, datetime, datetime]


def _member_rng(seed: int, user_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, user_id])


def gender_pattern(side: int, label: WeakLabel) -> np.ndarray:
    """Noise-free base image for a planted gender."""
    img = np.full((side, side, 3), DARK, dtype=np.float64)
    half = side // 2
    if label is WeakLabel.FEMALE:
        img[:half, :, :] = BRIGHT
    else:
        img[half:, :, :] = BRIGHT
    return img


def member_image(
    seed: int, user_id: int, label: WeakLabel, side: int, noise_level: float
) -> np.ndarray:
    """Deterministic uint8 image for one member; depends only on the arguments."""
    base = gender_pattern(side, label)
    if noise_level > 0.0:
        noise = _member_rng(seed, user_id).normal(0.0, noise_level * 255.0, base.shape)
        base = base + noise
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


def member_display_name(seed: int, user_id: int, label: WeakLabel) -> str:
    rng = _member_rng(seed, user_id + 1_000_000_000)
    pool = DEFAULT_FEMALE_NAMES if label is WeakLabel.FEMALE else DEFAULT_MALE_NAMES
    given = pool[int(rng.integers(len(pool)))]
    family = _FAMILY_NAMES[int(rng.integers(len(_FAMILY_NAMES)))]
    return f"{given.capitalize()} {family.capitalize()}"


def planted_genders(
    seed: int, cohort: str, members: Sequence[int], frac: float
) -> dict[int, WeakLabel]:
    """Assign genders: the first round(frac*n) of a seeded permutation are female.

    Raising ``frac`` with the seed fixed only ever flips members from male
    to female, so planted female counts are monotone in the fraction.
    """
    n = len(members)
    k = int(round(frac * n))
    rng = np.random.default_rng([seed, COHORTS.index(cohort) + 1])
    order = rng.permutation(n)
    female_positions = set(int(i) for i in order[:k])
    return {
        uid: (WeakLabel.FEMALE if i in female_positions else WeakLabel.MALE)
        for i, uid in enumerate(members)
    }


def gen_synthetic(
    seed: int, spec: SyntheticSpec, out_dir: Union[str, Path]
) -> SyntheticDataset:
    """Write a complete synthetic dataset under out_dir and return its paths."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {root}: {exc}") from None
    (root / "snapshots").mkdir(exist_ok=True)
    (root / "images").mkdir(exist_ok=True)
    (root / "lexicon").mkdir(exist_ok=True)

    # disjoint ID pools; cohort membership drives the three snapshots
    next_id = 1

    def take(n: int) -> list[int]:
        nonlocal next_id
        ids = list(range(next_id, next_id + n))
        next_id += n
        return ids

    retained = take(spec.retained)
    members = {cohort: take(spec.cohort_size(cohort)) for cohort in COHORTS}

    t0 = spec.start_time
    t1 = t0 + timedelta(days=spec.window_days)
    t2 = t1 + timedelta(days=spec.window_days)

    sets = {
        t0: retained + members[UNFOLLOW_BEFORE] + members[UNFOLLOW_AFTER],
        t1: retained + members[UNFOLLOW_AFTER] + members[NEW_BEFORE],
        t2: retained + members[NEW_BEFORE] + members[NEW_AFTER],
    }
    snapshot_paths = []
    for idx, (ts, ids) in enumerate(sets.items()):
        snap = FollowerSnapshot(
            account=spec.account, captured_at=ts, follower_ids=frozenset(ids)
        )
        path = root / "snapshots" / f"{spec.account}_t{idx}.snap"
        write_snapshot(snap, path)
        snapshot_paths.append(path)

    genders: dict[int, WeakLabel] = {}
    cohort_of: dict[int, str] = {}
    for cohort in COHORTS:
        assigned = planted_genders(
            seed, cohort, members[cohort], spec.female_frac(cohort)
        )
        genders.update(assigned)
        for uid in members[cohort]:
            cohort_of[uid] = cohort

    manifest_entries = []
    profile_rows = []
    truth_rows = []
    box = FaceBox(x=0, y=0, w=spec.image_side, h=spec.image_side)
    for uid in sorted(genders):
        label = genders[uid]
        pixels = member_image(seed, uid, label, spec.image_side, spec.noise_level)
        rel_path = f"images/{uid}.png"
        image_path = root / rel_path
        Image.fromarray(pixels).save(image_path, format="PNG", compress_level=1)
        manifest_entries.append(
            ManifestEntry(
                user_id=uid,
                image_path=rel_path,
                byte_size=image_path.stat().st_size,
                boxes=(box,),
            )
        )
        profile_rows.append((uid, member_display_name(seed, uid, label)))
        truth_rows.append((uid, label.value, cohort_of[uid]))

    manifest_path = root / "manifest.csv"
    write_manifest(manifest_entries, manifest_path)
    profiles_path = root / "profiles.csv"
    write_profiles(profiles_path, profile_rows)

    truth_path = root / "truth.csv"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("user_id,gender,cohort\n")
        for uid, gender, cohort in truth_rows:
            fh.write(f"{uid},{gender},{cohort}\n")

    lexicon_male = root / "lexicon" / "male.txt"
    lexicon_female = root / "lexicon" / "female.txt"
    lexicon_male.write_text("\n".join(DEFAULT_MALE_NAMES) + "\n", encoding="utf-8")
    lexicon_female.write_text("\n".join(DEFAULT_FEMALE_NAMES) + "\n", encoding="utf-8")

    config_path = root / "analysis.cfg"
    config_path.write_text(
        "# generated synthetic analysis configuration\n"
        f"account = {spec.account}\n"
        f"before_start = {format_utc_timestamp(t0)}\n"
        f"event_time = {format_utc_timestamp(t1)}\n"
        f"after_end = {format_utc_timestamp(t2)}\n"
        "snapshots = snapshots\n"
        "manifest = manifest.csv\n"
        "model = model.cnnw\n"
        "lexicon_male = lexicon/male.txt\n"
        "lexicon_female = lexicon/female.txt\n"
        # synthetic images are tiny; keep them all
        "image_byte_threshold = 1\n"
        "probability_floor = 0.5\n"
        "filter_on = source\n"
        f"seed = {seed}\n",
        encoding="utf-8",
    )

    return SyntheticDataset(
        root=root,
        account=spec.account,
        snapshot_paths=tuple(snapshot_paths),
        manifest_path=manifest_path,
        profiles_path=profiles_path,
        truth_path=truth_path,
        lexicon_male=lexicon_male,
        lexicon_female=lexicon_female,
        config_path=config_path,
        images_dir=root / "images",
        boundaries=(t0, t1, t2),
    )


def read_truth(path: Union[str, Path]) -> dict[int, tuple[WeakLabel, str]]:
    """Load the planted ground truth: user_id -> (gender, cohort)."""
    out: dict[int, tuple[WeakLabel, str]] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "user_id,gender,cohort":
        raise DataError(f"{path}: not a truth file")
    for line in lines[1:]:
        if not line:
            continue
        uid, gender, cohort = line.split(",")
        out[int(uid)] = (WeakLabel(gender), cohort)
    return out
