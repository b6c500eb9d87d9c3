"""Key-value run configuration for the end-to-end analysis."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Union

from ..errors import DataError, UsageError
from ..imageprep import SIZE_THRESHOLD_BYTES
from ..snapshots import parse_utc_timestamp


def read_kv_config(path: Union[str, Path]) -> dict[str, str]:
    """Parse a `key = value` file; `#` starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything run_analysis needs: account, windows, paths, thresholds, seed."""

    account: str
    before_start: datetime
    event_time: datetime
    after_end: datetime
    snapshots_dir: Path
    manifest_path: Path
    model_path: Path
    lexicon_male: Optional[Path] = None
    lexicon_female: Optional[Path] = None
    image_byte_threshold: int = SIZE_THRESHOLD_BYTES
    probability_floor: float = 0.5
    filter_on: str = "source"
    seed: int = 0

    def __post_init__(self):
        if not (self.before_start < self.event_time < self.after_end):
            raise UsageError(
                "window boundaries must satisfy before_start < event_time < after_end"
            )
        if not (0.5 <= self.probability_floor < 1.0):
            raise UsageError("probability_floor must be in [0.5, 1)")
        if self.filter_on not in ("source", "crop"):
            raise UsageError("filter_on must be 'source' or 'crop'")
        if self.image_byte_threshold < 0:
            raise UsageError("image_byte_threshold must be >= 0")

    @classmethod
    def from_mapping(
        cls, values: Mapping[str, str], base_dir: Union[str, Path, None] = None
    ) -> "AnalysisConfig":
        base = Path(base_dir) if base_dir is not None else Path(".")

        def need(key: str) -> str:
            if key not in values:
                raise UsageError(f"analysis config missing required key {key!r}")
            return values[key]

        def path_of(key: str) -> Path:
            raw = Path(need(key))
            return raw if raw.is_absolute() else base / raw

        def opt_path(key: str) -> Optional[Path]:
            if key not in values:
                return None
            raw = Path(values[key])
            return raw if raw.is_absolute() else base / raw

        try:
            threshold = int(values.get("image_byte_threshold", SIZE_THRESHOLD_BYTES))
            floor = float(values.get("probability_floor", 0.5))
            seed = int(values.get("seed", 0))
        except ValueError as exc:
            raise UsageError(f"bad numeric config value: {exc}") from None
        return cls(
            account=need("account"),
            before_start=parse_utc_timestamp(need("before_start")),
            event_time=parse_utc_timestamp(need("event_time")),
            after_end=parse_utc_timestamp(need("after_end")),
            snapshots_dir=path_of("snapshots"),
            manifest_path=path_of("manifest"),
            model_path=path_of("model"),
            lexicon_male=opt_path("lexicon_male"),
            lexicon_female=opt_path("lexicon_female"),
            image_byte_threshold=threshold,
            probability_floor=floor,
            filter_on=values.get("filter_on", "source"),
            seed=seed,
        )

    @classmethod
    def from_file(
        cls,
        path: Union[str, Path],
        overrides: Optional[Mapping[str, str]] = None,
    ) -> "AnalysisConfig":
        """Load a config file; relative paths resolve against the file's directory."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        values = read_kv_config(path)
        if overrides:
            values.update(overrides)
        return cls.from_mapping(values, base_dir=path.parent)
