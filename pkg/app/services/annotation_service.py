"""
NFBL / emotion annotations: registry, document parsing and serialization,
dataset statistics and benchmark split construction.

Annotation document (JSON Lines, version 1):

    {"schema": "eald-annotations", "version": 1}
    {"video_id": "v001", "emotion": "negative", "duration_s": 421.2,
     "fps": 32, "clips": [{"class_id": "N9", "start_s": 12.0,
     "end_s": 15.5}]}

Line 1 is the header, every following non-blank line is one video.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core import app_config
from app.core.errors import (InsufficientDataError, ParseError,
                             UnknownClassError)
from app.schemas.annotation_schema import (DatasetSplit, DatasetSummary,
                                           Emotion, NfblCategory, NfblClass,
                                           NfblClip, VideoRecord)

logger = logging.getLogger(__name__)

SCHEMA_NAME = "eald-annotations"
SCHEMA_VERSION = 1
DEFAULT_TRAIN_PER_CLASS = 36
DEFAULT_TEST_PER_CLASS = 37


# Registry
class NfblRegistry:
    """Lookup of NFBL classes by id, in numeric id order."""

    def __init__(self, classes: Iterable[NfblClass]):
        self._classes: Dict[str, NfblClass] = {}
        for cls in classes:
            if cls.id in self._classes:
                raise ParseError(f"duplicate NFBL class {cls.id}")
            self._classes[cls.id] = cls
        self._order = sorted(self._classes, key=lambda i: int(i[1:]))

    def __contains__(self, class_id: str) -> bool:
        return class_id in self._classes

    def __len__(self) -> int:
        return len(self._classes)

    @property
    def ids(self) -> List[str]:
        return list(self._order)

    def get(self, class_id: str) -> NfblClass:
        try:
            return self._classes[class_id]
        except KeyError:
            raise UnknownClassError(f"unknown NFBL class {class_id!r}") \
                from None

    def name(self, class_id: str) -> str:
        return self.get(class_id).name


def load_registry(path: Union[str, Path]) -> NfblRegistry:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return NfblRegistry(NfblClass(**item) for item in data["classes"])
    except (KeyError, TypeError, ValidationError) as e:
        raise ParseError(f"bad NFBL registry {path}: {e}") from None


@lru_cache(maxsize=1)
def default_registry() -> NfblRegistry:
    return load_registry(app_config.ASSETS_DIR / "nfbl_classes.json")


# Parsing / serialization
def parse_annotations(source: Union[str, Iterable[str]],
                      registry: Optional[NfblRegistry] = None
                      ) -> List[VideoRecord]:
    """Parse an annotation document; errors carry line and video id."""
    registry = registry or default_registry()
    lines = source.splitlines() if isinstance(source, str) else source
    records: List[VideoRecord] = []
    seen = set()
    header_seen = False

    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=number) from None

        if not header_seen:
            if not isinstance(data, dict) or \
                    data.get("schema") != SCHEMA_NAME:
                raise ParseError(f"missing {SCHEMA_NAME!r} header",
                                 line=number)
            if data.get("version") != SCHEMA_VERSION:
                raise ParseError(
                    f"unsupported schema version {data.get('version')!r}",
                    line=number)
            header_seen = True
            continue

        record_id = data.get("video_id") if isinstance(data, dict) else None
        try:
            record = VideoRecord.model_validate(data)
        except ValidationError as e:
            err = e.errors()[0]
            where = ".".join(str(p) for p in err["loc"])
            raise ParseError(f"{where}: {err['msg']}" if where else err["msg"],
                             line=number, record=record_id) from None
        for clip in record.clips:
            if clip.class_id not in registry:
                raise UnknownClassError(
                    f"line {number}, record {record.video_id!r}: unknown "
                    f"NFBL class {clip.class_id!r}")
        if record.video_id in seen:
            raise ParseError("duplicate video id", line=number,
                             record=record.video_id)
        seen.add(record.video_id)
        records.append(record)

    if not header_seen:
        raise ParseError("empty annotation document")
    logger.debug("parsed %d videos", len(records))
    return records


def load_annotations(path: Union[str, Path],
                     registry: Optional[NfblRegistry] = None
                     ) -> List[VideoRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read annotations {path}: {e}") from None
    return parse_annotations(text, registry)


def serialize_annotations(records: Iterable[VideoRecord]) -> str:
    out = [json.dumps({"schema": SCHEMA_NAME, "version": SCHEMA_VERSION})]
    for record in records:
        data = record.model_dump(mode="json")
        data["clips"] = [
            {k: v for k, v in clip.items()
             if k != "video_id" and v is not None}
            for clip in data["clips"]
        ]
        out.append(json.dumps(data))
    return "\n".join(out) + "\n"


# Statistics
def all_clips(records: Iterable[VideoRecord]) -> List[NfblClip]:
    return [clip for record in records for clip in record.clips]


def nfbl_histogram(records: Iterable[VideoRecord],
                   registry: Optional[NfblRegistry] = None) -> Dict[str, int]:
    """Clip count per class id, every registry class present."""
    registry = registry or default_registry()
    counts = Counter(clip.class_id for clip in all_clips(records))
    return {class_id: counts.get(class_id, 0) for class_id in registry.ids}


def nfbl_category_histogram(records: Iterable[VideoRecord],
                            registry: Optional[NfblRegistry] = None
                            ) -> Dict[str, int]:
    registry = registry or default_registry()
    totals = {category.value: 0 for category in NfblCategory}
    for class_id, count in nfbl_histogram(records, registry).items():
        totals[registry.get(class_id).category.value] += count
    return totals


def histogram_rows(histogram: Dict[str, int],
                   registry: Optional[NfblRegistry] = None
                   ) -> List[Dict[str, object]]:
    """Plot-ready rows: class id, name, category, count."""
    registry = registry or default_registry()
    return [{"class_id": class_id,
             "name": registry.name(class_id),
             "category": registry.get(class_id).category.value,
             "count": count}
            for class_id, count in histogram.items()]


def dataset_summary(records: Sequence[VideoRecord]) -> DatasetSummary:
    clips = all_clips(records)
    total_s = float(sum(r.duration_s for r in records))
    labels = Counter(r.emotion.value for r in records)
    durations = [c.duration_s for c in clips]
    return DatasetSummary(
        video_count=len(records),
        clip_count=len(clips),
        total_hours=total_s / 3600.0,
        average_minutes=(total_s / len(records) / 60.0) if records else 0.0,
        label_counts={e.value: labels.get(e.value, 0) for e in Emotion},
        min_clip_s=min(durations) if durations else None,
        max_clip_s=max(durations) if durations else None,
    )


def render_summary(summary: DatasetSummary,
                   histogram: Dict[str, int],
                   registry: Optional[NfblRegistry] = None) -> str:
    registry = registry or default_registry()
    lines = [
        f"Number of videos        {summary.video_count}",
        f"Number of NFBL clips    {summary.clip_count}",
        f"Total duration          {summary.total_hours:.2f} hours",
        f"Average duration        {summary.average_minutes:.2f} mins",
        f"Labels                  "
        f"{summary.label_counts.get('negative', 0)} negative / "
        f"{summary.label_counts.get('positive', 0)} positive",
    ]
    if summary.min_clip_s is not None:
        lines.append(f"Clip duration range     {summary.min_clip_s:.2f}s - "
                     f"{summary.max_clip_s:.2f}s")
    lines.append("")
    lines.append("NFBL distribution")
    for row in histogram_rows(histogram, registry):
        lines.append(f"  {row['class_id']:<4} {row['count']:>6}  "
                     f"{row['name']} ({row['category']})")
    return "\n".join(lines) + "\n"


# Benchmark split
def split_dataset(records: Sequence[VideoRecord], seed: int,
                  train_per_class: int = DEFAULT_TRAIN_PER_CLASS,
                  test_per_class: int = DEFAULT_TEST_PER_CLASS
                  ) -> Tuple[List[VideoRecord], List[VideoRecord]]:
    """
    Class-balanced random split; the defaults give 72 (36/36) train and
    74 (37/37) test videos. Same seed, same split.
    """
    if train_per_class < 0 or test_per_class < 0:
        raise InsufficientDataError("split sizes must be nonnegative")
    needed = train_per_class + test_per_class
    rng = np.random.default_rng(seed)
    train: List[VideoRecord] = []
    test: List[VideoRecord] = []
    for emotion in (Emotion.NEGATIVE, Emotion.POSITIVE):
        pool = sorted((r for r in records if r.emotion is emotion),
                      key=lambda r: r.video_id)
        if len(pool) < needed:
            raise InsufficientDataError(
                f"need {needed} {emotion.value} videos, have {len(pool)}")
        order = rng.permutation(len(pool))
        train += [pool[i] for i in order[:train_per_class]]
        test += [pool[i] for i in order[train_per_class:needed]]
    key = (lambda r: r.video_id)
    return sorted(train, key=key), sorted(test, key=key)


def apply_split(records: Sequence[VideoRecord], split: DatasetSplit
                ) -> Tuple[List[VideoRecord], List[VideoRecord]]:
    """Resolve an explicit train/test id list against the records."""
    by_id = {r.video_id: r for r in records}
    missing = [v for v in split.train + split.test if v not in by_id]
    if missing:
        raise InsufficientDataError(
            f"split references unknown videos: {missing[:5]}")
    return [by_id[v] for v in split.train], [by_id[v] for v in split.test]


def load_split(path: Union[str, Path]) -> DatasetSplit:
    try:
        return DatasetSplit.model_validate_json(
            Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"cannot read split file {path}: {e}") from None
    except ValidationError as e:
        raise ParseError(f"bad split file {path}: {e.errors()[0]['msg']}") \
            from None


def to_split(train: Sequence[VideoRecord],
             test: Sequence[VideoRecord]) -> DatasetSplit:
    return DatasetSplit(train=[r.video_id for r in train],
                        test=[r.video_id for r in test])


# Synthetic data at full-dataset scale (the real media can't be shipped)
def synthetic_annotations(video_count: int = 275, clip_count: int = 16180,
                          negative_count: int = 74,
                          total_hours: float = 32.15, fps: float = 32.0,
                          seed: int = 0,
                          registry: Optional[NfblRegistry] = None
                          ) -> List[VideoRecord]:
    """Random records matching the published dataset totals exactly."""
    registry = registry or default_registry()
    rng = np.random.default_rng(seed)

    durations = rng.uniform(240.0, 600.0, size=video_count)
    durations *= total_hours * 3600.0 / durations.sum()
    durations = np.round(durations, 2)

    per_video = rng.multinomial(clip_count, durations / durations.sum())
    ids = registry.ids
    weights = np.ones(len(ids))
    for heavy, factor in (("N9", 12.0), ("N5", 9.0)):
        if heavy in registry:
            weights[ids.index(heavy)] = factor
    weights /= weights.sum()

    negative = rng.permutation(video_count) < negative_count

    records = []
    for i in range(video_count):
        duration = float(durations[i])
        video_id = f"v{i + 1:04d}"
        lengths = np.clip(rng.lognormal(0.5, 1.0, per_video[i]), 0.08,
                          min(184.5, duration / 2))
        starts = rng.uniform(0.0, duration - lengths - 0.01)
        classes = rng.choice(len(ids), size=per_video[i], p=weights)
        clips = [NfblClip(video_id=video_id, class_id=ids[c],
                          start_s=round(float(s), 2),
                          end_s=round(float(s), 2) + round(float(n), 2))
                 for s, n, c in zip(starts, lengths, classes)]
        clips.sort(key=lambda c: c.start_s)
        emotion = Emotion.NEGATIVE if negative[i] else Emotion.POSITIVE
        records.append(VideoRecord(video_id=video_id, emotion=emotion,
                                   duration_s=duration, fps=fps, clips=clips))
    return records
