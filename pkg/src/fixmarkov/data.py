"""Fixation records, per-subject sequences and dataset ingestion."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent fixation data."""


class ColourScheme(str, enum.Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"
    GRAYSCALE = "grayscale"

    @classmethod
    def parse(cls, token: str) -> "ColourScheme":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DataError(f"unknown colour scheme {token!r}") from None

    @property
    def short(self) -> str:
        return {"normal": "Norm", "abnormal": "Abno", "grayscale": "Gray"}[self.value]


class Orientation(str, enum.Enum):
    LANDSCAPE = "landscape"
    PORTRAIT = "portrait"

    @classmethod
    def parse(cls, token: str) -> "Orientation":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DataError(f"unknown orientation {token!r}") from None


COLUMNS = ("x", "y", "duration_ms", "fixation_index", "subject_id",
           "colour_scheme", "image_id", "orientation")


@dataclass(frozen=True)
class FixationRecord:
    x: float
    y: float
    duration_ms: float
    fixation_index: int
    subject_id: str
    colour_scheme: ColourScheme
    image_id: int
    orientation: Orientation = Orientation.LANDSCAPE

    def __post_init__(self):
        if not self.duration_ms > 0:
            raise DataError(f"non-positive duration {self.duration_ms}")
        if self.fixation_index < 1:
            raise DataError(f"fixation index must be >= 1, got {self.fixation_index}")


@dataclass(frozen=True)
class IngestConfig:
    """How a fixation table is laid out on disk.

    ``delimiter`` is ``","`` or ``None`` for runs of whitespace.
    """

    delimiter: str | None = ","
    header: bool = False


def _split(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return line.split()
    return [f.strip() for f in line.split(delimiter)]


def _parse_row(fields: list[str], lineno: int) -> FixationRecord:
    if len(fields) != len(COLUMNS):
        raise DataError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")

    def num(name, raw, kind):
        try:
            return kind(raw)
        except ValueError:
            raise DataError(f"line {lineno}: bad {name} field {raw!r}") from None

    x = num("x", fields[0], float)
    y = num("y", fields[1], float)
    duration = num("duration_ms", fields[2], float)
    index = num("fixation_index", fields[3], int)
    image = num("image_id", fields[6], int)
    if not np.isfinite([x, y, duration]).all():
        raise DataError(f"line {lineno}: non-finite numeric field")
    if duration <= 0:
        raise DataError(f"non-positive duration at line {lineno}")
    if index < 1:
        raise DataError(f"line {lineno}: bad fixation_index field {fields[3]!r}")
    if image < 1:
        raise DataError(f"line {lineno}: bad image_id field {fields[6]!r}")
    if not fields[4]:
        raise DataError(f"line {lineno}: empty subject_id field")
    try:
        scheme = ColourScheme.parse(fields[5])
        orientation = Orientation.parse(fields[7])
    except DataError as exc:
        raise DataError(f"line {lineno}: {exc}") from None
    return FixationRecord(x, y, duration, index, fields[4], scheme, image, orientation)


def parse_records(stream: IO[str] | Iterable[str], config: IngestConfig = IngestConfig()) -> list[FixationRecord]:
    """Parse a delimited fixation table (Table-1 column order) into records.

    Blank lines and lines starting with ``#`` are skipped. Errors carry the
    1-based line number of the offending row.
    """
    records = []
    header_pending = config.header
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header_pending:
            header_pending = False
            continue
        records.append(_parse_row(_split(line, config.delimiter), lineno))
    return records


def format_record(record: FixationRecord, config: IngestConfig = IngestConfig()) -> str:
    fields = [repr(record.x), repr(record.y), repr(record.duration_ms),
              str(record.fixation_index), record.subject_id,
              record.colour_scheme.value, str(record.image_id), record.orientation.value]
    return (config.delimiter or " ").join(fields)


def write_records(records: Iterable[FixationRecord], stream: IO[str],
                  config: IngestConfig = IngestConfig()) -> None:
    if config.header:
        stream.write((config.delimiter or " ").join(COLUMNS) + "\n")
    for rec in records:
        stream.write(format_record(rec, config) + "\n")


@dataclass(frozen=True, eq=False)
class FixationSequence:
    """Ordered fixations of one subject on one image."""

    subject_id: str
    image_id: int
    colour_scheme: ColourScheme
    points: np.ndarray
    durations: np.ndarray
    fixation_indices: tuple[int, ...] = ()
    orientation: Orientation = Orientation.LANDSCAPE

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        durations = np.asarray(self.durations, dtype=float).reshape(-1)
        if len(points) == 0:
            raise DataError("a fixation sequence needs at least one point")
        if len(points) != len(durations):
            raise DataError("points and durations differ in length")
        indices = tuple(int(i) for i in self.fixation_indices) or tuple(range(1, len(points) + 1))
        if len(indices) != len(points) or any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError("fixation indices must be strictly increasing and match the points")
        points.flags.writeable = False
        durations.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "fixation_indices", indices)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, FixationSequence):
            return NotImplemented
        return (self.key == other.key and self.colour_scheme == other.colour_scheme
                and self.orientation == other.orientation
                and self.fixation_indices == other.fixation_indices
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.durations, other.durations))

    __hash__ = object.__hash__

    @property
    def key(self) -> tuple[str, int]:
        return (self.subject_id, self.image_id)

    def records(self) -> Iterator[FixationRecord]:
        for (x, y), d, i in zip(self.points, self.durations, self.fixation_indices):
            yield FixationRecord(float(x), float(y), float(d), i, self.subject_id,
                                 self.colour_scheme, self.image_id, self.orientation)


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[FixationSequence, ...] = ()
    _by_key: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seqs = tuple(sorted(self.sequences, key=lambda s: (s.image_id, s.colour_scheme.value, s.subject_id)))
        by_key = {}
        for seq in seqs:
            if seq.key in by_key:
                raise DataError(f"subject {seq.subject_id!r} has two sequences for image {seq.image_id}")
            by_key[seq.key] = seq
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "_by_key", by_key)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[FixationSequence]:
        return iter(self.sequences)

    def get(self, subject_id: str, image_id: int) -> FixationSequence | None:
        return self._by_key.get((subject_id, image_id))

    def select(self, image_id: int | None = None, scheme: ColourScheme | None = None,
               subject_id: str | None = None) -> list[FixationSequence]:
        return [s for s in self.sequences
                if (image_id is None or s.image_id == image_id)
                and (scheme is None or s.colour_scheme == scheme)
                and (subject_id is None or s.subject_id == subject_id)]

    def subjects(self, image_id: int | None = None, scheme: ColourScheme | None = None) -> list[str]:
        return sorted({s.subject_id for s in self.select(image_id, scheme)})

    @property
    def images(self) -> list[int]:
        return sorted({s.image_id for s in self.sequences})

    @property
    def schemes(self) -> list[ColourScheme]:
        present = {s.colour_scheme for s in self.sequences}
        return [c for c in ColourScheme if c in present]

    def groups(self) -> list[tuple[int, ColourScheme]]:
        """Every (image, scheme) pair present, in canonical order."""
        return sorted({(s.image_id, s.colour_scheme) for s in self.sequences},
                      key=lambda g: (g[0], list(ColourScheme).index(g[1])))

    def records(self) -> Iterator[FixationRecord]:
        for seq in self.sequences:
            yield from seq.records()

    def merge(self, other: "Dataset") -> "Dataset":
        return Dataset(self.sequences + other.sequences)

    def to_json(self) -> dict:
        images: dict = {}
        for seq in self.sequences:
            by_scheme = images.setdefault(str(seq.image_id), {})
            by_subject = by_scheme.setdefault(seq.colour_scheme.value, {})
            by_subject[seq.subject_id] = {
                "orientation": seq.orientation.value,
                "fixation_indices": list(seq.fixation_indices),
                "points": seq.points.tolist(),
                "durations": seq.durations.tolist(),
            }
        return {"images": images}

    @classmethod
    def from_json(cls, payload: dict) -> "Dataset":
        seqs = []
        for image, by_scheme in payload["images"].items():
            for scheme, by_subject in by_scheme.items():
                for subject, body in by_subject.items():
                    seqs.append(FixationSequence(
                        subject_id=subject,
                        image_id=int(image),
                        colour_scheme=ColourScheme.parse(scheme),
                        points=np.asarray(body["points"], dtype=float).reshape(-1, 2),
                        durations=body["durations"],
                        fixation_indices=tuple(body.get("fixation_indices", ())),
                        orientation=Orientation.parse(body.get("orientation", "landscape")),
                    ))
        return cls(tuple(seqs))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def group_sequences(records: Iterable[FixationRecord]) -> Dataset:
    """Partition records by (subject, image), ordering each group by fixation index."""
    groups: dict[tuple[str, int], list[FixationRecord]] = {}
    for rec in records:
        groups.setdefault((rec.subject_id, rec.image_id), []).append(rec)

    seqs = []
    for (subject, image), recs in groups.items():
        recs.sort(key=lambda r: r.fixation_index)
        for a, b in zip(recs, recs[1:]):
            if a.fixation_index == b.fixation_index:
                raise DataError(f"duplicate fixation (subject={subject}, image={image}, "
                                f"index={a.fixation_index})")
        schemes = {r.colour_scheme for r in recs}
        if len(schemes) > 1:
            raise DataError(f"subject {subject!r} on image {image} has mixed colour schemes")
        seqs.append(FixationSequence(
            subject_id=subject,
            image_id=image,
            colour_scheme=recs[0].colour_scheme,
            points=np.array([[r.x, r.y] for r in recs]),
            durations=np.array([r.duration_ms for r in recs]),
            fixation_indices=tuple(r.fixation_index for r in recs),
            orientation=recs[0].orientation,
        ))
    return Dataset(tuple(seqs))


def split_train_test(dataset: Dataset, image_id: int, scheme: ColourScheme,
                     test_subject: str) -> tuple[list[FixationSequence], FixationSequence]:
    """Hold out one subject's sequence for (image, scheme); the rest is training data."""
    pool = dataset.select(image_id, scheme)
    test = [s for s in pool if s.subject_id == test_subject]
    if not test:
        raise DataError(f"no sequence for subject {test_subject!r} on image {image_id} ({scheme.value})")
    train = [s for s in pool if s.subject_id != test_subject]
    return train, test[0]


def read_table(path, config: IngestConfig = IngestConfig()) -> Dataset:
    with open(path) as fh:
        return group_sequences(parse_records(fh, config))
