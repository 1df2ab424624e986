"""Temporal event-log records: loading, splitting and run-length reshaping.

A dataset is a list of records grouped by entity (a patient, a weather
station, ...).  Each record carries one observed label, a fixed-length
vector of real predictors and a positive integer duration in time units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import SchemaError, ValidationError


class StateSegment(NamedTuple):
    state: int
    duration: int


@dataclass(frozen=True)
class Schema:
    """Column roles plus the observation alphabet."""

    feature_names: tuple[str, ...]
    alphabet: tuple[str, ...]
    entity_col: str = "entity"
    obs_col: str = "observation"
    duration_col: str = "duration"


@dataclass(frozen=True)
class TemporalRecord:
    entity_id: str
    seq_index: int
    observation: str
    predictors: tuple[float, ...]
    duration: int


@dataclass(frozen=True)
class TemporalDataset:
    schema: Schema
    records: tuple[TemporalRecord, ...]
    _entity_order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        order: dict[str, None] = {}
        last = None
        for rec in self.records:
            if rec.entity_id != last and rec.entity_id in order:
                raise ValidationError(f"records of entity {rec.entity_id!r} are not contiguous")
            order.setdefault(rec.entity_id, None)
            last = rec.entity_id
        object.__setattr__(self, "_entity_order", tuple(order))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def entities(self) -> tuple[str, ...]:
        return self._entity_order

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.schema.feature_names

    @property
    def alphabet(self) -> tuple[str, ...]:
        return self.schema.alphabet

    def predictor_matrix(self) -> np.ndarray:
        n_feat = len(self.schema.feature_names)
        if not self.records:
            return np.empty((0, n_feat))
        return np.array([r.predictors for r in self.records], dtype=float).reshape(-1, n_feat)

    def observation_indices(self, alphabet: Sequence[str] | None = None) -> np.ndarray:
        alphabet = self.schema.alphabet if alphabet is None else alphabet
        index = {label: i for i, label in enumerate(alphabet)}
        return np.array([index[r.observation] for r in self.records], dtype=int)

    def entity_index(self) -> np.ndarray:
        """Position of each record's entity in :attr:`entities`."""
        pos = {e: i for i, e in enumerate(self._entity_order)}
        return np.array([pos[r.entity_id] for r in self.records], dtype=int)

    def durations(self) -> np.ndarray:
        return np.array([r.duration for r in self.records], dtype=int)

    def by_entity(self) -> dict[str, list[TemporalRecord]]:
        groups: dict[str, list[TemporalRecord]] = {e: [] for e in self._entity_order}
        for rec in self.records:
            groups[rec.entity_id].append(rec)
        return groups

    def subset(self, entities: Iterable[str]) -> "TemporalDataset":
        """Dataset restricted to ``entities``; file order and alphabet-of-present labels kept."""
        keep = set(entities)
        records = tuple(r for r in self.records if r.entity_id in keep)
        return TemporalDataset(_with_alphabet(self.schema, records), records)


def _with_alphabet(schema: Schema, records: Sequence[TemporalRecord]) -> Schema:
    alphabet = tuple(sorted({r.observation for r in records}))
    return Schema(schema.feature_names, alphabet, schema.entity_col, schema.obs_col, schema.duration_col)


def make_dataset(
    records: Iterable[TemporalRecord],
    feature_names: Sequence[str],
    *,
    entity_col: str = "entity",
    obs_col: str = "observation",
    duration_col: str = "duration",
) -> TemporalDataset:
    """Validate ``records`` and group them by entity, preserving first-seen order."""
    records = list(records)
    n_feat = len(feature_names)
    groups: dict[str, list[TemporalRecord]] = {}
    for i, rec in enumerate(records):
        _check_record(rec, n_feat, i)
        groups.setdefault(rec.entity_id, []).append(rec)
    ordered = []
    for recs in groups.values():
        ordered.extend(sorted(recs, key=lambda r: r.seq_index))
    schema = Schema(tuple(feature_names), (), entity_col, obs_col, duration_col)
    return TemporalDataset(_with_alphabet(schema, ordered), tuple(ordered))


def _check_record(rec: TemporalRecord, n_feat: int, row: int) -> None:
    if isinstance(rec.duration, bool) or not isinstance(rec.duration, (int, np.integer)) or rec.duration < 1:
        raise ValidationError(f"row {row}: duration must be a positive integer, got {rec.duration!r}")
    if len(rec.predictors) != n_feat:
        raise ValidationError(f"row {row}: expected {n_feat} predictors, got {len(rec.predictors)}")
    if not all(math.isfinite(v) for v in rec.predictors):
        raise ValidationError(f"row {row}: non-finite predictor value")


def load_csv(
    path: str | Path,
    *,
    entity_col: str = "entity",
    obs_col: str = "observation",
    duration_col: str = "duration",
    predictors: Sequence[str] | None = None,
) -> TemporalDataset:
    """Read a headed CSV into a validated :class:`TemporalDataset`.

    ``predictors`` defaults to every column not claimed by another role.
    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        roles = {"entity": entity_col, "observation": obs_col, "duration": duration_col}
        for role, col in roles.items():
            if col not in header:
                raise SchemaError(f"{path}: missing {role} column {col!r}")
        if predictors is None:
            predictors = [h for h in header if h not in roles.values()]
        else:
            for col in predictors:
                if col not in header:
                    raise SchemaError(f"{path}: missing predictor column {col!r}")
        if not predictors:
            raise SchemaError(f"{path}: no predictor columns")
        col_idx = {h: i for i, h in enumerate(header)}
        p_idx = [col_idx[c] for c in predictors]

        seq: dict[str, int] = {}
        records = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            entity = row[col_idx[entity_col]].strip()
            label = row[col_idx[obs_col]].strip()
            if not label:
                raise ValidationError(f"row {rowno}: empty observation")
            try:
                values = tuple(float(row[i]) for i in p_idx)
            except ValueError:
                raise ValidationError(f"row {rowno}: non-numeric predictor value") from None
            if not all(math.isfinite(v) for v in values):
                raise ValidationError(f"row {rowno}: non-finite predictor value")
            raw = row[col_idx[duration_col]].strip()
            try:
                dur = float(raw)
            except ValueError:
                raise ValidationError(f"row {rowno}: non-numeric duration {raw!r}") from None
            if not math.isfinite(dur) or not dur.is_integer() or dur < 1:
                raise ValidationError(f"row {rowno}: duration must be a positive integer, got {raw!r}")
            k = seq.get(entity, 0)
            seq[entity] = k + 1
            records.append(TemporalRecord(entity, k, label, values, int(dur)))
    return make_dataset(
        records, predictors, entity_col=entity_col, obs_col=obs_col, duration_col=duration_col
    )


def write_csv(data: TemporalDataset, path: str | Path) -> None:
    """Write ``data`` in the layout :func:`load_csv` reads back with the same column roles."""
    schema = data.schema
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([schema.entity_col, *schema.feature_names, schema.obs_col, schema.duration_col])
        for rec in data.records:
            writer.writerow([rec.entity_id, *(repr(float(v)) for v in rec.predictors), rec.observation, rec.duration])


def split_by_entity(
    data: TemporalDataset, train_fraction: float, seed: int
) -> tuple[TemporalDataset, TemporalDataset]:
    """Randomly partition entities into train/test sets.

    ``round(train_fraction * n_entities)`` entities (half rounded up) go to
    the training side.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    entities = data.entities
    if not entities:
        raise ValidationError("dataset has no entities")
    n_train = int(math.floor(train_fraction * len(entities) + 0.5))
    perm = np.random.default_rng(seed).permutation(len(entities))
    train = {entities[i] for i in perm[:n_train]}
    test = [e for e in entities if e not in train]
    return data.subset(train), data.subset(test)


def merge_consecutive_states(labeled: Iterable[tuple[int, int]]) -> list[StateSegment]:
    merged: list[StateSegment] = []
    for state, duration in labeled:
        if duration < 1:
            raise ValidationError(f"segment duration must be >= 1, got {duration}")
        if merged and merged[-1].state == state:
            merged[-1] = StateSegment(state, merged[-1].duration + duration)
        else:
            merged.append(StateSegment(state, duration))
    return merged


def expand_to_time_units(segments: Iterable[tuple[int, int]]) -> list[int]:
    out: list[int] = []
    for state, duration in segments:
        out.extend([state] * duration)
    return out


def observation_time_units(records: Iterable[TemporalRecord]) -> list[str]:
    """One observation label per time unit covered by ``records``."""
    out: list[str] = []
    for rec in records:
        out.extend([rec.observation] * rec.duration)
    return out
