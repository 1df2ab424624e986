"""Mutual-information scoring and candidate-model selection."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .cart import (ClassificationTree, TreeGrowthConfig, cost_complexity_prune, cv_misclassification,
                   grow_tree)
from .duration import DEFAULT_DMAX_FACTOR
from .errors import UnknownObservationError, ValidationError
from .evaluation import EvalMetrics, horizon_sweep
from .model import CthsmmModel, build_model, estimate_emissions, state_segments
from .temporal_data import TemporalDataset

MMIE_CP = 0.01


class PriorMode(str, Enum):
    UNIFORM = "uniform"
    RECORD = "record_frequency"
    DURATION = "duration_weighted"

    @classmethod
    def parse(cls, value: "str | PriorMode") -> "PriorMode":
        if isinstance(value, cls):
            return value
        aliases = {"uniform": cls.UNIFORM, "record": cls.RECORD, "record_frequency": cls.RECORD,
                   "duration": cls.DURATION, "duration_weighted": cls.DURATION}
        try:
            return aliases[value]
        except KeyError:
            raise ValidationError(f"unknown prior mode {value!r}") from None


def mutual_information(B: np.ndarray, priors: Sequence[float]) -> float:
    """Mutual information in bits between hidden state and observation.

    ``B[j, i]`` is P(observation i | state j) and ``priors[j]`` is P(state j).
    Zero joint probabilities contribute nothing.
    """
    B = np.asarray(B, dtype=float)
    p_s = np.asarray(priors, dtype=float)
    if B.ndim != 2 or p_s.ndim != 1 or B.shape[0] != p_s.shape[0]:
        raise ValidationError(f"emission shape {B.shape} does not match {p_s.shape[0]} priors")
    if not np.allclose(B.sum(axis=1), 1.0, atol=1e-6) or not math.isclose(p_s.sum(), 1.0, abs_tol=1e-6):
        raise ValidationError("emission rows and priors must each sum to 1")
    if np.all(B == B[0]):
        return 0.0
    joint = B * p_s[:, None]
    p_o = joint.sum(axis=0)
    mask = joint > 0
    ratio = joint[mask] / (p_s[:, None] * p_o[None, :])[mask]
    return max(0.0, float(np.sum(joint[mask] * np.log2(ratio))))


def state_priors(tree: ClassificationTree, data: TemporalDataset, mode: PriorMode | str) -> np.ndarray:
    mode = PriorMode.parse(mode)
    L = tree.n_leaves
    if mode is PriorMode.UNIFORM:
        return np.full(L, 1.0 / L)
    if mode is PriorMode.RECORD:
        counts = np.array([leaf.record_count for leaf in tree.leaves], dtype=float)
        return counts / counts.sum()
    weight = np.zeros(L)
    for seq in state_segments(tree, data):
        for seg in seq:
            weight[seg.state - 1] += seg.duration
    return weight / weight.sum()


def model_mi(tree: ClassificationTree, data: TemporalDataset, mode: PriorMode | str) -> float:
    return mutual_information(estimate_emissions(tree), state_priors(tree, data, mode))


# -- MMIE -----------------------------------------------------------------------

def default_scan(n_records: int, linear_limit: int = 200, ratio: float = 1.1) -> list[int]:
    """Every minbucket up to ``linear_limit``, then a geometric grid up to ``n_records``."""
    values = list(range(1, min(n_records, linear_limit) + 1))
    v = float(values[-1]) if values else 1.0
    while values and values[-1] < n_records:
        v *= ratio
        nxt = min(n_records, int(math.ceil(v)))
        if nxt > values[-1]:
            values.append(nxt)
    return values


def parse_scan(text: str) -> list[int]:
    """``"start:stop"`` or ``"start:stop:step"`` (inclusive stop)."""
    parts = text.split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"bad scan range {text!r}") from None
    if len(nums) not in (2, 3) or (len(nums) == 3 and nums[2] < 1):
        raise ValidationError(f"bad scan range {text!r}")
    start, stop = nums[0], nums[1]
    step = nums[2] if len(nums) == 3 else 1
    return list(range(start, stop + 1, step))


@dataclass
class MmieResult:
    minbucket: int
    model: CthsmmModel
    mi_bits: float
    scores: dict[int, float] = field(default_factory=dict)


def mmie_search(train: TemporalDataset, scan: Sequence[int] | None = None,
                prior_mode: PriorMode | str = PriorMode.RECORD, *, cp: float = MMIE_CP,
                max_depth: int = 30, dmax_factor: float = DEFAULT_DMAX_FACTOR) -> MmieResult:
    """Pick the minbucket whose tree yields the largest state/observation MI.

    Ties go to the larger minbucket.  Trees that come out structurally
    identical to an earlier scan point reuse its score.
    """
    scan = default_scan(len(train)) if scan is None else sorted(set(int(m) for m in scan))
    if not scan:
        raise ValidationError("empty minbucket scan range")
    if scan[0] < 1 or scan[-1] > len(train):
        raise ValidationError(f"scan range must lie within [1, {len(train)}]")
    mode = PriorMode.parse(prior_mode)
    cache: dict[tuple, float] = {}
    scores: dict[int, float] = {}
    best_m, best_tree, best_mi = None, None, -math.inf
    for m in scan:
        tree = grow_tree(train, TreeGrowthConfig(minbucket=m, max_depth=max_depth, cp=cp))
        key = tree.structure_key()
        if key not in cache:
            cache[key] = model_mi(tree, train, mode)
        mi = cache[key]
        scores[m] = mi
        if mi >= best_mi:
            best_m, best_tree, best_mi = m, tree, mi
    return MmieResult(best_m, build_model(best_tree, train, dmax_factor), best_mi, scores)


# -- candidates -------------------------------------------------------------------

@dataclass
class Candidate:
    label: str
    model: CthsmmModel
    mi_bits: float
    cv_mr: float
    minbucket: int | None = None
    alpha: float | None = None
    is_mmie: bool = False

    @property
    def n_states(self) -> int:
        return self.model.n_states


@dataclass
class CandidateSet:
    candidates: list[Candidate]
    prior_mode: PriorMode

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, label: str) -> Candidate:
        for c in self.candidates:
            if c.label == label:
                return c
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.candidates]


def build_candidates(train: TemporalDataset, k_folds: int = 10, seed: int = 0,
                     prior_mode: PriorMode | str = PriorMode.RECORD, *, minbucket: int | None = None,
                     scan: Sequence[int] | None = None, mmie_cp: float = MMIE_CP, full_cp: float = 0.0,
                     max_depth: int = 30, dmax_factor: float = DEFAULT_DMAX_FACTOR) -> CandidateSet:
    """Full tree, its distinct cost-complexity subtrees, and the MMIE model."""
    if len(train) == 0:
        raise ValidationError("training set is empty")
    mode = PriorMode.parse(prior_mode)
    if minbucket is None:
        minbucket = max(1, round(0.01 * len(train)))
    config = TreeGrowthConfig(minbucket=minbucket, max_depth=max_depth, cp=full_cp)
    full = grow_tree(train, config)
    k = min(k_folds, len(train.entities))

    def make(label, tree, cv, **extra):
        return Candidate(label, build_model(tree, train, dmax_factor), model_mi(tree, train, mode), cv, **extra)

    candidates = [make("full", full, cv_misclassification(train, config, k, seed), minbucket=minbucket, alpha=0.0)]
    seen = {full.structure_key(): candidates[0]}
    report = cost_complexity_prune(full, train, k, seed)
    n_pruned = 0
    for step in report:
        key = step.tree.structure_key()
        if key in seen:
            continue
        n_pruned += 1
        seen[key] = make(f"prune-{n_pruned}", step.tree, float(step.cv_mr), minbucket=minbucket, alpha=step.alpha)
        candidates.append(seen[key])

    mmie = mmie_search(train, scan, mode, cp=mmie_cp, max_depth=max_depth, dmax_factor=dmax_factor)
    twin = seen.get(mmie.model.tree.structure_key())
    if twin is not None:
        # the MMIE tree is already a candidate: flag it rather than duplicate it
        twin.is_mmie = True
    else:
        mmie_cfg = TreeGrowthConfig(minbucket=mmie.minbucket, max_depth=max_depth, cp=mmie_cp)
        candidates.append(Candidate("mmie", mmie.model, mmie.mi_bits, cv_misclassification(train, mmie_cfg, k, seed),
                                    minbucket=mmie.minbucket, is_mmie=True))
    return CandidateSet(candidates, mode)


# -- report ----------------------------------------------------------------------------

def _label_key(label: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", label)]


@dataclass
class SelectionRow:
    label: str
    n_states: int
    mi_bits: float
    cv_mr: float
    minbucket: int | None
    is_mmie: bool
    sweep: list[EvalMetrics]


@dataclass
class SelectionReport:
    rows: list[SelectionRow]
    horizons: list[int]
    prior_mode: PriorMode

    def to_dict(self) -> dict:
        return {
            "prior_mode": self.prior_mode.value,
            "horizons": list(self.horizons),
            "candidates": [
                {
                    "label": r.label,
                    "n_states": r.n_states,
                    "mi_bits": r.mi_bits,
                    "cv_mr": r.cv_mr,
                    "minbucket": r.minbucket,
                    "is_mmie": r.is_mmie,
                    "sweep": [{"horizon": m.horizon, "hit_ratio": m.hit_ratio, "lmrl_ratio": m.lmrl_ratio,
                               "n_sequences": m.n_sequences} for m in r.sweep],
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "n_states", "mi_bits", "cv_mr", "is_mmie", "horizon",
                         "hit_ratio", "lmrl_ratio", "n_sequences"])
        for r in self.rows:
            for m in r.sweep:
                writer.writerow([r.label, r.n_states, repr(r.mi_bits), repr(r.cv_mr), int(r.is_mmie), m.horizon,
                                 "" if m.hit_ratio is None else repr(m.hit_ratio),
                                 "" if m.lmrl_ratio is None else repr(m.lmrl_ratio), m.n_sequences])
        return buf.getvalue()


def select_model(candidates: CandidateSet, test: TemporalDataset, horizons: Sequence[int]) -> SelectionReport:
    """Score every candidate on ``test`` over ``horizons``; no winner is picked."""
    if len(test) == 0:
        raise ValidationError("test set is empty")
    horizons = list(horizons)
    if not horizons or min(horizons) < 1:
        raise ValidationError("horizons must be a non-empty list of integers >= 1")
    rows = []
    for c in sorted(candidates, key=lambda c: _label_key(c.label)):
        for label in test.alphabet:
            if label not in c.model.alphabet:
                raise UnknownObservationError(label)
        rows.append(SelectionRow(c.label, c.n_states, c.mi_bits, c.cv_mr, c.minbucket, c.is_mmie,
                                 horizon_sweep(c.model, test, horizons)))
    return SelectionReport(rows, horizons, candidates.prior_mode)
