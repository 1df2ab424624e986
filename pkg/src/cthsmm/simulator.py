"""Synthetic event logs from a known semi-Markov system.

Every hidden state owns an axis-aligned box of predictor space, so a tree
can recover the state mapping exactly.  Within a state, predictors are
uniform in the box and each time unit emits one observation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import SchemaError, ValidationError
from .temporal_data import StateSegment, TemporalDataset, TemporalRecord, make_dataset

_TOL = 1e-9


@dataclass(frozen=True)
class StateSpec:
    box: tuple[tuple[float, float], ...]  # half-open [low, high) per feature
    emission: tuple[float, ...]
    geometric_p_self: float | None = None
    duration_pmf: tuple[float, ...] | None = None  # P(d = 1), P(d = 2), ...


@dataclass(frozen=True)
class GroundTruthSpec:
    feature_names: tuple[str, ...]
    alphabet: tuple[str, ...]
    states: tuple[StateSpec, ...]
    transitions: tuple[tuple[float, ...], ...]
    initial: tuple[float, ...]
    n_entities: int = 50
    mean_length: float = 30.0
    seed: int = 0
    merge_observations: bool = True

    @property
    def n_states(self) -> int:
        return len(self.states)

    def emission_matrix(self) -> np.ndarray:
        return np.array([s.emission for s in self.states], dtype=float)

    def validate(self) -> None:
        L, F, O = self.n_states, len(self.feature_names), len(self.alphabet)
        if L < 1:
            raise ValidationError("ground truth needs at least one state")
        if self.n_entities < 1 or self.mean_length < 1:
            raise ValidationError("n_entities and mean_length must be >= 1")
        A = np.asarray(self.transitions, dtype=float)
        pi = np.asarray(self.initial, dtype=float)
        if pi.shape != (L,) or np.any(pi < 0) or abs(pi.sum() - 1) > _TOL:
            raise ValidationError("initial distribution must have one non-negative entry per state summing to 1")
        if L > 1:
            if A.shape != (L, L) or np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1) > _TOL):
                raise ValidationError("transition matrix must be LxL with rows summing to 1")
            if np.any(np.diag(A) != 0):
                raise ValidationError("transition matrix diagonal must be zero")
        for j, s in enumerate(self.states):
            if len(s.box) != F or any(not lo < hi for lo, hi in s.box):
                raise ValidationError(f"state {j + 1}: box must give low < high for each of {F} features")
            e = np.asarray(s.emission, dtype=float)
            if e.shape != (O,) or np.any(e < 0) or abs(e.sum() - 1) > _TOL:
                raise ValidationError(f"state {j + 1}: emission row must cover the alphabet and sum to 1")
            if (s.geometric_p_self is None) == (s.duration_pmf is None):
                raise ValidationError(f"state {j + 1}: give exactly one of geometric_p_self or duration_pmf")
            if s.geometric_p_self is not None and not 0 <= s.geometric_p_self < 1:
                raise ValidationError(f"state {j + 1}: geometric_p_self must lie in [0, 1)")
            if s.duration_pmf is not None:
                d = np.asarray(s.duration_pmf, dtype=float)
                if d.ndim != 1 or len(d) == 0 or np.any(d < 0) or abs(d.sum() - 1) > _TOL:
                    raise ValidationError(f"state {j + 1}: duration_pmf must be a probability vector")
        for a in range(L):
            for b in range(a + 1, L):
                if _boxes_overlap(self.states[a].box, self.states[b].box):
                    raise ValidationError(f"boxes of states {a + 1} and {b + 1} overlap")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "alphabet": list(self.alphabet),
            "states": [
                {k: v for k, v in {
                    "box": [list(b) for b in s.box],
                    "emission": list(s.emission),
                    "geometric_p_self": s.geometric_p_self,
                    "duration_pmf": None if s.duration_pmf is None else list(s.duration_pmf),
                }.items() if v is not None}
                for s in self.states
            ],
            "transitions": [list(r) for r in self.transitions],
            "initial": list(self.initial),
            "n_entities": self.n_entities,
            "mean_length": self.mean_length,
            "seed": self.seed,
            "merge_observations": self.merge_observations,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundTruthSpec":
        try:
            states = tuple(
                StateSpec(
                    box=tuple(tuple(float(v) for v in b) for b in s["box"]),
                    emission=tuple(float(p) for p in s["emission"]),
                    geometric_p_self=s.get("geometric_p_self"),
                    duration_pmf=None if s.get("duration_pmf") is None else tuple(float(p) for p in s["duration_pmf"]),
                )
                for s in doc["states"]
            )
            spec = cls(
                feature_names=tuple(doc["feature_names"]),
                alphabet=tuple(doc["alphabet"]),
                states=states,
                transitions=tuple(tuple(float(p) for p in r) for r in doc["transitions"]),
                initial=tuple(float(p) for p in doc["initial"]),
                n_entities=int(doc.get("n_entities", 50)),
                mean_length=float(doc.get("mean_length", 30.0)),
                seed=int(doc.get("seed", 0)),
                merge_observations=bool(doc.get("merge_observations", True)),
            )
        except KeyError as exc:
            raise SchemaError(f"ground-truth spec lacks field {exc.args[0]!r}") from None
        spec.validate()
        return spec


def load_spec(path: str | Path) -> GroundTruthSpec:
    return GroundTruthSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _boxes_overlap(a, b) -> bool:
    return all(lo_a < hi_b and lo_b < hi_a for (lo_a, hi_a), (lo_b, hi_b) in zip(a, b))


def weather_spec(n_entities: int = 250, mean_length: float = 20.0, seed: int = 0,
                 noise: float = 0.002) -> GroundTruthSpec:
    """Cold/Warm/Hot temperature states emitting Rainy/Cloudy/Sunny."""
    hi = 1.0 - 2 * noise
    return GroundTruthSpec(
        feature_names=("Temperature", "Pressure"),
        alphabet=("Cloudy", "Rainy", "Sunny"),
        states=(
            StateSpec(((-5.0, 15.0), (930.0, 1030.0)), (noise, hi, noise), geometric_p_self=0.8),
            StateSpec(((15.0, 25.0), (930.0, 1030.0)), (hi, noise, noise), duration_pmf=(0.1, 0.2, 0.4, 0.2, 0.1)),
            StateSpec(((25.0, 40.0), (930.0, 1030.0)), (noise, noise, hi), geometric_p_self=0.75),
        ),
        transitions=((0.0, 0.7, 0.3), (0.5, 0.0, 0.5), (0.4, 0.6, 0.0)),
        initial=(0.3, 0.4, 0.3),
        n_entities=n_entities,
        mean_length=mean_length,
        seed=seed,
    )


def sample_geometric_sojourns(p_self: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sojourn lengths of ``n`` independent visits that repeat each step with ``p_self``."""
    lengths = np.ones(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        stay = rng.random(active.size) < p_self
        active = active[stay]
        lengths[active] += 1
    return lengths


def _draw_duration(state: StateSpec, rng: np.random.Generator) -> int:
    if state.geometric_p_self is not None:
        d = 1
        while rng.random() < state.geometric_p_self:
            d += 1
        return d
    pmf = np.asarray(state.duration_pmf, dtype=float)
    return int(rng.choice(len(pmf), p=pmf / pmf.sum())) + 1


@dataclass
class SampledEntity:
    entity_id: str
    segments: list[StateSegment]
    records: list[TemporalRecord]
    record_states: list[int] = field(default_factory=list)


def sample_paths(spec: GroundTruthSpec) -> list[SampledEntity]:
    """Sample every entity's hidden segments and emitted records."""
    spec.validate()
    L = spec.n_states
    A = np.asarray(spec.transitions, dtype=float)
    emission = spec.emission_matrix()
    width = len(str(spec.n_entities - 1))
    out = []
    for e, child in enumerate(np.random.SeedSequence(spec.seed).spawn(spec.n_entities)):
        rng = np.random.default_rng(child)
        target = max(1, int(rng.poisson(spec.mean_length)))
        entity = f"E{e:0{width}d}"
        segments: list[StateSegment] = []
        records: list[TemporalRecord] = []
        states: list[int] = []
        total = 0
        j = int(rng.choice(L, p=spec.initial))
        while total < target:
            state = spec.states[j]
            d = _draw_duration(state, rng)
            segments.append(StateSegment(j + 1, d))
            total += d
            lows = np.array([b[0] for b in state.box])
            highs = np.array([b[1] for b in state.box])
            seg_start = len(records)
            for _ in range(d):
                x = tuple(float(v) for v in lows + (highs - lows) * rng.random(len(lows)))
                label = spec.alphabet[int(rng.choice(len(spec.alphabet), p=emission[j]))]
                if spec.merge_observations and len(records) > seg_start and records[-1].observation == label:
                    prev = records[-1]
                    records[-1] = TemporalRecord(entity, prev.seq_index, label, prev.predictors, prev.duration + 1)
                else:
                    records.append(TemporalRecord(entity, len(records), label, x, 1))
                    states.append(j + 1)
            if L > 1:
                j = int(rng.choice(L, p=A[j]))
        out.append(SampledEntity(entity, segments, records, states))
    return out


def sample_dataset(spec: GroundTruthSpec) -> TemporalDataset:
    records = [r for ent in sample_paths(spec) for r in ent.records]
    return make_dataset(records, spec.feature_names)
