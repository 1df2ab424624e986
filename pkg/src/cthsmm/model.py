"""Classification-tree hidden semi-Markov model: estimation and decoding."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cart import ClassificationTree, StateRule, extract_rules
from .duration import DEFAULT_DMAX_FACTOR, DurationDensity, default_dmax, fit_duration_density
from .errors import NumericError, SchemaError, UnknownObservationError, ValidationError
from .temporal_data import StateSegment, TemporalDataset, merge_consecutive_states

FORMAT_VERSION = 1
EMISSION_FLOOR = 1e-9
INITIAL_FLOOR = 1e-9


@dataclass(eq=False)
class CthsmmModel:
    alphabet: tuple[str, ...]
    initial: np.ndarray
    transitions: np.ndarray
    emissions: np.ndarray
    durations: list[DurationDensity]
    rules: list[StateRule]
    tree: ClassificationTree

    @property
    def n_states(self) -> int:
        return len(self.initial)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.tree.feature_names

    def encode(self, observations: Sequence[str]) -> np.ndarray:
        index = {label: i for i, label in enumerate(self.alphabet)}
        out = np.empty(len(observations), dtype=int)
        for t, label in enumerate(observations):
            try:
                out[t] = index[label]
            except KeyError:
                raise UnknownObservationError(label) from None
        return out

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "n_states": self.n_states,
            "alphabet": list(self.alphabet),
            "feature_names": list(self.feature_names),
            "initial": [float(p) for p in self.initial],
            "transitions": [[float(p) for p in row] for row in self.transitions],
            "emissions": [[float(p) for p in row] for row in self.emissions],
            "durations": [d.to_dict() for d in self.durations],
            "rules": [{"state_id": r.state_id, "rule": r.render()} for r in self.rules],
            "tree": self.tree.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CthsmmModel":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise SchemaError(f"unsupported model format_version {version!r}")
        try:
            tree = ClassificationTree.from_dict(doc["tree"])
            model = cls(
                alphabet=tuple(doc["alphabet"]),
                initial=np.array(doc["initial"], dtype=float),
                transitions=np.array(doc["transitions"], dtype=float).reshape(len(doc["initial"]), -1),
                emissions=np.array(doc["emissions"], dtype=float),
                durations=[DurationDensity.from_dict(d) for d in doc["durations"]],
                rules=extract_rules(tree),
                tree=tree,
            )
        except KeyError as exc:
            raise SchemaError(f"model document lacks field {exc.args[0]!r}") from None
        if model.emissions.shape != (model.n_states, len(model.alphabet)) or len(model.durations) != model.n_states:
            raise SchemaError("model document has inconsistent dimensions")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CthsmmModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ViterbiResult:
    segments: list[StateSegment]
    log_prob: float


def estimate_transitions(segment_sequences: Sequence[Sequence[tuple[int, int]]], n_states: int) -> np.ndarray:
    """Out-state transition frequencies; the diagonal is always zero.

    Rows with no observed exits are uniform over the other states.  A single
    state model gets the 1x1 zero matrix.
    """
    counts = np.zeros((n_states, n_states))
    for seq in segment_sequences:
        states = [s for s, _ in seq]
        for a, b in zip(states, states[1:]):
            if not (1 <= a <= n_states and 1 <= b <= n_states):
                raise ValidationError(f"state id outside 1..{n_states}")
            if a == b:
                raise ValidationError("segment sequences must be merged (adjacent states repeat)")
            counts[a - 1, b - 1] += 1
    if n_states < 2:
        if counts.sum():
            raise ValidationError("a one-state model cannot have out-state transitions")
        return np.zeros((n_states, n_states))
    totals = counts.sum(axis=1)
    A = np.empty_like(counts)
    for i in range(n_states):
        if totals[i] > 0:
            A[i] = counts[i] / totals[i]
        else:
            A[i] = 1.0 / (n_states - 1)
            A[i, i] = 0.0
    return A


def estimate_emissions(tree: ClassificationTree) -> np.ndarray:
    B = np.array([leaf.class_distribution for leaf in tree.leaves], dtype=float)
    B = np.maximum(B, EMISSION_FLOOR)
    return B / B.sum(axis=1, keepdims=True)


def estimate_initial(segment_sequences: Sequence[Sequence[tuple[int, int]]], n_states: int) -> np.ndarray:
    firsts = [seq[0][0] for seq in segment_sequences if len(seq)]
    if not firsts:
        raise ValidationError("initial distribution needs at least one non-empty sequence")
    pi = np.bincount(np.asarray(firsts) - 1, minlength=n_states).astype(float)
    pi = np.maximum(pi / pi.sum(), INITIAL_FLOOR)
    return pi / pi.sum()


def state_segments(tree: ClassificationTree, data: TemporalDataset) -> list[list[StateSegment]]:
    """Per-entity merged state segments obtained by mapping each record through ``tree``."""
    if tuple(data.feature_names) != tree.feature_names:
        raise SchemaError(f"dataset predictors {list(data.feature_names)} do not match tree {list(tree.feature_names)}")
    states = tree.assign_many(data.predictor_matrix())
    out: list[list[StateSegment]] = []
    start = 0
    for recs in data.by_entity().values():
        labeled = [(int(states[start + i]), r.duration) for i, r in enumerate(recs)]
        start += len(recs)
        out.append(merge_consecutive_states(labeled))
    return out


def build_model(tree: ClassificationTree, train: TemporalDataset,
                dmax_factor: float = DEFAULT_DMAX_FACTOR) -> CthsmmModel:
    """Estimate initial, transition, emission and duration parameters from tree-labelled data."""
    segments = state_segments(tree, train)
    L = tree.n_leaves
    samples: list[list[int]] = [[] for _ in range(L)]
    for seq in segments:
        for seg in seq:
            samples[seg.state - 1].append(seg.duration)
    durations = []
    for j, s in enumerate(samples):
        if not s:
            raise ValidationError(f"state {j + 1} has no training records")
        durations.append(fit_duration_density(s, default_dmax(s, dmax_factor)))
    return CthsmmModel(
        alphabet=tree.alphabet,
        initial=estimate_initial(segments, L),
        transitions=estimate_transitions(segments, L),
        emissions=estimate_emissions(tree),
        durations=durations,
        rules=extract_rules(tree),
        tree=tree,
    )


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def viterbi_decode(model: CthsmmModel, observations: Sequence[str]) -> ViterbiResult:
    """Most probable segmentation of ``observations`` into (state, duration) runs.

    Segment durations are capped at each state's dmax and consecutive
    segments always change state.  Ties prefer the lower state id, then the
    shorter duration.
    """
    T = len(observations)
    if T == 0:
        raise ValidationError("cannot decode an empty observation sequence")
    obs = model.encode(observations)
    L = model.n_states
    log_pi = _log(model.initial)
    log_A = _log(model.transitions) if L > 1 else np.full((1, 1), -np.inf)
    dmax = np.array([d.dmax for d in model.durations])
    D = int(dmax.max())
    log_dur = np.full((L, D), -np.inf)
    for j, dens in enumerate(model.durations):
        log_dur[j, : dens.dmax] = _log(dens.pmf)
    # cum[j, t]: finite log-emission sum of state j over observations[:t];
    # zeros[j, t]: how many of those have probability 0 (kept apart to avoid inf - inf)
    log_b = _log(model.emissions)[:, obs]
    impossible = ~np.isfinite(log_b)
    cum = np.zeros((L, T + 1))
    cum[:, 1:] = np.cumsum(np.where(impossible, 0.0, log_b), axis=1)
    zeros = np.zeros((L, T + 1), dtype=int)
    zeros[:, 1:] = np.cumsum(impossible, axis=1)

    delta = np.full((T + 1, L), -np.inf)
    back_d = np.zeros((T + 1, L), dtype=int)
    back_i = np.full((T + 1, L), -1, dtype=int)
    for t in range(1, T + 1):
        best = np.full(L, -np.inf)
        for d in range(1, min(D, t) + 1):
            s = t - d
            seg = log_dur[:, d - 1] + cum[:, t] - cum[:, s]
            seg[zeros[:, t] > zeros[:, s]] = -np.inf
            if s == 0:
                cand = log_pi + seg
                prev = np.full(L, -1)
            else:
                scores = delta[s][:, None] + log_A
                prev = np.argmax(scores, axis=0)
                cand = scores[prev, np.arange(L)] + seg
            better = cand > best
            best[better] = cand[better]
            back_d[t, better] = d
            back_i[t, better] = prev[better]
        delta[t] = best

    j = int(np.argmax(delta[T]))
    log_prob = float(delta[T, j])
    if not np.isfinite(log_prob):
        raise NumericError(f"no feasible segmentation of {T} time units under the model's duration limits")
    segments: list[StateSegment] = []
    t = T
    while t > 0:
        d = int(back_d[t, j])
        segments.append(StateSegment(j + 1, d))
        j, t = int(back_i[t, j]), t - d
    segments.reverse()
    return ViterbiResult(segments, log_prob)


def score_segmentation(model: CthsmmModel, observations: Sequence[str],
                       segments: Sequence[tuple[int, int]]) -> float:
    """Log-probability of one explicit segmentation (``-inf`` when infeasible)."""
    obs = model.encode(observations)
    if sum(d for _, d in segments) != len(obs):
        raise ValidationError("segment durations do not cover the observation sequence")
    log_B = _log(model.emissions)
    total, t, prev = 0.0, 0, None
    for state, d in segments:
        j = state - 1
        total += _log(model.initial[j]) if prev is None else (
            -np.inf if prev == j else _log(model.transitions[prev, j]))
        total += _log(model.durations[j].prob(d)) + log_B[j, obs[t:t + d]].sum()
        t, prev = t + d, j
    return float(total)


def render_timeline(model: CthsmmModel, result: ViterbiResult) -> str:
    """Aligned "state x hours" rows with each state's rule."""
    rules = {r.state_id: r.render() for r in model.rules}
    lines = []
    t = 0
    for seg in result.segments:
        lines.append(f"t={t:<4d} S{seg.state:<3d} x {seg.duration:>3d}  {rules.get(seg.state, '')}")
        t += seg.duration
    lines.append(f"log_prob {result.log_prob:.6f}")
    return "\n".join(lines)
