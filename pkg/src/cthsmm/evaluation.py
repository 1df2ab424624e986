"""Hit ratio and longest-matched-run ratio between actual and decoded state paths."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .cart import ClassificationTree
from .errors import ValidationError
from .model import CthsmmModel, state_segments, viterbi_decode
from .temporal_data import TemporalDataset, expand_to_time_units, observation_time_units


@dataclass(frozen=True)
class EvalMetrics:
    horizon: int
    hit_ratio: float | None
    lmrl_ratio: float | None
    n_sequences: int


def _check(predicted: Sequence) -> None:
    if len(predicted) == 0:
        raise ValidationError("predicted sequence is empty")


def hit_ratio(actual: Sequence[int], predicted: Sequence[int]) -> float:
    """Matched positions over the predicted length; positions past ``actual`` are misses."""
    _check(predicted)
    hits = sum(1 for a, p in zip(actual, predicted) if a == p)
    return hits / len(predicted)


def lmrl_ratio(actual: Sequence[int], predicted: Sequence[int]) -> float:
    _check(predicted)
    longest = run = 0
    for a, p in zip(actual, predicted):
        run = run + 1 if a == p else 0
        longest = max(longest, run)
    return longest / len(predicted)


def horizon_sweep(model: CthsmmModel, test: TemporalDataset, horizons: Sequence[int],
                  tree: ClassificationTree | None = None) -> list[EvalMetrics]:
    """Average hit/LMRL ratios of decoding the first ``h`` time units of every test entity.

    Actual states come from mapping the test predictors through ``tree``
    (the model's own tree by default).  Entities shorter than ``h`` are left
    out of that horizon; a horizon with no eligible entity reports ``None``.
    """
    if any(h < 1 for h in horizons):
        raise ValidationError("horizons must be >= 1")
    tree = tree or model.tree
    model.encode(sorted({r.observation for r in test.records}))
    actual_paths = [expand_to_time_units(seq) for seq in state_segments(tree, test)]
    observed = [observation_time_units(recs) for recs in test.by_entity().values()]

    results = []
    for h in horizons:
        hits, runs = [], []
        for actual, obs in zip(actual_paths, observed):
            if len(obs) < h:
                continue
            decoded = expand_to_time_units(viterbi_decode(model, obs[:h]).segments)
            hits.append(hit_ratio(actual[:h], decoded))
            runs.append(lmrl_ratio(actual[:h], decoded))
        if hits:
            results.append(EvalMetrics(h, sum(hits) / len(hits), sum(runs) / len(runs), len(hits)))
        else:
            results.append(EvalMetrics(h, None, None, 0))
    return results


def sweep_to_csv(metrics: Sequence[EvalMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["horizon", "hit_ratio", "lmrl_ratio", "n_sequences"])
    for m in metrics:
        writer.writerow([m.horizon, _fmt(m.hit_ratio), _fmt(m.lmrl_ratio), m.n_sequences])
    return buf.getvalue()


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))
