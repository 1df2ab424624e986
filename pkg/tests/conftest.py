import itertools
import math
import sys

import numpy as np
import pytest

from cthsmm.cart import ClassificationTree, Node, extract_rules
from cthsmm.duration import DurationDensity
from cthsmm.model import CthsmmModel


def chain_tree(n_states, alphabet):
    """A 1-feature tree x < 1 | x < 2 | ... with ``n_states`` leaves."""
    def build(k):
        if k == n_states - 1:
            return Node(2 * k, np.ones(len(alphabet), dtype=np.int64))
        return Node(2 * k + 1, np.ones(len(alphabet), dtype=np.int64) * (n_states - k), 0, float(k + 1),
                    Node(2 * k, np.ones(len(alphabet), dtype=np.int64)), build(k + 1))
    return ClassificationTree(build(0), ["x"], alphabet)


def make_model(initial, transitions, emissions, duration_pmfs, alphabet):
    L = len(initial)
    tree = chain_tree(L, alphabet)
    durations = [DurationDensity((1,), 0.5, len(p), np.asarray(p, dtype=float)) for p in duration_pmfs]
    return CthsmmModel(tuple(alphabet), np.asarray(initial, float), np.asarray(transitions, float).reshape(L, L),
                       np.asarray(emissions, float), durations, extract_rules(tree), tree)


def random_model(rng, max_states=3, max_alphabet=3, max_dmax=4, zero_prob=0.0):
    L = int(rng.integers(1, max_states + 1))
    O = int(rng.integers(1, max_alphabet + 1))
    alphabet = [f"o{i}" for i in range(O)]

    def simplex(k):
        p = rng.dirichlet(np.ones(k))
        if zero_prob and k > 1:
            p[rng.random(k) < zero_prob] = 0.0
            if p.sum() == 0:
                p[rng.integers(k)] = 1.0
            p /= p.sum()
        return p

    pi = simplex(L)
    A = np.zeros((L, L))
    if L > 1:
        for i in range(L):
            A[i, [j for j in range(L) if j != i]] = simplex(L - 1)
    B = np.array([simplex(O) for _ in range(L)])
    durs = [simplex(int(rng.integers(1, max_dmax + 1))) for _ in range(L)]
    return make_model(pi, A, B, durs, alphabet)


def _log(p):
    return math.log(p) if p > 0 else -math.inf


def oracle_score(model, obs, segments):
    """Log-probability of an explicit segmentation, computed independently of the library."""
    idx = {o: i for i, o in enumerate(model.alphabet)}
    total, t, prev = 0.0, 0, None
    for state, d in segments:
        j = state - 1
        if prev is None:
            total += _log(model.initial[j])
        elif prev == j:
            return -math.inf
        else:
            total += _log(model.transitions[prev][j])
        pmf = model.durations[j].pmf
        total += _log(pmf[d - 1]) if d <= len(pmf) else -math.inf
        for o in obs[t:t + d]:
            total += _log(model.emissions[j][idx[o]])
        t, prev = t + d, j
    return total


def compositions(T, dmax):
    if T == 0:
        yield ()
        return
    for d in range(1, min(T, dmax) + 1):
        for rest in compositions(T - d, dmax):
            yield (d,) + rest


def brute_force_best(model, obs):
    L = model.n_states
    dmax = max(d.dmax for d in model.durations)
    best = -math.inf
    for durs in compositions(len(obs), dmax):
        for states in itertools.product(range(1, L + 1), repeat=len(durs)):
            if any(a == b for a, b in zip(states, states[1:])):
                continue
            best = max(best, oracle_score(model, obs, list(zip(states, durs))))
    return best


@pytest.fixture
def weather_tree():
    """Weather-log tree: Temperature < 60 -> (Pressure < 940 | Pressure >= 940), else one leaf."""
    # counts over (Cloudy, Rainy, Sunny)
    cold_low = Node(2, np.array([0, 1, 0]))
    cold_high = Node(3, np.array([1, 1, 0]))
    cold = Node(1, np.array([1, 2, 0]), 1, 940.0, cold_low, cold_high)
    warm = Node(4, np.array([1, 0, 1]))
    root = Node(0, np.array([2, 2, 1]), 0, 60.0, cold, warm)
    return ClassificationTree(root, ["Temperature", "Pressure"], ["Cloudy", "Rainy", "Sunny"])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, _ in mod.CRITERIA:
        if name in mod.RESULTS:
            ok, detail = mod.RESULTS[name]
            terminalreporter.write_line(mod.format_line(name, ok, detail))
