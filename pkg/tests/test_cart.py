import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cthsmm.cart import (ClassificationTree, Node, TreeGrowthConfig, assign_state, cost_complexity_prune,
                         cv_misclassification, extract_rules, gini_impurity, grow_tree)
from cthsmm.errors import ValidationError
from cthsmm.temporal_data import TemporalRecord, make_dataset


def dataset(X, labels, entities=None, names=None):
    X = np.asarray(X, dtype=float).reshape(len(labels), -1)
    names = names or [f"f{i}" for i in range(X.shape[1])]
    entities = entities if entities is not None else [f"e{i % 5}" for i in range(len(labels))]
    recs = [TemporalRecord(str(e), i, str(lab), tuple(x), 1) for i, (e, lab, x) in enumerate(zip(entities, labels, X))]
    return make_dataset(recs, names)


def random_dataset(rng, n=None, n_feat=None, n_cls=None, n_ent=6):
    n = n or int(rng.integers(12, 60))
    n_feat = n_feat or int(rng.integers(1, 4))
    n_cls = n_cls or int(rng.integers(2, 4))
    X = rng.integers(0, 8, size=(n, n_feat)).astype(float)
    labels = ["abc"[i] for i in rng.integers(0, n_cls, size=n)]
    return dataset(X, labels, entities=[f"e{i % n_ent}" for i in range(n)])


def test_gini_examples():
    assert gini_impurity([10, 0]) == 0.0
    assert gini_impurity([5, 5]) == 0.5
    assert gini_impurity([7, 2, 1]) == pytest.approx(0.46, abs=1e-12)
    with pytest.raises(ValidationError):
        gini_impurity([0, 0])


def test_separable_split():
    X = [-3, -2, -1.5, -1, 1, 2, 4]
    data = dataset(X, list("AAAABBB"))
    tree = grow_tree(data, TreeGrowthConfig(minbucket=1))
    assert tree.n_leaves == 2
    assert tree.root.threshold == 0.0  # midpoint of -1 and 1
    assert [leaf.class_distribution.tolist() for leaf in tree.leaves] == [[1.0, 0.0], [0.0, 1.0]]
    assert assign_state(tree, [-5]) == 1
    assert assign_state(tree, [5]) == 2


def test_minbucket_equal_size_gives_single_leaf():
    data = dataset([1, 2, 3, 4, 5, 6], list("AABBBC"))
    tree = grow_tree(data, TreeGrowthConfig(minbucket=6))
    assert tree.n_leaves == 1
    np.testing.assert_allclose(tree.leaves[0].class_distribution, [2 / 6, 3 / 6, 1 / 6])


def test_single_label_single_leaf():
    data = dataset(np.arange(10), ["S"] * 10)
    tree = grow_tree(data)
    assert tree.n_leaves == 1
    assert tree.leaves[0].class_distribution.tolist() == [1.0]


def test_empty_and_oversized_minbucket_rejected():
    data = dataset([1, 2], ["A", "B"])
    with pytest.raises(ValidationError):
        grow_tree(data, TreeGrowthConfig(minbucket=3))
    with pytest.raises(ValidationError):
        TreeGrowthConfig(minbucket=0)


def test_tie_break_lowest_feature_then_threshold():
    # both features separate the labels equally well
    X = [[0, 0], [1, 1], [2, 2], [3, 3]]
    data = dataset(X, list("AABB"))
    tree = grow_tree(data)
    assert tree.root.feature == 0 and tree.root.threshold == 1.5
    # A B B A: cutting at 0.5 or 2.5 gives the same weighted Gini (1/3)
    data = dataset([0, 1, 2, 3], list("ABBA"))
    t = grow_tree(data, TreeGrowthConfig(minbucket=1, max_depth=1))
    assert t.root.threshold == 0.5


def test_max_depth_caps_tree():
    rng = np.random.default_rng(0)
    data = random_dataset(rng, n=80)
    tree = grow_tree(data, TreeGrowthConfig(max_depth=2))
    assert tree.n_leaves <= 4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_growth_properties(seed, minbucket):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng)
    tree = grow_tree(data, TreeGrowthConfig(minbucket=minbucket))
    leaves = tree.leaves
    assert [leaf.state_id for leaf in leaves] == list(range(1, tree.n_leaves + 1))
    # mass conservation
    total = sum(leaf.class_distribution * leaf.record_count for leaf in leaves)
    np.testing.assert_allclose(total, np.bincount(data.observation_indices(), minlength=len(data.alphabet)))
    for leaf in leaves:
        assert abs(leaf.class_distribution.sum() - 1) < 1e-9
        assert leaf.record_count >= minbucket
    # impurity strictly decreases at each split
    for node in tree.internal_nodes():
        n = node.record_count
        child = (node.left.record_count * gini_impurity(node.left.counts)
                 + node.right.record_count * gini_impurity(node.right.counts)) / n
        assert child < gini_impurity(node.counts)
    # assigning the training records reproduces leaf counts
    states = np.array([assign_state(tree, r.predictors) for r in data.records])
    assert np.bincount(states, minlength=tree.n_leaves + 1)[1:].tolist() == [l.record_count for l in leaves]
    np.testing.assert_array_equal(states, tree.assign_many(data.predictor_matrix()))


def test_assign_rejects_non_finite():
    tree = grow_tree(dataset([0, 1, 2, 3], list("AABB")))
    with pytest.raises(ValidationError):
        assign_state(tree, [float("nan")])


# -- rules ---------------------------------------------------------------------

def test_rules_depth_one_temperature():
    data = dataset([50, 52, 55, 65, 70, 72], ["Rainy"] * 3 + ["Sunny"] * 3, names=["Temperature"])
    tree = grow_tree(data)
    assert [r.render() for r in extract_rules(tree)] == ["Temperature< 60", "Temperature>=60"]


def test_rules_single_leaf_true():
    tree = grow_tree(dataset([1, 2], ["A", "A"]))
    rules = extract_rules(tree)
    assert len(rules) == 1 and rules[0].predicates == () and rules[0].render() == "TRUE"


def _leaf(i, counts):
    return Node(i, np.array(counts))


def _hand_tree():
    # RR < 48 -> leaf; RR >= 48 -> (DBP < 50 -> leaf, DBP >= 50 -> leaf)
    inner = Node(2, np.array([3, 5]), 1, 50.0, _leaf(3, [1, 4]), _leaf(4, [2, 1]))
    root = Node(0, np.array([7, 6]), 0, 48.0, _leaf(1, [4, 1]), inner)
    return ClassificationTree(root, ["RR", "DBP"], ["Floor", "ICU"])


def test_rules_table_format_depth_two():
    rules = [r.render() for r in extract_rules(_hand_tree())]
    assert rules == ["RR< 48", "RR>=48 & DBP< 50", "RR>=48 & DBP>=50"]


def test_rules_simplify_repeated_feature():
    deep = Node(2, np.array([2, 2]), 0, 18.0, _leaf(3, [2, 0]), _leaf(4, [0, 2]))
    mid = Node(1, np.array([3, 3]), 0, 30.0, deep, _leaf(5, [1, 1]))
    root = Node(0, np.array([4, 5]), 0, 48.0, mid, _leaf(6, [1, 2]))
    tree = ClassificationTree(root, ["RR"], ["a", "b"])
    assert [r.render() for r in extract_rules(tree)] == ["RR< 18", "RR< 30 & RR>=18", "RR< 48 & RR>=30", "RR>=48"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_rules_partition_and_agree_with_assignment(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng)
    tree = grow_tree(data)
    rules = extract_rules(tree)
    probes = rng.uniform(-1, 9, size=(50, len(data.feature_names)))
    for x in np.vstack([probes, data.predictor_matrix()]):
        matched = [r.state_id for r in rules if r.matches(tree.feature_names, x)]
        assert matched == [assign_state(tree, x)]


def test_tree_json_round_trip():
    rng = np.random.default_rng(5)
    tree = grow_tree(random_dataset(rng, n=50))
    again = ClassificationTree.from_dict(tree.to_dict())
    assert again.structure_key() == tree.structure_key()
    assert again.to_dict() == tree.to_dict()


# -- pruning -------------------------------------------------------------------

def _all_prunings(node):
    """Every pruned subtree rooted at ``node`` as (misclassified, n_leaves, internal-id set)."""
    out = [(node.misclassified, 1, frozenset())]
    if node.is_leaf:
        return out
    for (rl, kl, il), (rr, kr, ir) in itertools.product(_all_prunings(node.left), _all_prunings(node.right)):
        out.append((rl + rr, kl + kr, il | ir | {node.node_id}))
    return out


def _smallest_minimiser(tree, alpha, n):
    options = _all_prunings(tree.root)
    cost = [r / n + alpha * k for r, k, _ in options]
    best = min(cost)
    ties = [o for o, c in zip(options, cost) if c <= best + 1e-12]
    return min(ties, key=lambda o: o[1])


def test_zero_gain_split_removed_at_alpha_zero():
    # left child keeps majority A (6A,2B), right is pure A: misclassification unchanged by the split
    X = [-4, -3, -2, -1.5, -1, -0.5, -0.2, -0.1, 1, 2, 3, 4]
    labels = list("AAABAAAB") + list("AAAA")
    data = dataset(X, labels)
    tree = grow_tree(data, TreeGrowthConfig(max_depth=1))
    assert tree.n_leaves == 2
    assert tree.root.left.misclassified + tree.root.right.misclassified == tree.root.misclassified
    report = cost_complexity_prune(tree, data, k=2, seed=0)
    assert len(report) == 1
    assert report[0].alpha == 0.0 and report[0].tree.n_leaves == 1
    # exhaustive weakest-link oracle agrees
    assert _smallest_minimiser(tree, 0.0, len(data))[1] == 1


def test_single_leaf_report():
    data = dataset(np.arange(6), ["A"] * 6)
    report = cost_complexity_prune(grow_tree(data), data, k=2, seed=1)
    assert len(report) == 1 and report[0].alpha == 0.0


def test_fold_count_validated():
    data = dataset(np.arange(10), list("AABBAABBAB"), entities=list("xxyyzzxxyz"))
    tree = grow_tree(data)
    with pytest.raises(ValidationError):
        cost_complexity_prune(tree, data, k=1)
    with pytest.raises(ValidationError):
        cost_complexity_prune(tree, data, k=4)


def _check_report(tree, data, report):
    alphas = report.alphas
    assert alphas[0] == 0.0
    assert all(a < b for a, b in zip(alphas, alphas[1:]))
    for prev, cur in zip(report, list(report)[1:]):
        assert cur.tree.n_leaves < prev.tree.n_leaves
        assert cur.tree.internal_ids() < prev.tree.internal_ids()
    assert report[-1].tree.n_leaves == 1
    assert report[0].tree.internal_ids() <= tree.internal_ids()
    for step in report:
        assert 0.0 <= step.cv_mr <= 1.0


def test_pruning_structure_random_trees():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        data = random_dataset(rng)
        tree = grow_tree(data, TreeGrowthConfig(minbucket=int(rng.integers(1, 4))))
        _check_report(tree, data, cost_complexity_prune(tree, data, k=3, seed=int(rng.integers(1000))))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_pruning_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n=int(rng.integers(10, 30)), n_feat=1)
    tree = grow_tree(data, TreeGrowthConfig(minbucket=2, max_depth=3))
    report = cost_complexity_prune(tree, data, k=2, seed=0)
    n = len(data)
    probes = report.alphas[1:] + [report.alphas[-1] * 2 + 1]
    for step, next_alpha in zip(report, probes):
        for alpha in (step.alpha, (step.alpha + next_alpha) / 2):
            r, k, ids = _smallest_minimiser(tree, alpha, n)
            assert step.tree.n_leaves == k
            assert step.tree.internal_ids() == ids


def test_cv_pruning_deterministic():
    rng = np.random.default_rng(8)
    data = random_dataset(rng, n=60)
    tree = grow_tree(data)
    a = cost_complexity_prune(tree, data, k=3, seed=4)
    b = cost_complexity_prune(tree, data, k=3, seed=4)
    assert [s.cv_mr for s in a] == [s.cv_mr for s in b]


def test_cv_misclassification_perfect_on_separable():
    X = np.r_[np.linspace(-5, -1, 20), np.linspace(1, 5, 20)]
    data = dataset(X, ["A"] * 20 + ["B"] * 20, entities=[f"e{i % 4}" for i in range(40)])
    assert cv_misclassification(data, TreeGrowthConfig(), k=4, seed=0) == 0.0


def test_cp_collapses_weak_branches():
    rng = np.random.default_rng(3)
    data = random_dataset(rng, n=60)
    full = grow_tree(data)
    pruned = grow_tree(data, TreeGrowthConfig(cp=0.05))
    assert pruned.n_leaves <= full.n_leaves
    assert pruned.internal_ids() <= full.internal_ids()
