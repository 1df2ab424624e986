"""Binary CART classification trees whose leaves become hidden states.

Trees split on continuous predictors only.  At an internal node a record
goes left when ``x[feature] < threshold`` and right otherwise.  Leaves are
numbered 1..L from left to right and carry the observation counts of the
training records that reached them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ValidationError
from .temporal_data import TemporalDataset

_TIE_TOL = 1e-9


@dataclass(frozen=True)
class TreeGrowthConfig:
    """Stopping rules for :func:`grow_tree`.

    ``cp`` is an rpart-style complexity parameter: after growth, any branch
    whose weakest-link cost per extra leaf is below ``cp`` times the root's
    misclassification cost is collapsed.  ``cp=0`` keeps the greedy tree as
    grown.
    """

    minbucket: int = 1
    max_depth: int = 30
    min_split: int | None = None
    cp: float = 0.0

    def __post_init__(self):
        if self.minbucket < 1:
            raise ValidationError(f"minbucket must be >= 1, got {self.minbucket}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_split is not None and self.min_split < 2:
            raise ValidationError(f"min_split must be >= 2, got {self.min_split}")
        if self.cp < 0:
            raise ValidationError(f"cp must be >= 0, got {self.cp}")

    @property
    def effective_min_split(self) -> int:
        return self.min_split if self.min_split is not None else 2 * self.minbucket


@dataclass(eq=False)
class Node:
    node_id: int
    counts: np.ndarray
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    state_id: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def record_count(self) -> int:
        return int(self.counts.sum())

    @property
    def class_distribution(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def misclassified(self) -> int:
        return int(self.counts.sum() - self.counts.max())


@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str  # "<" or ">="
    threshold: float

    def holds(self, value: float) -> bool:
        return value < self.threshold if self.op == "<" else value >= self.threshold

    def render(self) -> str:
        return f"{self.feature}{'< ' if self.op == '<' else '>='}{format_threshold(self.threshold)}"


@dataclass(frozen=True)
class StateRule:
    state_id: int
    predicates: tuple[Predicate, ...]

    def render(self) -> str:
        if not self.predicates:
            return "TRUE"
        return " & ".join(p.render() for p in self.predicates)

    def matches(self, feature_names: Sequence[str], x: Sequence[float]) -> bool:
        pos = {name: i for i, name in enumerate(feature_names)}
        return all(p.holds(x[pos[p.feature]]) for p in self.predicates)

    def __str__(self) -> str:
        return self.render()


def format_threshold(v: float) -> str:
    return f"{v:.6g}"


class ClassificationTree:
    """An immutable grown (or pruned) tree over a fixed predictor schema."""

    def __init__(self, root: Node, feature_names: Sequence[str], alphabet: Sequence[str],
                 config: TreeGrowthConfig | None = None):
        self.root = root
        self.feature_names = tuple(feature_names)
        self.alphabet = tuple(alphabet)
        self.config = config or TreeGrowthConfig()
        self._leaves = list(_iter_leaves(root))
        for i, leaf in enumerate(self._leaves, start=1):
            leaf.state_id = i

    @property
    def n_leaves(self) -> int:
        return len(self._leaves)

    @property
    def leaves(self) -> list[Node]:
        return list(self._leaves)

    def internal_nodes(self) -> list[Node]:
        return [n for n in _iter_nodes(self.root) if not n.is_leaf]

    def internal_ids(self) -> frozenset[int]:
        return frozenset(n.node_id for n in self.internal_nodes())

    def assign(self, x: Sequence[float]) -> int:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.state_id

    def assign_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X), dtype=int)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.state_id
                continue
            go_left = X[idx, node.feature] < node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        """Majority observation index of each record's leaf (lowest index on ties)."""
        majority = np.array([int(np.argmax(leaf.counts)) for leaf in self._leaves])
        return majority[self.assign_many(X) - 1]

    def structure_key(self) -> tuple:
        """Hashable description of splits and leaf counts; equal keys mean identical trees."""
        def walk(node):
            if node.is_leaf:
                return tuple(int(c) for c in node.counts)
            return (node.feature, node.threshold, walk(node.left), walk(node.right))
        return walk(self.root)

    def to_dict(self) -> dict:
        def walk(node):
            if node.is_leaf:
                return {
                    "id": node.node_id,
                    "state_id": node.state_id,
                    "class_distribution": [float(p) for p in node.class_distribution],
                    "record_count": node.record_count,
                    "counts": [int(c) for c in node.counts],
                }
            return {
                "id": node.node_id,
                "feature": self.feature_names[node.feature],
                "threshold": float(node.threshold),
                "counts": [int(c) for c in node.counts],
                "left": walk(node.left),
                "right": walk(node.right),
            }
        cfg = self.config
        return {
            "feature_names": list(self.feature_names),
            "alphabet": list(self.alphabet),
            "config": {"minbucket": cfg.minbucket, "max_depth": cfg.max_depth,
                       "min_split": cfg.min_split, "cp": cfg.cp},
            "root": walk(self.root),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassificationTree":
        features = list(doc["feature_names"])
        pos = {name: i for i, name in enumerate(features)}

        def walk(d):
            counts = np.array(d["counts"], dtype=np.int64)
            if "feature" not in d:
                return Node(d["id"], counts)
            return Node(d["id"], counts, pos[d["feature"]], float(d["threshold"]),
                        walk(d["left"]), walk(d["right"]))
        return cls(walk(doc["root"]), features, doc["alphabet"], TreeGrowthConfig(**doc.get("config", {})))


def _iter_nodes(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if not n.is_leaf:
            stack.append(n.right)
            stack.append(n.left)


def _iter_leaves(node: Node) -> Iterator[Node]:
    return (n for n in _iter_nodes(node) if n.is_leaf)


def gini_impurity(class_counts: Sequence[int]) -> float:
    counts = np.asarray(class_counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValidationError("gini_impurity needs at least one record")
    p = counts / total
    return float(1.0 - np.sum(p * p))


# -- growth -----------------------------------------------------------------

def _best_split(X: np.ndarray, Y: np.ndarray, minbucket: int):
    """Best (feature, threshold, score) maximising sum_k c_k^2/n over both children.

    Maximising that score is the same as minimising the weighted child Gini.
    Returns None when no admissible split exists.
    """
    n, n_feat = X.shape
    total = Y.sum(axis=0)
    n_left = np.arange(1, n)
    n_right = n - n_left
    best = None
    for f in range(n_feat):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(Y[order], axis=0)[:-1]
        right = total - left
        valid = (xs[1:] > xs[:-1]) & (n_left >= minbucket) & (n_right >= minbucket)
        if not valid.any():
            continue
        score = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / n_right
        score = np.where(valid, score, -np.inf)
        top = score.max()
        i = int(np.flatnonzero(score >= top - _TIE_TOL * max(1.0, abs(top)))[0])
        if best is None or top > best[2] + _TIE_TOL * max(1.0, abs(best[2])):
            lo, hi = xs[i], xs[i + 1]
            thr = (lo + hi) / 2.0
            if not lo < thr <= hi:
                thr = hi
            best = (f, float(thr), float(score[i]))
    return best


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, config: TreeGrowthConfig) -> Node:
    Y = np.zeros((len(y), n_classes), dtype=np.int64)
    Y[np.arange(len(y)), y] = 1
    root_cost = len(y) - Y.sum(axis=0).max()
    floor_cost = config.cp * root_cost
    min_split = config.effective_min_split
    next_id = iter(range(1 << 62))

    def build(idx: np.ndarray, depth: int) -> Node:
        counts = Y[idx].sum(axis=0)
        node = Node(next(next_id), counts)
        n = len(idx)
        cost = n - counts.max()
        if n < min_split or depth >= config.max_depth or cost == 0:
            return node
        if config.cp > 0 and cost < floor_cost:
            return node
        split = _best_split(X[idx], Y[idx], config.minbucket)
        if split is None:
            return node
        f, thr, score = split
        parent_score = float((counts * counts).sum()) / n
        if score <= parent_score + _TIE_TOL * max(1.0, parent_score):
            return node
        go_left = X[idx, f] < thr
        node.feature, node.threshold = f, thr
        node.left = build(idx[go_left], depth + 1)
        node.right = build(idx[~go_left], depth + 1)
        return node

    root = build(np.arange(len(y)), 0)
    if config.cp > 0 and root_cost > 0:
        threshold = config.cp * root_cost / len(y)
        root = _collapse_below(root, threshold, len(y))
    return root


def grow_tree(train: TemporalDataset, config: TreeGrowthConfig | None = None) -> ClassificationTree:
    """Greedy recursive binary splitting on Gini impurity.

    Candidate thresholds are midpoints between consecutive distinct values.
    Equal-gain splits go to the lowest feature index, then lowest threshold.
    """
    config = config or TreeGrowthConfig()
    if len(train) == 0:
        raise ValidationError("cannot grow a tree on an empty training set")
    if config.minbucket > len(train):
        raise ValidationError(f"minbucket {config.minbucket} exceeds training size {len(train)}")
    root = _grow(train.predictor_matrix(), train.observation_indices(), len(train.alphabet), config)
    return ClassificationTree(root, train.feature_names, train.alphabet, config)


# -- pruning ----------------------------------------------------------------

def _link_strengths(root: Node, n_total: int) -> dict[int, float]:
    """Weakest-link value g(t) for every internal node, in misclassification-rate units."""
    out: dict[int, float] = {}

    def walk(node):
        if node.is_leaf:
            return node.misclassified, 1
        r_l, k_l = walk(node.left)
        r_r, k_r = walk(node.right)
        r_sub, k = r_l + r_r, k_l + k_r
        out[node.node_id] = (node.misclassified - r_sub) / (n_total * (k - 1))
        return r_sub, k

    walk(root)
    return out


def _copy_collapsing(node: Node, collapse: set[int]) -> Node:
    if node.is_leaf or node.node_id in collapse:
        return Node(node.node_id, node.counts)
    return Node(node.node_id, node.counts, node.feature, node.threshold,
                _copy_collapsing(node.left, collapse), _copy_collapsing(node.right, collapse))


def _collapse_below(root: Node, alpha: float, n_total: int) -> Node:
    """Repeatedly collapse internal nodes whose g(t) is below ``alpha``."""
    while True:
        g = _link_strengths(root, n_total)
        weak = {k for k, v in g.items() if v < alpha - _TIE_TOL * alpha}
        if not weak:
            return root
        root = _copy_collapsing(root, weak)


def _weakest_link_sequence(root: Node, n_total: int) -> list[tuple[float, Node]]:
    seq: list[tuple[float, Node]] = []
    alpha = 0.0
    while True:
        # collapse every link at or below the current alpha, re-evaluating after each pass
        while True:
            g = _link_strengths(root, n_total)
            weak = {k for k, v in g.items() if v <= alpha + _TIE_TOL * max(alpha, 1.0 / n_total)}
            if not weak:
                break
            root = _copy_collapsing(root, weak)
        seq.append((alpha, root))
        g = _link_strengths(root, n_total)
        if not g:
            return seq
        alpha = min(g.values())


@dataclass(frozen=True)
class PruningStep:
    alpha: float
    tree: ClassificationTree
    cv_mr: float


@dataclass(frozen=True)
class PruningReport:
    steps: tuple[PruningStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def alphas(self) -> list[float]:
        return [s.alpha for s in self.steps]


def entity_folds(data: TemporalDataset, k: int, seed: int) -> np.ndarray:
    """Fold number (0..k-1) of every record; whole entities share a fold."""
    n_ent = len(data.entities)
    if k < 2 or k > n_ent:
        raise ValidationError(f"fold count must lie in [2, {n_ent}], got {k}")
    perm = np.random.default_rng(seed).permutation(n_ent)
    fold_of_entity = np.empty(n_ent, dtype=int)
    fold_of_entity[perm] = np.arange(n_ent) % k
    return fold_of_entity[data.entity_index()]


def _predict_root(root: Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X), dtype=int)
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = int(np.argmax(node.counts))
            continue
        go_left = X[idx, node.feature] < node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def cv_misclassification(data: TemporalDataset, config: TreeGrowthConfig, k: int, seed: int) -> float:
    """k-fold (by entity) misclassification rate of trees grown with ``config``."""
    folds = entity_folds(data, k, seed)
    X, y = data.predictor_matrix(), data.observation_indices()
    errors = 0
    for f in range(k):
        tr, te = folds != f, folds == f
        if not te.any():
            continue
        root = _grow(X[tr], y[tr], len(data.alphabet), _fold_config(config, int(tr.sum())))
        errors += int((_predict_root(root, X[te]) != y[te]).sum())
    return errors / len(y)


def _fold_config(config: TreeGrowthConfig, n: int) -> TreeGrowthConfig:
    if config.minbucket <= n:
        return config
    return TreeGrowthConfig(n, config.max_depth, config.min_split, config.cp)


def cost_complexity_prune(tree: ClassificationTree, train: TemporalDataset, k: int = 10,
                          seed: int = 0) -> PruningReport:
    """Weakest-link pruning sequence of ``tree``, each subtree scored by k-fold CV-MR.

    The first step is the tree with every zero-cost link removed (identical
    to ``tree`` when it has none) at alpha 0; the last is the root alone.
    Fold trees are grown with the tree's own config; subtree ``i`` is matched
    in each fold at the geometric mean of its alpha interval.
    """
    folds = entity_folds(train, k, seed)
    X, y = train.predictor_matrix(), train.observation_indices()
    n = len(y)
    main = _weakest_link_sequence(tree.root, n)
    alphas = [a for a, _ in main]
    probes = [math.sqrt(alphas[i] * alphas[i + 1]) for i in range(len(alphas) - 1)] + [math.inf]

    errors = np.zeros(len(main), dtype=np.int64)
    for f in range(k):
        tr, te = folds != f, folds == f
        if not te.any():
            continue
        root = _grow(X[tr], y[tr], len(tree.alphabet), _fold_config(tree.config, int(tr.sum())))
        fold_seq = _weakest_link_sequence(root, int(tr.sum()))
        fold_alphas = [a for a, _ in fold_seq]
        for i, probe in enumerate(probes):
            j = max(jj for jj, a in enumerate(fold_alphas) if a <= probe)
            errors[i] += int((_predict_root(fold_seq[j][1], X[te]) != y[te]).sum())

    steps = tuple(
        PruningStep(a, ClassificationTree(r, tree.feature_names, tree.alphabet, tree.config), errors[i] / n)
        for i, (a, r) in enumerate(main)
    )
    return PruningReport(steps)


# -- rules ------------------------------------------------------------------

def extract_rules(tree: ClassificationTree) -> list[StateRule]:
    """One simplified root-to-leaf conjunction per state, in state order."""
    rules: list[StateRule] = []

    def walk(node, path):
        if node.is_leaf:
            rules.append(StateRule(node.state_id, _simplify(path)))
            return
        name = tree.feature_names[node.feature]
        walk(node.left, path + [Predicate(name, "<", node.threshold)])
        walk(node.right, path + [Predicate(name, ">=", node.threshold)])

    walk(tree.root, [])
    return sorted(rules, key=lambda r: r.state_id)


def _simplify(path: list[Predicate]) -> tuple[Predicate, ...]:
    tightest: dict[tuple[str, str], Predicate] = {}
    for p in path:
        key = (p.feature, p.op)
        cur = tightest.get(key)
        if cur is None:
            tightest[key] = p
        elif (p.op == "<" and p.threshold < cur.threshold) or (p.op == ">=" and p.threshold > cur.threshold):
            tightest[key] = p
    return tuple(tightest.values())


def assign_state(tree: ClassificationTree, predictors: Sequence[float]) -> int:
    x = [float(v) for v in predictors]
    if len(x) != len(tree.feature_names):
        raise ValidationError(f"expected {len(tree.feature_names)} predictors, got {len(x)}")
    if not all(math.isfinite(v) for v in x):
        raise ValidationError("predictor values must be finite")
    return tree.assign(x)
