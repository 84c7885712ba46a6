"""Decision-tree gate: Gini CART over categorical features, sklearn API.

The tree uses one-vs-rest equality splits because the features are
nominal codes, not ordered quantities. Training is fully deterministic:
candidate splits are scanned in (feature index, category value) order and
only a strictly larger impurity decrease replaces the incumbent.

A fitted :class:`GateClassifier` predicts Class 1 ("test all modes") when
the leaf class-1 probability reaches the decision threshold ``tau_``;
:meth:`GateClassifier.tune_threshold` picks the most aggressive threshold
whose Class-0 precision on a holdout still meets the target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

logger = logging.getLogger(__name__)

N_FEATURES = 4
DEFAULT_PER_CLASS = 5000


def gini(p: float) -> float:
    """Two-class Gini impurity 2p(1-p) for class-1 probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} out of [0, 1]")
    return 2.0 * p * (1.0 - p)


@dataclass(frozen=True)
class Leaf:
    p_class1: float
    n_samples: int


@dataclass(frozen=True)
class Split:
    feature: int  # 0-based feature index
    value: int
    eq: "TreeNode"  # samples with feature == value
    ne: "TreeNode"


TreeNode = Union[Leaf, Split]


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.eq), tree_depth(node.ne))


def tree_leaves(node: TreeNode) -> list[Leaf]:
    if isinstance(node, Leaf):
        return [node]
    return tree_leaves(node.eq) + tree_leaves(node.ne)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[tuple[float, int, int]]:
    """Scan every (feature, value) equality split; return (gain, feature, value).

    The scan order plus strict improvement implements the documented
    tie-break: lowest feature index first, then lowest category value.
    """
    n = len(y)
    parent = gini(float(y.mean()))
    best: Optional[tuple[float, int, int]] = None
    for f in range(X.shape[1]):
        col = X[:, f]
        for v in np.unique(col):
            mask = col == v
            n_eq = int(mask.sum())
            n_ne = n - n_eq
            if n_eq < min_leaf or n_ne < min_leaf:
                continue
            g_eq = gini(float(y[mask].mean()))
            g_ne = gini(float(y[~mask].mean()))
            gain = parent - (n_eq * g_eq + n_ne * g_ne) / n
            if best is None or gain > best[0]:
                best = (gain, f, int(v))
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int,
          min_leaf: int, min_gain: float) -> TreeNode:
    p = float(y.mean())
    if depth >= max_depth or p in (0.0, 1.0):
        return Leaf(p, len(y))
    found = _best_split(X, y, min_leaf)
    if found is None or found[0] < min_gain:
        return Leaf(p, len(y))
    _, f, v = found
    mask = X[:, f] == v
    return Split(feature=f, value=v,
                 eq=_grow(X[mask], y[mask], depth + 1, max_depth, min_leaf, min_gain),
                 ne=_grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, min_gain))


def _walk(node: TreeNode, x: Sequence[int]) -> Leaf:
    while isinstance(node, Split):
        node = node.eq if x[node.feature] == node.value else node.ne
    return node


class GateClassifier(ClassifierMixin, BaseEstimator):
    """Binary CART gate over the four categorical neighbor features.

    Parameters
    ----------
    max_depth : int, default=6
        Maximum number of splits on any root-to-leaf path.
    min_leaf : int, default=50
        Minimum training samples on each side of an admissible split.
    min_gain : float, default=1e-4
        Minimum weighted Gini impurity decrease for a split to be kept.
    target_class0_precision : float, default=0.8
        Precision of Class-0 predictions that threshold tuning must reach.

    Attributes
    ----------
    tree_ : TreeNode
        Trained tree root.
    tau_ : float
        Decision threshold; Class 1 is predicted when p_class1 >= tau_.
        0.5 after fit, replaced by :meth:`tune_threshold`.
    classes_ : ndarray of shape (2,)
    """

    def __init__(self, max_depth: int = 6, min_leaf: int = 50,
                 min_gain: float = 1e-4, target_class0_precision: float = 0.8):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.min_gain = min_gain
        self.target_class0_precision = target_class0_precision

    def fit(self, X, y) -> "GateClassifier":
        X, y = check_X_y(X, y, dtype=np.int64)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        classes = np.unique(y)
        if not np.array_equal(classes, [0, 1]):
            raise ValueError("training data must contain both classes 0 and 1")
        self.classes_ = classes
        self.n_features_in_ = N_FEATURES
        self.tree_ = _grow(X, y.astype(np.float64), 0, self.max_depth,
                           self.min_leaf, self.min_gain)
        self.tau_ = 0.5
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=np.int64)
        p1 = np.array([_walk(self.tree_, x).p_class1 for x in X])
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return (proba[:, 1] >= self.tau_).astype(np.int64)

    def classify_one(self, features: Sequence[int]) -> int:
        """Allocation-free single-block decision used inside the encoder."""
        return 1 if _walk(self.tree_, features).p_class1 >= self.tau_ else 0

    def tune_threshold(self, X, y, target: Optional[float] = None) -> "GateClassifier":
        """Pick the largest threshold keeping Class-0 precision at target.

        Candidates are the distinct leaf probabilities plus {0, 1}. A
        candidate qualifies only if it actually predicts Class 0 somewhere
        on the holdout and those predictions are right often enough. With
        no qualifying candidate the gate falls back to tau=0 (always open).
        """
        check_is_fitted(self, "tree_")
        X, y = check_X_y(X, y, dtype=np.int64)
        if target is None:
            target = self.target_class0_precision
        p1 = self.predict_proba(X)[:, 1]
        candidates = sorted({leaf.p_class1 for leaf in tree_leaves(self.tree_)} | {0.0, 1.0})
        best = 0.0
        for tau in candidates:
            pred0 = p1 < tau
            n0 = int(pred0.sum())
            if n0 == 0:
                continue
            precision = float((y[pred0] == 0).mean())
            if precision >= target and tau > best:
                best = tau
        self.tau_ = best
        return self


def balanced_sample(samples: list, n_per_class: int = DEFAULT_PER_CLASS,
                    seed: int = 0) -> tuple[list, dict[str, int]]:
    """Per-clip class-balanced subsample.

    For each clip with class-0 fraction p0, draws M samples per class
    without replacement, M = floor(p0*N) when p0 < 0.5 else
    floor((1-p0)*N), at least 1 and at most the minority class size.
    Clips missing a class are skipped with a warning. Returns the drawn
    samples (sorted by provenance) and the per-clip M values.
    """
    if n_per_class <= 0:
        raise ValueError("n_per_class must be positive")
    if not samples:
        raise ValueError("no samples to balance")
    rng = np.random.default_rng(seed)
    by_clip: dict[str, list] = {}
    for s in samples:
        by_clip.setdefault(s.clip_id, []).append(s)

    chosen = []
    m_per_clip: dict[str, int] = {}
    for clip_id in sorted(by_clip):
        clip_samples = by_clip[clip_id]
        class0 = [s for s in clip_samples if s.label == 0]
        class1 = [s for s in clip_samples if s.label == 1]
        if not class0 or not class1:
            logger.warning("clip %s has a single class, contributing no samples", clip_id)
            continue
        # integer arithmetic keeps floor(p0 * N) exact (0.3 * 1000 != 300 in floats)
        c0, total = len(class0), len(clip_samples)
        minority = c0 if 2 * c0 < total else total - c0
        m = minority * n_per_class // total
        m = max(1, min(m, len(class0), len(class1)))
        m_per_clip[clip_id] = m
        for pool in (class0, class1):
            idx = rng.choice(len(pool), size=m, replace=False)
            chosen.extend(pool[i] for i in idx)
    if not chosen:
        raise ValueError("no clip contains both classes")
    chosen.sort(key=lambda s: s.sort_key())
    return chosen, m_per_clip


@dataclass
class TrainReport:
    m_per_clip: dict[str, int]
    n_train: int
    holdout_clips: list[str]
    tau: float
    class0_precision: float
    class1_recall: float
    depth: int
    n_leaves: int


def _sample_matrix(samples: list) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([tuple(s.features) for s in samples], dtype=np.int64)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def train_gate(samples: list, n_per_class: int = DEFAULT_PER_CLASS, seed: int = 0,
               holdout_fraction: float = 0.2,
               **tree_params) -> tuple[GateClassifier, TrainReport]:
    """Balance, split a holdout by clip, fit, and tune the threshold.

    With a single input clip the holdout falls back to a per-class 20%
    sample split, since a clip-level split would leave no training data.
    Holdout samples stay unbalanced so the precision target reflects the
    deployment distribution.
    """
    clip_ids = sorted({s.clip_id for s in samples})
    rng = np.random.default_rng(seed)
    if len(clip_ids) >= 2:
        n_hold = max(1, round(holdout_fraction * len(clip_ids)))
        n_hold = min(n_hold, len(clip_ids) - 1)
        holdout_clips = sorted(rng.choice(clip_ids, size=n_hold, replace=False).tolist())
        train_samples = [s for s in samples if s.clip_id not in holdout_clips]
        holdout = [s for s in samples if s.clip_id in holdout_clips]
    else:
        holdout_clips = clip_ids
        by_class: dict[int, list] = {0: [], 1: []}
        for s in sorted(samples, key=lambda s: s.sort_key()):
            by_class[s.label].append(s)
        holdout, train_samples = [], []
        for label in (0, 1):
            pool = by_class[label]
            n_hold = max(1, int(holdout_fraction * len(pool)))
            idx = set(rng.choice(len(pool), size=min(n_hold, len(pool)), replace=False).tolist())
            holdout.extend(s for i, s in enumerate(pool) if i in idx)
            train_samples.extend(s for i, s in enumerate(pool) if i not in idx)

    balanced, m_per_clip = balanced_sample(train_samples, n_per_class, seed)
    model = GateClassifier(**tree_params)
    X, y = _sample_matrix(balanced)
    model.fit(X, y)

    Xh, yh = _sample_matrix(holdout)
    if len(np.unique(yh)) == 2:
        model.tune_threshold(Xh, yh)
    else:
        logger.warning("holdout has a single class; keeping gate always open")
        model.tau_ = 0.0

    pred = model.predict(Xh)
    pred0 = pred == 0
    precision = float((yh[pred0] == 0).mean()) if pred0.any() else 1.0
    recall = float((pred[yh == 1] == 1).mean()) if (yh == 1).any() else 1.0
    report = TrainReport(m_per_clip=m_per_clip, n_train=len(balanced),
                         holdout_clips=holdout_clips, tau=model.tau_,
                         class0_precision=precision, class1_recall=recall,
                         depth=tree_depth(model.tree_),
                         n_leaves=len(tree_leaves(model.tree_)))
    return model, report


def constant_gate(p_class1: float, tau: float) -> GateClassifier:
    """Single-leaf model, handy for forcing the gate always open or closed."""
    model = GateClassifier()
    model.classes_ = np.array([0, 1])
    model.n_features_in_ = N_FEATURES
    model.tree_ = Leaf(p_class1, 0)
    model.tau_ = tau
    return model


MODEL_MAGIC = "tree v1"


def _write_node(node: TreeNode, lines: list[str]) -> None:
    if isinstance(node, Leaf):
        lines.append(f"leaf {node.p_class1!r} {node.n_samples}")
    else:
        lines.append(f"split {node.feature + 1} {node.value}")
        _write_node(node.eq, lines)
        _write_node(node.ne, lines)


def write_model(model: GateClassifier, fh: IO[str]) -> None:
    """Line-oriented pre-order dump; repr floats make round-trips bit-exact."""
    check_is_fitted(model, "tree_")
    lines = [MODEL_MAGIC, f"tau {model.tau_!r}"]
    _write_node(model.tree_, lines)
    fh.write("\n".join(lines) + "\n")


def _read_node(lines: list[str], pos: int) -> tuple[TreeNode, int]:
    parts = lines[pos].split()
    if parts[0] == "leaf":
        return Leaf(float(parts[1]), int(parts[2])), pos + 1
    if parts[0] == "split":
        feature = int(parts[1]) - 1
        if not 0 <= feature < N_FEATURES:
            raise ValueError(f"model line {pos + 1}: feature index out of range")
        eq, pos = _read_node(lines, pos + 1)
        ne, pos = _read_node(lines, pos)
        return Split(feature, int(parts[2]), eq, ne), pos
    raise ValueError(f"model line {pos + 1}: expected split/leaf, got {parts[0]!r}")


def read_model(fh: IO[str]) -> GateClassifier:
    lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"not a {MODEL_MAGIC!r} model file")
    if not lines[1].startswith("tau "):
        raise ValueError("model line 2: expected tau")
    tau = float(lines[1].split()[1])
    tree, pos = _read_node(lines, 2)
    if pos != len(lines):
        raise ValueError(f"model line {pos + 1}: trailing content")
    model = constant_gate(0.0, tau)
    model.tree_ = tree
    return model


def save_model(model: GateClassifier, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_model(model, fh)


def load_model(path: str) -> GateClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        return read_model(fh)
