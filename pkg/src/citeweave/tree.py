"""Binary CART classifier grown on Gini impurity, fully deterministic.

Splits are ``feature <= threshold`` with thresholds at midpoints between
consecutive distinct training values.  The split minimizing the weighted
child impurity wins; exact ties go to the lowest feature index, then the
lowest threshold.  Growth stops at pure nodes, below two samples, or when
no split strictly reduces impurity.  There is no depth cap.  Leaf labels
are the majority class, with ties labeled ``failed``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PASSED = "passed"
FAILED = "failed"

_MIN_SAMPLES_SPLIT = 2


@dataclass
class TreeNode:
    class_counts: tuple[int, int]  # training (passed, failed) at this node
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass
class DecisionTreeModel:
    root: TreeNode
    n_features: int

    def predict_one(self, x) -> str:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, X: np.ndarray) -> list[str]:
        return [self.predict_one(row) for row in np.asarray(X, dtype=float)]

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


def _gini(n_passed: int, n_failed: int) -> float:
    total = n_passed + n_failed
    if total == 0:
        return 0.0
    p = n_passed / total
    q = n_failed / total
    return 1.0 - p * p - q * q


def _leaf(n_passed: int, n_failed: int) -> TreeNode:
    label = PASSED if n_passed > n_failed else FAILED
    return TreeNode(class_counts=(n_passed, n_failed), label=label)


def train_decision_tree(X: np.ndarray, y: list[str] | np.ndarray) -> DecisionTreeModel:
    """Grow a CART tree on raw (unscaled) features.

    ``y`` holds the labels ``"passed"`` / ``"failed"``.  A one-class input
    degenerates to a single leaf with that label.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    is_passed = np.asarray([label == PASSED for label in y], dtype=bool)
    if X.shape[0] != is_passed.shape[0]:
        raise ValueError("X and y length mismatch")

    def grow(indices: np.ndarray) -> TreeNode:
        n_passed = int(is_passed[indices].sum())
        n_failed = int(indices.size - n_passed)
        if n_passed == 0 or n_failed == 0 or indices.size < _MIN_SAMPLES_SPLIT:
            return _leaf(n_passed, n_failed)

        parent_impurity = _gini(n_passed, n_failed)
        total = indices.size
        best: tuple[float, int, float] | None = None  # (weighted impurity, feature, threshold)
        best_mask: np.ndarray | None = None
        for feat in range(X.shape[1]):
            col = X[indices, feat]
            order = np.argsort(col, kind="stable")
            sorted_vals = col[order]
            sorted_pass = is_passed[indices][order]
            distinct = np.nonzero(sorted_vals[:-1] != sorted_vals[1:])[0]
            if distinct.size == 0:
                continue
            pass_prefix = np.cumsum(sorted_pass)
            for cut in distinct:
                threshold = (sorted_vals[cut] + sorted_vals[cut + 1]) / 2.0
                n_left = int(cut + 1)
                n_right = total - n_left
                left_pass = int(pass_prefix[cut])
                right_pass = n_passed - left_pass
                weighted = (
                    n_left * _gini(left_pass, n_left - left_pass)
                    + n_right * _gini(right_pass, n_right - right_pass)
                ) / total
                # scanning in (feature, threshold) order: strict < keeps the
                # lowest feature index then lowest threshold on ties
                if best is None or weighted < best[0]:
                    best = (weighted, feat, float(threshold))
                    best_mask = col <= threshold
        if best is None or best[0] >= parent_impurity:
            return _leaf(n_passed, n_failed)
        _, feat, threshold = best
        left = grow(indices[best_mask])
        right = grow(indices[~best_mask])
        return TreeNode(
            class_counts=(n_passed, n_failed),
            feature=feat,
            threshold=threshold,
            left=left,
            right=right,
        )

    root = grow(np.arange(X.shape[0]))
    return DecisionTreeModel(root=root, n_features=X.shape[1])


def export_tree(
    model: DecisionTreeModel,
    X_test: np.ndarray,
    y_test: list[str] | np.ndarray,
    feature_names: tuple[str, ...] | None = None,
) -> dict:
    """Route test rows through the tree and emit a JSON-ready structure.

    Internal nodes report their test and the per-class test counts; leaves
    report the label, per-class test counts, and the fraction of routed rows
    matching the label (``null`` when no rows reach the leaf).
    """
    X_test = np.asarray(X_test, dtype=float)
    labels = list(y_test)

    def name(idx: int) -> str:
        return feature_names[idx] if feature_names else f"f{idx}"

    def walk(node: TreeNode, rows: list[int]) -> dict:
        counts = {
            PASSED: sum(1 for i in rows if labels[i] == PASSED),
            FAILED: sum(1 for i in rows if labels[i] == FAILED),
        }
        if node.is_leaf:
            total = counts[PASSED] + counts[FAILED]
            accuracy = counts[node.label] / total if total else None
            return {
                "kind": "leaf",
                "label": node.label,
                "test_counts": counts,
                "accuracy": accuracy,
            }
        left_rows = [i for i in rows if X_test[i, node.feature] <= node.threshold]
        right_rows = [i for i in rows if X_test[i, node.feature] > node.threshold]
        return {
            "kind": "split",
            "feature": name(node.feature),
            "threshold": node.threshold,
            "test": f"{name(node.feature)} <= {node.threshold:g}",
            "test_counts": counts,
            "left": walk(node.left, left_rows),
            "right": walk(node.right, right_rows),
        }

    return walk(model.root, list(range(X_test.shape[0])))
