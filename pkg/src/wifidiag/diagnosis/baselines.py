"""Native baseline classifiers on numpy: multinomial logistic regression,
k-nearest neighbors, a CART-style decision tree, and a single-hidden-layer
MLP trained by plain gradient descent (Adam).  All are deterministic given
their hyperparameters and seed, and serialize to plain dicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingError(ValueError):
    """Raised when a training set cannot support the requested model."""


def _check_classes(y: np.ndarray, classes: list[int] | None) -> list[int]:
    present = sorted(int(c) for c in np.unique(y))
    if classes is None:
        return present
    missing = [c for c in classes if c not in present]
    if missing:
        raise TrainingError(f"training set has no samples for class {missing[0]}")
    return sorted(int(c) for c in classes)


def _one_hot(y: np.ndarray, classes: list[int]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(y), len(classes)))
    for row, label in enumerate(y):
        out[row, index[int(label)]] = 1.0
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class _Adam:
    def __init__(self, shapes: dict[str, tuple], lr: float):
        self.lr = lr
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + eps)


# --------------------------------------------------------------------------
# Logistic regression
# --------------------------------------------------------------------------

@dataclass
class LogRegModel:
    weights: np.ndarray  # (F+1, K), last row is the bias
    classes: list[int]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Xb = np.hstack([X, np.ones((len(X), 1))])
        return _softmax(Xb @ self.weights)

    def predict(self, X: np.ndarray) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.array([self.classes[i] for i in proba.argmax(axis=1)])

    def to_dict(self) -> dict:
        return {"kind": "logreg", "weights": self.weights.tolist(), "classes": self.classes}


def _train_logreg(X: np.ndarray, y: np.ndarray, classes: list[int],
                  lr: float = 0.05, epochs: int = 400, l2: float = 1e-4) -> LogRegModel:
    Y = _one_hot(y, classes)
    Xb = np.hstack([X, np.ones((len(X), 1))])
    W = np.zeros((Xb.shape[1], len(classes)))
    opt = _Adam({"W": W.shape}, lr)
    for _ in range(epochs):
        P = _softmax(Xb @ W)
        grad = Xb.T @ (P - Y) / len(X) + l2 * W
        opt.update({"W": W}, {"W": grad})
    return LogRegModel(weights=W, classes=classes)


# --------------------------------------------------------------------------
# k-nearest neighbors
# --------------------------------------------------------------------------

@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    classes: list[int]

    def predict(self, X: np.ndarray) -> np.ndarray:
        d2 = (X ** 2).sum(1)[:, None] + (self.X ** 2).sum(1)[None, :] - 2.0 * X @ self.X.T
        order = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
        out = np.empty(len(X), dtype=int)
        hi = int(self.y.max()) + 1
        for i in range(len(X)):
            votes = np.bincount(self.y[order[i]], minlength=hi)
            out[i] = int(votes.argmax())  # vote ties resolve to the lowest label
        return out

    def to_dict(self) -> dict:
        return {"kind": "knn", "k": self.k, "classes": self.classes,
                "X": self.X.tolist(), "y": self.y.tolist()}


# --------------------------------------------------------------------------
# Decision tree (CART, gini impurity)
# --------------------------------------------------------------------------

@dataclass
class _TreeNode:
    label: int
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None

    def to_dict(self) -> dict:
        if self.left is None:
            return {"label": self.label}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass
class DecisionTreeModel:
    root: _TreeNode
    classes: list[int]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X), dtype=int)
        for i, row in enumerate(X):
            node = self.root
            while node.left is not None:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.label
        return out

    def to_dict(self) -> dict:
        return {"kind": "dtree", "classes": self.classes, "tree": self.root.to_dict()}


def _gini_split(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int):
    """Best (weighted-gini, feature, threshold) over all midpoint splits."""
    n, n_feat = X.shape
    best = (np.inf, -1, 0.0)
    eye = np.eye(n_classes)
    for f in range(n_feat):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        prefix = np.cumsum(eye[ys], axis=0)
        cut = np.nonzero(np.diff(xs) > 1e-12)[0]  # split between cut and cut+1
        cut = cut[(cut + 1 >= min_leaf) & (n - cut - 1 >= min_leaf)]
        if cut.size == 0:
            continue
        nl = (cut + 1).astype(float)
        nr = n - nl
        left = prefix[cut]
        right = prefix[-1][None, :] - left
        gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(1)
        gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(weighted.argmin())
        if weighted[i] < best[0] - 1e-12:
            thr = 0.5 * (xs[cut[i]] + xs[cut[i] + 1])
            best = (float(weighted[i]), f, float(thr))
    return best


def _build_tree(X: np.ndarray, y: np.ndarray, n_classes: int, depth: int,
                max_depth: int, min_leaf: int) -> _TreeNode:
    counts = np.bincount(y, minlength=n_classes)
    label = int(counts.argmax())
    if depth >= max_depth or len(y) < 2 * min_leaf or counts.max() == len(y):
        return _TreeNode(label=label)
    gini, feat, thr = _gini_split(X, y, n_classes, min_leaf)
    if feat < 0:
        return _TreeNode(label=label)
    mask = X[:, feat] <= thr
    parent_gini = 1.0 - ((counts / len(y)) ** 2).sum()
    if gini >= parent_gini - 1e-12:
        return _TreeNode(label=label)
    return _TreeNode(
        label=label, feature=feat, threshold=thr,
        left=_build_tree(X[mask], y[mask], n_classes, depth + 1, max_depth, min_leaf),
        right=_build_tree(X[~mask], y[~mask], n_classes, depth + 1, max_depth, min_leaf),
    )


def _train_tree(X: np.ndarray, y: np.ndarray, classes: list[int],
                max_depth: int = 12, min_samples_leaf: int = 2) -> DecisionTreeModel:
    index = {c: i for i, c in enumerate(classes)}
    yy = np.array([index[int(v)] for v in y])
    root = _build_tree(X, yy, len(classes), 0, max_depth, min_samples_leaf)
    _relabel(root, classes)
    return DecisionTreeModel(root=root, classes=classes)


def _relabel(node: _TreeNode, classes: list[int]) -> None:
    node.label = classes[node.label]
    if node.left is not None:
        _relabel(node.left, classes)
        _relabel(node.right, classes)


# --------------------------------------------------------------------------
# MLP (one hidden tanh layer, softmax head)
# --------------------------------------------------------------------------

@dataclass
class MlpModel:
    params: dict[str, np.ndarray]
    classes: list[int]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        hidden = np.tanh(X @ self.params["W1"] + self.params["b1"])
        return _softmax(hidden @ self.params["W2"] + self.params["b2"])

    def predict(self, X: np.ndarray) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.array([self.classes[i] for i in proba.argmax(axis=1)])

    def to_dict(self) -> dict:
        return {"kind": "mlp", "classes": self.classes,
                "params": {k: v.tolist() for k, v in self.params.items()}}


def mlp_init(n_in: int, hidden: int, n_out: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def mlp_loss_and_grads(params: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray,
                       l2: float = 0.0) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy plus L2 on the weight matrices, with analytic
    gradients (verified elsewhere against finite differences)."""
    n = len(X)
    A = X @ params["W1"] + params["b1"]
    H = np.tanh(A)
    logits = H @ params["W2"] + params["b2"]
    P = _softmax(logits)
    eps = 1e-12
    loss = -np.sum(Y * np.log(P + eps)) / n
    loss += 0.5 * l2 * (np.sum(params["W1"] ** 2) + np.sum(params["W2"] ** 2))
    dlogits = (P - Y) / n
    dW2 = H.T @ dlogits + l2 * params["W2"]
    db2 = dlogits.sum(axis=0)
    dH = dlogits @ params["W2"].T
    dA = dH * (1.0 - H ** 2)
    dW1 = X.T @ dA + l2 * params["W1"]
    db1 = dA.sum(axis=0)
    return float(loss), {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def numeric_gradient(params: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray,
                     l2: float, key: str, index: tuple, h: float = 1e-6) -> float:
    """Central finite difference of the MLP loss along one parameter."""
    plus = {k: v.copy() for k, v in params.items()}
    minus = {k: v.copy() for k, v in params.items()}
    plus[key][index] += h
    minus[key][index] -= h
    lp, _ = mlp_loss_and_grads(plus, X, Y, l2)
    lm, _ = mlp_loss_and_grads(minus, X, Y, l2)
    return (lp - lm) / (2.0 * h)


def _train_mlp(X: np.ndarray, y: np.ndarray, classes: list[int], hidden_units: int = 64,
               lr: float = 0.01, epochs: int = 300, l2: float = 1e-4, seed: int = 13) -> MlpModel:
    Y = _one_hot(y, classes)
    params = mlp_init(X.shape[1], hidden_units, len(classes), seed)
    opt = _Adam({k: v.shape for k, v in params.items()}, lr)
    for _ in range(epochs):
        _, grads = mlp_loss_and_grads(params, X, Y, l2)
        opt.update(params, grads)
    return MlpModel(params=params, classes=classes)


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------

BASELINE_KINDS = ("logreg", "knn", "dtree", "mlp")


def train_baseline(kind: str, X: np.ndarray, y: np.ndarray, hyper: dict | None = None,
                   classes: list[int] | None = None):
    """Train one of the native baselines; `classes`, when given, must all be
    represented in the training labels."""
    if kind not in BASELINE_KINDS:
        raise TrainingError(f"unknown baseline kind {kind!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) != len(y) or len(X) == 0:
        raise TrainingError("features and labels must align and be non-empty")
    hyper = dict(hyper or {})
    cls = _check_classes(y, classes)
    if kind == "logreg":
        return _train_logreg(X, y, cls, **hyper)
    if kind == "knn":
        return KnnModel(X=X.copy(), y=y.copy(), k=int(hyper.get("k", 5)), classes=cls)
    if kind == "dtree":
        return _train_tree(X, y, cls, **hyper)
    return _train_mlp(X, y, cls, **hyper)
