"""Post-hoc calibration maps, score-based and variable-based.

Every method follows the same contract: ``fit_<method>(cal, ...)`` returns a
fitted model whose ``apply(dataset)`` gives a new :class:`Dataset` with the
same labels and variables and recalibrated probabilities.

Binary methods recalibrate the class-1 probability ``p1`` and set
``p0 = 1 - p1``. Dirichlet calibration (and tree-based calibration built on it)
handles any number of classes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .data import Dataset, atomic_write_text
from .metrics import BinningScheme, assign_bins
from .optim import FitReport, clip_probs, fit_logistic, fit_multinomial

FORMAT_VERSION = 1
DEFAULT_LAMBDA = 1e-3
DEFAULT_SB_BINS = 10


class MethodError(ValueError):
    """Calibration method does not apply to this data."""


def _require_binary(data: Dataset, method: str) -> None:
    if data.num_classes != 2:
        raise MethodError(f"{method} calibration needs K=2, got K={data.num_classes}")


def _binary_probs(p1: np.ndarray) -> np.ndarray:
    p1 = np.clip(p1, 0.0, 1.0)
    return np.column_stack([1.0 - p1, p1])


def _beta_features(p1):
    p = clip_probs(p1)
    return np.log(p), -np.log1p(-p)


class CalibratorModel:
    method: str = ""

    def predict_proba(self, data: Dataset) -> np.ndarray:
        raise NotImplementedError

    def apply(self, data: Dataset) -> Dataset:
        return data.with_probs(self.predict_proba(data))

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "method": self.method, **self.params()}


@dataclass(frozen=True)
class IdentityModel(CalibratorModel):
    method = "identity"

    def predict_proba(self, data):
        return np.array(data.probs)

    def params(self):
        return {}


@dataclass(frozen=True)
class PlattModel(CalibratorModel):
    a: float
    c: float
    report: FitReport | None = field(default=None, compare=False, repr=False)
    method = "platt"

    def map(self, p1):
        return expit(self.a * np.asarray(p1, dtype=np.float64) + self.c)

    def predict_proba(self, data):
        _require_binary(data, self.method)
        return _binary_probs(self.map(data.probs[:, 1]))

    def params(self):
        return {"a": self.a, "c": self.c}


@dataclass(frozen=True)
class BetaModel(CalibratorModel):
    a: float
    b: float
    c: float
    report: FitReport | None = field(default=None, compare=False, repr=False)
    method = "beta"

    def map(self, p1):
        lp, lq = _beta_features(np.asarray(p1, dtype=np.float64))
        return expit(self.a * lp + self.b * lq + self.c)

    def predict_proba(self, data):
        _require_binary(data, self.method)
        return _binary_probs(self.map(data.probs[:, 1]))

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class DirichletModel(CalibratorModel):
    weights: np.ndarray
    intercept: np.ndarray
    lam: float = DEFAULT_LAMBDA
    report: FitReport | None = field(default=None, compare=False, repr=False)
    method = "dirichlet"

    def transform(self, probs):
        return softmax(np.log(clip_probs(probs)) @ self.weights.T + self.intercept, axis=1)

    def predict_proba(self, data):
        if data.num_classes != self.weights.shape[0]:
            raise MethodError(f"model fitted for K={self.weights.shape[0]}, data has K={data.num_classes}")
        return self.transform(data.probs)

    def params(self):
        return {"weights": self.weights.tolist(), "intercept": self.intercept.tolist(), "lambda": self.lam}

    @classmethod
    def identity(cls, k: int) -> "DirichletModel":
        return cls(np.eye(k), np.zeros(k))


@dataclass(frozen=True)
class ScalingBinningModel(CalibratorModel):
    scaler: PlattModel
    edges: np.ndarray  # interior edges, strictly ascending
    means: np.ndarray  # len(edges) + 1 bin values
    method = "scaling-binning"

    @property
    def num_bins(self) -> int:
        return self.means.size

    def map(self, p1):
        z = self.scaler.map(p1)
        return self.means[np.searchsorted(self.edges, z, side="right")]

    def predict_proba(self, data):
        _require_binary(data, self.method)
        return _binary_probs(self.map(data.probs[:, 1]))

    def params(self):
        return {
            "scaler": self.scaler.to_dict(),
            "edges": self.edges.tolist(),
            "means": self.means.tolist(),
        }


@dataclass(frozen=True)
class _Standardizer:
    mean: float
    scale: float

    @classmethod
    def fit(cls, v):
        v = np.asarray(v, dtype=np.float64)
        sd = float(v.std())
        return cls(float(v.mean()), sd if sd > 0 else 1.0)

    def __call__(self, v):
        return (np.asarray(v, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True)
class AugLogisticModel(CalibratorModel):
    variable: str
    a: float
    b: float
    c: float
    v_mean: float = 0.0
    v_scale: float = 1.0
    report: FitReport | None = field(default=None, compare=False, repr=False)
    method = "aug-logistic"

    def map(self, p1, v):
        z = _Standardizer(self.v_mean, self.v_scale)(v)
        return expit(self.a * np.asarray(p1, dtype=np.float64) + self.b * z + self.c)

    def predict_proba(self, data):
        _require_binary(data, self.method)
        return _binary_probs(self.map(data.probs[:, 1], data.variable(self.variable)))

    def params(self):
        return {"variable": self.variable, "a": self.a, "b": self.b, "c": self.c,
                "v_mean": self.v_mean, "v_scale": self.v_scale}


@dataclass(frozen=True)
class AugBetaModel(CalibratorModel):
    variable: str
    a: float
    b: float
    c: float
    d: float
    d2: float = 0.0
    quadratic: bool = False
    v_mean: float = 0.0
    v_scale: float = 1.0
    report: FitReport | None = field(default=None, compare=False, repr=False)
    method = "aug-beta"

    def map(self, p1, v):
        lp, lq = _beta_features(np.asarray(p1, dtype=np.float64))
        z = _Standardizer(self.v_mean, self.v_scale)(v)
        return expit(self.a * lp + self.b * lq + self.d * z + self.d2 * (z * z) + self.c)

    def predict_proba(self, data):
        _require_binary(data, self.method)
        return _binary_probs(self.map(data.probs[:, 1], data.variable(self.variable)))

    def params(self):
        return {"variable": self.variable, "a": self.a, "b": self.b, "c": self.c, "d": self.d,
                "d2": self.d2, "quadratic": self.quadratic, "v_mean": self.v_mean, "v_scale": self.v_scale}


# ------------------------------------------------------------------ fits


def fit_platt(cal: Dataset) -> PlattModel:
    _require_binary(cal, "platt")
    w, rep = fit_logistic(cal.probs[:, 1], (cal.labels == 1).astype(float), l2=0.0)
    return PlattModel(float(w.weights[0]), w.intercept, rep)


def _fit_monotone(features: list[np.ndarray], y, protected: int):
    """Logistic fit where the first ``protected`` coefficients must be >= 0.

    A negative protected coefficient has its feature dropped (pinned to 0) and
    the model refitted, most negative first.
    """
    active = list(range(len(features)))
    while True:
        X = np.column_stack([features[j] for j in active]) if active else np.zeros((len(y), 1))
        w, rep = fit_logistic(X, y, l2=0.0)
        coef = np.zeros(len(features))
        if active:
            coef[active] = w.weights
        neg = [j for j in active if j < protected and coef[j] < 0]
        if not neg:
            return coef, w.intercept, rep
        active.remove(min(neg, key=lambda j: coef[j]))


def fit_beta(cal: Dataset) -> BetaModel:
    _require_binary(cal, "beta")
    lp, lq = _beta_features(cal.probs[:, 1])
    coef, c, rep = _fit_monotone([lp, lq], (cal.labels == 1).astype(float), protected=2)
    return BetaModel(float(coef[0]), float(coef[1]), float(c), rep)


def fit_dirichlet(cal: Dataset, lam: float = DEFAULT_LAMBDA) -> DirichletModel:
    X = np.log(clip_probs(cal.probs))
    w, rep = fit_multinomial(X, cal.labels, num_classes=cal.num_classes, l2=lam)
    return DirichletModel(w.weights, w.intercept, lam, rep)


def equal_support_bin_means(z, num_bins: int):
    """Interior edges of ``num_bins`` equal-support bins of ``z`` and the mean
    of ``z`` inside each bin."""
    z = np.asarray(z, dtype=np.float64)
    _, edges = assign_bins(z, BinningScheme("equal_support", num_bins))
    interior = np.unique(edges[1:-1])
    while True:
        bins = np.searchsorted(interior, z, side="right")
        counts = np.bincount(bins, minlength=interior.size + 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        # ties at a boundary can leave a bin empty; merge it with a neighbour
        j = int(empty[0])
        interior = np.delete(interior, j if j < interior.size else j - 1)
    sums = np.bincount(bins, weights=z, minlength=interior.size + 1)
    return interior, np.clip(sums / counts, 0.0, 1.0)


def fit_scaling_binning(cal: Dataset, num_bins: int = DEFAULT_SB_BINS) -> ScalingBinningModel:
    """Platt scaler on the first half of ``cal``, equal-support bins of the
    scaled second half, each bin replaced by its mean scaled value."""
    _require_binary(cal, "scaling-binning")
    if cal.n < 2 * num_bins:
        raise ValueError(f"scaling-binning needs at least {2 * num_bins} calibration records, got {cal.n}")
    half = cal.n // 2
    scaler = fit_platt(cal.subset(slice(0, half)))
    interior, means = equal_support_bin_means(scaler.map(cal.probs[half:, 1]), num_bins)
    return ScalingBinningModel(scaler, interior, means)


def fit_aug_logistic(cal: Dataset, variable: str) -> AugLogisticModel:
    _require_binary(cal, "aug-logistic")
    std = _Standardizer.fit(cal.variable(variable))
    z = std(cal.variable(variable))
    w, rep = fit_logistic(np.column_stack([cal.probs[:, 1], z]), (cal.labels == 1).astype(float), l2=0.0)
    a, b = (float(x) for x in w.weights)
    return AugLogisticModel(variable, a, b, w.intercept, std.mean, std.scale, rep)


def fit_aug_beta(cal: Dataset, variable: str, quadratic: bool = False) -> AugBetaModel:
    _require_binary(cal, "aug-beta")
    std = _Standardizer.fit(cal.variable(variable))
    z = std(cal.variable(variable))
    lp, lq = _beta_features(cal.probs[:, 1])
    feats = [lp, lq, z] + ([z * z] if quadratic else [])
    coef, c, rep = _fit_monotone(feats, (cal.labels == 1).astype(float), protected=2)
    d2 = float(coef[3]) if quadratic else 0.0
    return AugBetaModel(variable, float(coef[0]), float(coef[1]), float(c), float(coef[2]), d2,
                        quadratic, std.mean, std.scale, rep)


# ---------------------------------------------------------------- trees


@dataclass(frozen=True)
class TreeSpec:
    max_depth: int = 2
    min_leaf_fraction: float = 0.1

    def __post_init__(self):
        if not 0 <= self.max_depth <= 2:
            raise ValueError("max_depth must be 0, 1 or 2")
        if not 0 < self.min_leaf_fraction <= 0.5:
            raise ValueError("min_leaf_fraction must be in (0, 0.5]")

    def min_leaf(self, n_cal: int) -> int:
        return max(1, math.ceil(self.min_leaf_fraction * n_cal - 1e-9))


@dataclass(frozen=True)
class TreeNode:
    """Either a leaf (``leaf`` set) or a split ``v <= threshold`` -> left."""

    leaf: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    @property
    def num_leaves(self) -> int:
        return 1 if self.is_leaf else self.left.num_leaves + self.right.num_leaves

    def route(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.is_leaf:
            return np.full(v.shape, self.leaf, dtype=np.int64)
        go_left = v <= self.threshold
        out = np.empty(v.shape, dtype=np.int64)
        out[go_left] = self.left.route(v[go_left])
        out[~go_left] = self.right.route(v[~go_left])
        return out

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.leaf}
        return {"threshold": self.threshold, "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "TreeNode":
        if "leaf" in d:
            return cls(leaf=int(d["leaf"]))
        return cls(threshold=float(d["threshold"]), left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def _gini(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(axis=-1, keepdims=True)
    p = counts / np.where(tot > 0, tot, 1)
    return 1.0 - (p * p).sum(axis=-1)


def best_gini_split(v, y, num_classes: int, min_leaf: int):
    """Exhaustive search over midpoints of consecutive distinct sorted ``v``.

    Returns ``(threshold, impurity_decrease)`` or ``None`` when no split keeps
    both sides at ``min_leaf`` records or more.
    """
    n = v.size
    if n < 2 * min_leaf:
        return None
    order = np.argsort(v, kind="stable")
    vs, ys = v[order], y[order]
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]  # left[i] counts the first i+1 points
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n)
    valid = (vs[1:] > vs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
    if not valid.any():
        return None
    child = (nl * _gini(left) + (n - nl) * _gini(right)) / n
    gain = _gini(total[None, :])[0] - child
    gain = np.where(valid, gain, -np.inf)
    i = int(np.argmax(gain))
    return 0.5 * (vs[i] + vs[i + 1]), float(gain[i])


def fit_tree(v, y, spec: TreeSpec = TreeSpec(), num_classes: int | None = None) -> TreeNode:
    """CART-style depth-limited Gini tree predicting ``y`` from ``v`` alone."""
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = int(num_classes if num_classes is not None else y.max() + 1)
    min_leaf = spec.min_leaf(v.size)
    counter = iter(range(1 << 10))

    def grow(idx, depth):
        if depth < spec.max_depth:
            found = best_gini_split(v[idx], y[idx], k, min_leaf)
            if found is not None and found[1] > 1e-12:
                thr = found[0]
                mask = v[idx] <= thr
                left = grow(idx[mask], depth + 1)
                right = grow(idx[~mask], depth + 1)
                return TreeNode(threshold=float(thr), left=left, right=right)
        return TreeNode(leaf=next(counter))

    return grow(np.arange(v.size), 0)


@dataclass(frozen=True)
class TreeVBModel(CalibratorModel):
    variable: str
    tree: TreeNode
    leaves: tuple[CalibratorModel, ...]
    fallback: tuple[bool, ...]
    method = "tree-vb"

    def predict_proba(self, data):
        leaf = self.tree.route(data.variable(self.variable))
        if len(self.leaves) == 1:
            return self.leaves[0].predict_proba(data)
        out = np.empty_like(data.probs)
        for j, model in enumerate(self.leaves):
            mask = leaf == j
            if mask.any():
                out[mask] = model.predict_proba(data.subset(mask))
        return out

    def params(self):
        return {
            "variable": self.variable,
            "tree": self.tree.to_dict(),
            "leaves": [m.to_dict() for m in self.leaves],
            "fallback": list(self.fallback),
        }


def fit_tree_vb(cal: Dataset, variable: str, spec: TreeSpec = TreeSpec(), lam: float = DEFAULT_LAMBDA) -> TreeVBModel:
    """Split the calibration set with a shallow tree on ``variable``, then fit
    beta (K=2) or Dirichlet (K>2) calibration separately in each leaf.

    A leaf whose labels take a single value cannot be fitted and falls back to
    the identity map; ``fallback`` records which leaves did.
    """
    v = cal.variable(variable)
    tree = fit_tree(v, cal.labels, spec, cal.num_classes)
    leaf_of = tree.route(v)
    models, fallback = [], []
    for j in range(tree.num_leaves):
        sub = cal.subset(leaf_of == j)
        if np.unique(sub.labels).size < 2:
            models.append(IdentityModel())
            fallback.append(True)
            continue
        models.append(fit_beta(sub) if cal.num_classes == 2 else fit_dirichlet(sub, lam))
        fallback.append(False)
    return TreeVBModel(variable, tree, tuple(models), tuple(fallback))


# -------------------------------------------------- functional aliases


def apply_model(model: CalibratorModel, data: Dataset) -> Dataset:
    return model.apply(data)


apply_platt = apply_beta = apply_dirichlet = apply_scaling_binning = apply_tree_vb = apply_model
apply_aug_logistic = apply_aug_beta = apply_model


METHODS = ("platt", "beta", "dirichlet", "scaling-binning", "tree-vb", "aug-logistic", "aug-beta")
VARIABLE_METHODS = ("tree-vb", "aug-logistic", "aug-beta")


def fit_method(method: str, cal: Dataset, variable: str | None = None, *, num_bins: int = DEFAULT_SB_BINS,
               lam: float = DEFAULT_LAMBDA, tree_spec: TreeSpec = TreeSpec(), quadratic: bool = False):
    if method in VARIABLE_METHODS and variable is None:
        raise MethodError(f"method {method!r} needs a variable")
    if method == "platt":
        return fit_platt(cal)
    if method == "beta":
        return fit_beta(cal)
    if method == "dirichlet":
        return fit_dirichlet(cal, lam)
    if method == "scaling-binning":
        return fit_scaling_binning(cal, num_bins)
    if method == "tree-vb":
        return fit_tree_vb(cal, variable, tree_spec, lam)
    if method == "aug-logistic":
        return fit_aug_logistic(cal, variable)
    if method == "aug-beta":
        return fit_aug_beta(cal, variable, quadratic)
    raise MethodError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


# -------------------------------------------------------- serialization


def model_from_dict(d: dict) -> CalibratorModel:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    m = d["method"]
    if m == "identity":
        return IdentityModel()
    if m == "platt":
        return PlattModel(d["a"], d["c"])
    if m == "beta":
        return BetaModel(d["a"], d["b"], d["c"])
    if m == "dirichlet":
        return DirichletModel(np.array(d["weights"], dtype=np.float64),
                              np.array(d["intercept"], dtype=np.float64), d["lambda"])
    if m == "scaling-binning":
        return ScalingBinningModel(model_from_dict(d["scaler"]), np.array(d["edges"], dtype=np.float64),
                                   np.array(d["means"], dtype=np.float64))
    if m == "aug-logistic":
        return AugLogisticModel(d["variable"], d["a"], d["b"], d["c"], d["v_mean"], d["v_scale"])
    if m == "aug-beta":
        return AugBetaModel(d["variable"], d["a"], d["b"], d["c"], d["d"], d["d2"], d["quadratic"],
                            d["v_mean"], d["v_scale"])
    if m == "tree-vb":
        return TreeVBModel(d["variable"], TreeNode.from_dict(d["tree"]),
                           tuple(model_from_dict(x) for x in d["leaves"]), tuple(d["fallback"]))
    raise ValueError(f"unknown method tag {m!r}")


def dumps_model(model: CalibratorModel) -> str:
    return json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n"


def save_model(model: CalibratorModel, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_model(model))


def load_model(path: str | os.PathLike) -> CalibratorModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
