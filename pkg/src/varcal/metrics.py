"""Binned score-based (ECE) and variable-based (VECE) calibration error.

Both estimators share one kernel: partition records into bins, then sum
``n_b / n * |Acc_b - Conf_b|``. The only difference is what is binned, the
confidence score or a metadata variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Literal

import numpy as np

from .data import Dataset
from .loess import LoessConfig, calibration_curves, max_curve_gap

BinKind = Literal["equal_width", "equal_support"]


class BinningError(ValueError):
    pass


@dataclass(frozen=True)
class BinningScheme:
    kind: BinKind = "equal_support"
    num_bins: int = 10

    def __post_init__(self):
        if self.kind not in ("equal_width", "equal_support"):
            raise BinningError(f"unknown binning kind {self.kind!r}")
        if int(self.num_bins) != self.num_bins or self.num_bins < 1:
            raise BinningError(f"num_bins must be a positive integer, got {self.num_bins}")


DEFAULT_SCHEME = BinningScheme()


@dataclass(frozen=True)
class BinSummary:
    lower: float
    upper: float
    count: int
    accuracy: float | None
    mean_confidence: float | None

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def gap(self) -> float:
        if self.empty:
            return 0.0
        return abs(self.accuracy - self.mean_confidence)


def assign_bins(values, scheme: BinningScheme, domain: tuple[float, float] | None = None):
    """Assign each value to a bin.

    Returns ``(bins, edges)`` where ``bins[i]`` is in ``0..B-1`` and ``edges``
    has ``B + 1`` ascending entries. Equal-width bins span ``domain`` (default
    ``[min, max]`` of the values); the last bin is closed on the right. Equal
    support bins are consecutive runs of the stably sorted values, with sizes
    differing by at most one and the larger bins first.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise BinningError("cannot bin an empty set of values")
    B = scheme.num_bins

    if scheme.kind == "equal_width":
        lo, hi = domain if domain is not None else (float(values.min()), float(values.max()))
        if hi <= lo:
            edges = np.full(B + 1, lo, dtype=np.float64)
            edges[-1] = hi
            return np.zeros(n, dtype=np.int64), edges
        edges = np.linspace(lo, hi, B + 1)
        bins = np.searchsorted(edges[1:-1], values, side="right")
        return bins.astype(np.int64), edges

    if B > n:
        raise BinningError(f"equal_support binning needs num_bins <= n ({B} > {n})")
    order = np.argsort(values, kind="stable")
    sizes = np.full(B, n // B, dtype=np.int64)
    sizes[: n % B] += 1
    bins = np.empty(n, dtype=np.int64)
    bins[order] = np.repeat(np.arange(B), sizes)
    sorted_vals = values[order]
    stops = np.cumsum(sizes)
    edges = np.empty(B + 1, dtype=np.float64)
    edges[0] = sorted_vals[0]
    edges[-1] = sorted_vals[-1]
    for b in range(1, B):
        edges[b] = 0.5 * (sorted_vals[stops[b - 1] - 1] + sorted_vals[stops[b - 1]])
    return bins, edges


def _binned_error(correct: np.ndarray, conf: np.ndarray, bins: np.ndarray, num_bins: int) -> float:
    """Sum of ``n_b / n * |Acc_b - Conf_b|``, evaluated without rounding drift.

    The total is rewritten as ``(1/n) * sum_b sign_b * sum_{i in b} (c_i - s_i)``
    and handed to ``math.fsum`` as one flat list of terms, so it is the
    correctly rounded value of the exact sum. When every bin has the same sign
    the term multiset no longer depends on the binning, which makes the score
    and variable estimators agree bit for bit.
    """
    n = correct.size
    order = np.argsort(bins, kind="stable")
    counts = np.bincount(bins, minlength=num_bins)
    starts = np.concatenate([[0], np.cumsum(counts)])
    c_sorted = correct[order]
    s_sorted = conf[order]
    signs = np.zeros(n, dtype=np.float64)
    for b in range(num_bins):
        lo, hi = starts[b], starts[b + 1]
        if lo == hi:
            continue
        d = math.fsum(np.concatenate([c_sorted[lo:hi], -s_sorted[lo:hi]]))
        signs[lo:hi] = math.copysign(1.0, d) if d != 0.0 else 0.0
    terms = np.concatenate([signs * c_sorted, -signs * s_sorted])
    return math.fsum(terms) / n


def _summaries(correct, conf, bins, edges, num_bins) -> list[BinSummary]:
    out = []
    counts = np.bincount(bins, minlength=num_bins)
    acc_sum = np.bincount(bins, weights=correct, minlength=num_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=num_bins)
    for b in range(num_bins):
        nb = int(counts[b])
        out.append(
            BinSummary(
                lower=float(edges[b]),
                upper=float(edges[b + 1]),
                count=nb,
                accuracy=float(acc_sum[b] / nb) if nb else None,
                mean_confidence=float(conf_sum[b] / nb) if nb else None,
            )
        )
    return out


def confidence_domain(num_classes: int) -> tuple[float, float]:
    return 1.0 / num_classes, 1.0


def _score_bins(dataset: Dataset, scheme: BinningScheme):
    return assign_bins(dataset.confidence, scheme, domain=confidence_domain(dataset.num_classes))


def ece_hat(dataset: Dataset, scheme: BinningScheme = DEFAULT_SCHEME) -> float:
    """Binned expected calibration error over confidence scores."""
    bins, _ = _score_bins(dataset, scheme)
    return _binned_error(dataset.correct, dataset.confidence, bins, scheme.num_bins)


def vece_hat(dataset: Dataset, variable: str, scheme: BinningScheme = DEFAULT_SCHEME) -> float:
    """Binned variable-based calibration error: same estimator, bins over ``variable``."""
    bins, _ = assign_bins(dataset.variable(variable), scheme)
    return _binned_error(dataset.correct, dataset.confidence, bins, scheme.num_bins)


def reliability_data(dataset: Dataset, scheme: BinningScheme = DEFAULT_SCHEME) -> list[BinSummary]:
    bins, edges = _score_bins(dataset, scheme)
    return _summaries(dataset.correct, dataset.confidence, bins, edges, scheme.num_bins)


def variable_curve_data(
    dataset: Dataset, variable: str, scheme: BinningScheme = DEFAULT_SCHEME
) -> list[BinSummary]:
    bins, edges = assign_bins(dataset.variable(variable), scheme)
    return _summaries(dataset.correct, dataset.confidence, bins, edges, scheme.num_bins)


def weighted_gap(summaries: list[BinSummary]) -> float:
    n = sum(s.count for s in summaries)
    return sum(s.count / n * s.gap for s in summaries)


def vce_point(accuracy_at_v: float, mean_confidence_at_v: float) -> float:
    return abs(accuracy_at_v - mean_confidence_at_v)


def worst_case_vce(dataset: Dataset, variable: str, config: LoessConfig | None = None) -> tuple[float, float]:
    """Grid value of ``variable`` where the smoothed error and predicted-error
    curves are furthest apart, and that gap."""
    err, pred = calibration_curves(dataset, variable, config)
    return max_curve_gap(err, pred)


@dataclass(frozen=True)
class VariableDiagnosis:
    variable: str
    vece: float
    v_star: float
    vce_at_v_star: float


@dataclass(frozen=True)
class DiagnosisReport:
    ece: float
    variables: list[VariableDiagnosis] = field(default_factory=list)
    scheme: BinningScheme = DEFAULT_SCHEME

    def to_dict(self) -> dict:
        return {
            "ece": self.ece,
            "binning": {"kind": self.scheme.kind, "num_bins": self.scheme.num_bins},
            "variables": [asdict(v) for v in self.variables],
        }

    def to_table(self) -> str:
        width = max([len("variable")] + [len(v.variable) for v in self.variables])
        lines = [
            f"ECE: {100 * self.ece:.2f}%",
            f"{'variable':<{width}}  {'VECE':>8}  {'VCE(v*)':>8}  {'v*':>12}",
            "-" * (width + 34),
        ]
        for v in self.variables:
            lines.append(
                f"{v.variable:<{width}}  {100 * v.vece:>7.2f}%  {100 * v.vce_at_v_star:>7.2f}%  {v.v_star:>12.6g}"
            )
        return "\n".join(lines) + "\n"


def rank_variables(
    dataset: Dataset,
    scheme: BinningScheme = DEFAULT_SCHEME,
    config: LoessConfig | None = None,
    variables: list[str] | None = None,
) -> DiagnosisReport:
    """ECE plus per-variable VECE and worst-case VCE, sorted by decreasing VECE."""
    names = variables if variables is not None else dataset.variable_names
    if not names:
        raise ValueError("dataset has no variables to rank")
    rows = []
    for name in names:
        v_star, gap = worst_case_vce(dataset, name, config)
        rows.append(VariableDiagnosis(name, vece_hat(dataset, name, scheme), v_star, gap))
    # stable sort keeps column order among equal VECE values
    rows.sort(key=lambda r: -r.vece)
    return DiagnosisReport(ece=ece_hat(dataset, scheme), variables=rows, scheme=scheme)
