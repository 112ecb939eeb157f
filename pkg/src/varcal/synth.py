"""Synthetic prediction sets with known score- and variable-based error.

Three constructions:

* ``gen_theorem1``: perfectly calibrated in the score, badly miscalibrated in
  ``v`` (overconfident for large ``v``, underconfident for small ``v``).
* ``gen_theorem2``: the reverse, calibrated in ``v`` but with scores clustered
  at both ends of the score range while accuracy stays at the midpoint.
* ``gen_consistent_overconfident``: accuracy ``s - delta`` everywhere, so the
  two errors coincide.

The model always predicts class 0. A correct record gets label 0; an incorrect
one gets a label drawn uniformly from the other ``K - 1`` classes. The
remaining ``1 - s`` probability mass is spread evenly over those classes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset, atomic_write_text

RNG_ALGORITHM = "numpy.random.PCG64"
DEFAULT_SEED = 20240101


class SynthParameterError(ValueError):
    pass


@dataclass(frozen=True)
class TheoremConfig:
    k: int = 2
    alpha: float = 0.1
    n: int = 10_000
    v_t: float = 0.5
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.k < 2:
            raise SynthParameterError(f"k must be >= 2, got {self.k}")
        if not 0.0 <= self.alpha <= 0.25:
            raise SynthParameterError(f"alpha must be in [0, 0.25], got {self.alpha}")
        if self.n < 1:
            raise SynthParameterError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.v_t < 1.0:
            raise SynthParameterError(f"v_t must be in (0, 1), got {self.v_t}")

    @property
    def gamma(self) -> float:
        return 0.5 + 1.0 / (2 * self.k)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _draw_v(rng, n, v_t):
    """v ~ U(0,1) rescaled piecewise so that P(v <= v_t) = 0.5."""
    u = rng.random(n)
    return np.where(u <= 0.5, 2 * u * v_t, v_t + (2 * u - 1) * (1 - v_t))


def _assemble(s, correct, v, k, rng) -> Dataset:
    n = s.size
    rest = np.minimum((1.0 - s) / (k - 1), s)
    probs = np.repeat(rest[:, None], k, axis=1)
    probs[:, 0] = s
    wrong = 1 + rng.integers(0, k - 1, size=n)
    labels = np.where(correct, 0, wrong)
    return Dataset(probs, labels, {"v": v})


def gen_theorem1(cfg: TheoremConfig) -> Dataset:
    """Scores ``U(gamma - alpha, gamma + alpha)`` independent of ``v``, with
    accuracy given by the four-cell table in (v <= v_t, s <= gamma)."""
    rng = _rng(cfg.seed)
    g, a, k = cfg.gamma, cfg.alpha, cfg.k
    s = np.full(cfg.n, g) if a == 0 else rng.uniform(g - a, g + a, cfg.n)
    v = _draw_v(rng, cfg.n, cfg.v_t)
    low_v = v <= cfg.v_t
    low_s = s <= g
    acc = np.where(
        low_v,
        np.where(low_s, 1.0 - a, 1.0),
        np.where(low_s, 1.0 / k, 1.0 / k + a),
    )
    correct = rng.random(cfg.n) < acc
    return _assemble(s, correct, v, k, rng)


def gen_theorem2(cfg: TheoremConfig) -> Dataset:
    """Equal mixture of ``U(1/K, 1/K + alpha)`` and ``U(1 - alpha, 1)`` scores;
    accuracy ``gamma`` regardless of score or ``v``."""
    rng = _rng(cfg.seed)
    a, k = cfg.alpha, cfg.k
    high = rng.random(cfg.n) < 0.5
    u = rng.random(cfg.n)
    s = np.where(high, 1.0 - a * u, 1.0 / k + a * u)
    v = _draw_v(rng, cfg.n, cfg.v_t)
    correct = rng.random(cfg.n) < cfg.gamma
    return _assemble(s, correct, v, k, rng)


def gen_consistent_overconfident(
    low: float = 0.6, high: float = 0.9, delta: float = 0.1, n: int = 10_000, seed: int = DEFAULT_SEED, k: int = 2
) -> Dataset:
    """Scores ``U(low, high)``, ``v ~ U(0, 1)``, correct with probability ``s - delta``."""
    if not (1.0 / k <= low < high <= 1.0):
        raise SynthParameterError(f"score range must satisfy 1/K <= low < high <= 1, got ({low}, {high})")
    if not (0.0 <= delta <= low):
        raise SynthParameterError(f"delta must keep s - delta in [0, 1], got delta={delta}")
    rng = _rng(seed)
    s = rng.uniform(low, high, n)
    v = rng.random(n)
    correct = rng.random(n) < s - delta
    return _assemble(s, correct, v, k, rng)


def analytic_targets(theorem: int, k: int, alpha: float) -> tuple[float, float]:
    """Population ``(ECE, VECE)`` of the theorem-1 or theorem-2 construction.

    ``k = float('inf')`` gives the many-class limit.
    """
    base = 0.5 - 0.5 / k - alpha / 2
    if theorem == 1:
        return alpha / 4, base
    if theorem == 2:
        return base, 0.0
    raise ValueError(f"theorem must be 1 or 2, got {theorem}")


GENERATORS = {1: gen_theorem1, 2: gen_theorem2}


def metadata(theorem: int, cfg: TheoremConfig) -> dict:
    ece, vece = analytic_targets(theorem, cfg.k, cfg.alpha)
    return {
        "theorem": theorem,
        "config": asdict(cfg),
        "gamma": cfg.gamma,
        "targets": {"ece": ece, "vece": vece},
        "rng": {"algorithm": RNG_ALGORITHM, "numpy_version": np.__version__},
        "variable": "v",
    }


def write_metadata(meta: dict, path: str | os.PathLike) -> None:
    atomic_write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
