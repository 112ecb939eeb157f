import json
import math

import numpy as np
import pytest

from varcal.data import load_predictions, write_predictions
from varcal.metrics import BinningScheme, assign_bins, ece_hat, vece_hat
from varcal.synth import (
    RNG_ALGORITHM,
    SynthParameterError,
    TheoremConfig,
    analytic_targets,
    gen_consistent_overconfident,
    gen_theorem1,
    gen_theorem2,
    metadata,
    write_metadata,
)

WIDTH20 = BinningScheme("equal_width", 20)


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


class TestConfig:
    @pytest.mark.parametrize("alpha", [-0.01, 0.26])
    def test_alpha_bounds(self, alpha):
        with pytest.raises(SynthParameterError):
            TheoremConfig(alpha=alpha)

    @pytest.mark.parametrize("alpha", [0.0, 0.25])
    def test_alpha_endpoints(self, alpha):
        gen_theorem1(TheoremConfig(alpha=alpha, n=100))

    def test_other_bounds(self):
        with pytest.raises(SynthParameterError):
            TheoremConfig(k=1)
        with pytest.raises(SynthParameterError):
            TheoremConfig(n=0)

    def test_gamma(self):
        assert TheoremConfig(k=2).gamma == 0.75
        assert TheoremConfig(k=10).gamma == pytest.approx(0.55)


class TestGenerators:
    @pytest.mark.parametrize("gen", [gen_theorem1, gen_theorem2])
    @pytest.mark.parametrize("k", [2, 3, 10])
    def test_valid_and_deterministic(self, gen, k):
        cfg = TheoremConfig(k=k, alpha=0.1, n=2000, seed=3)
        a, b = gen(cfg), gen(cfg)
        assert a == b
        assert a.num_classes == k and a.variable_names == ["v"]
        np.testing.assert_allclose(a.probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(a.predictions == 0)
        assert gen(TheoremConfig(k=k, alpha=0.1, n=2000, seed=4)) != a

    def test_file_round_trip(self, tmp_path):
        d = gen_theorem1(TheoremConfig(k=3, n=500, seed=1))
        write_predictions(d, tmp_path / "t.csv")
        assert load_predictions(tmp_path / "t.csv") == d

    def test_theorem1_cells(self):
        cfg = TheoremConfig(k=2, alpha=0.1, n=200_000, seed=5)
        d = gen_theorem1(cfg)
        low_v = d.variable("v") <= cfg.v_t
        low_s = d.confidence <= cfg.gamma
        table = {(True, True): 0.9, (True, False): 1.0, (False, True): 0.5, (False, False): 0.6}
        for (lv, ls), acc in table.items():
            cell = (low_v == lv) & (low_s == ls)
            assert abs(d.correct[cell].mean() - acc) <= max(three_sigma(acc, cell.sum()), 1e-12)

    def test_theorem1_scores_independent_of_v(self):
        d = gen_theorem1(TheoremConfig(k=2, alpha=0.1, n=50_000, seed=6))
        assert abs(np.corrcoef(d.confidence, d.variable("v"))[0, 1]) < 0.02
        assert d.confidence.min() >= 0.65 and d.confidence.max() <= 0.85

    def test_theorem1_metrics(self):
        d = gen_theorem1(TheoremConfig(k=2, alpha=0.1, n=200_000, seed=7))
        assert ece_hat(d, WIDTH20) == pytest.approx(0.025, abs=0.005)
        assert vece_hat(d, "v") == pytest.approx(0.20, abs=0.005)

    def test_theorem1_many_classes_no_spread(self):
        d = gen_theorem1(TheoremConfig(k=10, alpha=0.0, n=200_000, seed=8))
        assert ece_hat(d) <= 0.01
        assert vece_hat(d, "v") == pytest.approx(0.45, abs=0.005)

    def test_theorem2_support(self):
        cfg = TheoremConfig(k=3, alpha=0.1, n=20_000, seed=9)
        s = gen_theorem2(cfg).confidence
        assert not np.any((s > 1 / 3 + 0.1) & (s < 0.9))
        assert s.min() >= 1 / 3 and s.max() <= 1.0

    def test_theorem2_point_masses(self):
        s = gen_theorem2(TheoremConfig(k=4, alpha=0.0, n=1000, seed=10)).confidence
        assert set(np.unique(s)) == {0.25, 1.0}

    @pytest.mark.parametrize("k,seed", [(2, 11), (5, 12), (10, 13)])
    def test_theorem2_accuracy(self, k, seed):
        cfg = TheoremConfig(k=k, alpha=0.1, n=50_000, seed=seed)
        acc = gen_theorem2(cfg).correct.mean()
        assert abs(acc - cfg.gamma) <= three_sigma(cfg.gamma, cfg.n)

    def test_theorem2_metrics(self):
        d = gen_theorem2(TheoremConfig(k=2, alpha=0.1, n=200_000, seed=14))
        assert ece_hat(d, WIDTH20) == pytest.approx(0.20, abs=0.005)
        assert vece_hat(d, "v") <= 0.01

    def test_theorem2_many_classes(self):
        d = gen_theorem2(TheoremConfig(k=10, alpha=0.05, n=200_000, seed=15))
        assert ece_hat(d, BinningScheme("equal_width", 40)) == pytest.approx(0.425, abs=0.005)

    def test_median_split(self):
        d = gen_theorem1(TheoremConfig(n=100_000, v_t=0.3, seed=16))
        v = d.variable("v")
        assert abs((v <= 0.3).mean() - 0.5) <= three_sigma(0.5, v.size)
        assert v.min() >= 0 and v.max() <= 1


class TestOverconfident:
    def test_metrics_coincide(self):
        d = gen_consistent_overconfident(0.6, 0.9, 0.1, n=200_000, seed=17)
        for scheme in (BinningScheme("equal_support", 10), WIDTH20, BinningScheme("equal_width", 5)):
            e, v = ece_hat(d, scheme), vece_hat(d, "v", scheme)
            assert e == pytest.approx(0.10, abs=0.005)
            assert v == pytest.approx(0.10, abs=0.005)

    def test_exact_equality_when_every_bin_overconfident(self):
        d = gen_consistent_overconfident(n=50_000, seed=18)
        scheme = BinningScheme("equal_support", 10)
        for values in (d.confidence, d.variable("v")):
            bins, _ = assign_bins(values, scheme)
            for b in range(10):
                m = bins == b
                assert d.confidence[m].mean() > d.correct[m].mean()
        assert ece_hat(d, scheme) == vece_hat(d, "v", scheme)

    def test_zero_gap_limit(self):
        d = gen_consistent_overconfident(delta=0.0, n=200_000, seed=19)
        assert ece_hat(d) < 0.01 and vece_hat(d, "v") < 0.01

    def test_invalid_range(self):
        with pytest.raises(SynthParameterError):
            gen_consistent_overconfident(0.6, 0.9, delta=0.7)
        with pytest.raises(SynthParameterError):
            gen_consistent_overconfident(0.3, 0.9, k=2)


class TestTargets:
    def test_examples(self):
        assert analytic_targets(1, 2, 0.1) == pytest.approx((0.025, 0.20))
        assert analytic_targets(2, 2, 0.0) == pytest.approx((0.25, 0.0))
        assert analytic_targets(1, float("inf"), 0.0)[1] == 0.5
        assert analytic_targets(2, 10, 0.05)[0] == pytest.approx(0.425)

    def test_unknown_theorem(self):
        with pytest.raises(ValueError):
            analytic_targets(3, 2, 0.1)

    def test_metadata(self, tmp_path):
        cfg = TheoremConfig(k=10, alpha=0.0, n=10, seed=1)
        meta = metadata(2, cfg)
        assert meta["targets"] == {"ece": pytest.approx(0.45), "vece": 0.0}
        assert meta["rng"]["algorithm"] == RNG_ALGORITHM
        assert meta["config"]["seed"] == 1
        write_metadata(meta, tmp_path / "m.json")
        assert json.loads((tmp_path / "m.json").read_text())["theorem"] == 2
