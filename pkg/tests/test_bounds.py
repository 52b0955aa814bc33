"""Closed-form bound calculator: formula values, monotonicity, rates, log-space safety.

Frozen expected values were computed with 50-digit arithmetic (mpmath) and
pasted here; the implementation must reproduce them in float64.
"""

import math

import numpy as np
import pytest

from loralab import (
    Architecture,
    BoundConfig,
    adapter_class_covering_log,
    ball_covering_log,
    dudley_rademacher_bound,
    failure_split,
    generalization_bound,
    loss_composition_lipschitz,
    parameterization_lipschitz,
    parameterization_lipschitz_interval,
    perturbation_radius,
)


def cfg_with(arch=None, **kw):
    arch = arch or Architecture(d=2, D=1, T=2, W=8, r=2)
    base = dict(box_bound=1.0, init_scale=1.0, weight_sup=0.5, n_samples=10_000,
                delta=0.1, depth_constant=1.0)
    base.update(kw)
    return BoundConfig(arch=arch, **base)


class TestFailureSplit:
    def test_boundary_delta_one(self):
        assert failure_split(1.0) == 1.0

    def test_matches_naive_form(self):
        for delta in (0.01, 0.05, 0.2, 0.5, 0.9):
            assert failure_split(delta) == pytest.approx(1 - math.sqrt(1 - delta), rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            failure_split(0.0)
        with pytest.raises(ValueError):
            failure_split(1.5)


class TestPerturbationRadius:
    def test_log_collapse(self):
        # eps = 2W/e makes the log equal 1
        assert perturbation_radius(1.0, 1.0, 1, 1, 2 / math.e) == pytest.approx(
            math.sqrt(2.0), rel=1e-12)

    def test_linear_in_box_bound(self):
        r1 = perturbation_radius(1.0, 1.0, 4, 64, 0.05)
        r2 = perturbation_radius(2.0, 1.0, 4, 64, 0.05)
        assert r2 == pytest.approx(2 * r1, rel=1e-12)

    def test_frozen_value(self):
        # sqrt(8 log 2560), mpmath 50-digit reference
        assert perturbation_radius(1.0, 1.0, 4, 64, 0.05) == pytest.approx(
            7.923515652776163, rel=1e-12)

    def test_eps_too_large(self):
        with pytest.raises(ValueError, match="eps"):
            perturbation_radius(1.0, 1.0, 1, 1, 2.0)


class TestParameterizationLipschitz:
    def test_zero_depth_exponent_means_one(self):
        cfg = cfg_with(arch=Architecture(d=2, D=1, T=1, W=8, r=2), depth_constant=1e-300)
        assert parameterization_lipschitz(cfg, 0.05) == pytest.approx(1.0, rel=1e-10)

    def test_unit_base_gives_power_of_two(self):
        # with weight_sup chosen so that R + R0 = 1 the bound is exactly 2^(c T)
        arch = Architecture(d=2, D=1, T=3, W=8, r=2)
        R = perturbation_radius(0.1, 0.1, arch.r, arch.W, 0.05)
        assert R < 1.0
        cfg = BoundConfig(arch=arch, box_bound=0.1, init_scale=0.1, weight_sup=1.0 - R,
                          n_samples=100, delta=0.1)
        assert parameterization_lipschitz(cfg, 0.05) == pytest.approx(2.0 ** 3, rel=1e-10)

    def test_frozen_value(self):
        # c=1, T=2, R=3, R0=1 -> 4 * 16 = 64; realized by solving for M nu
        arch = Architecture(d=2, D=1, T=2, W=8, r=2)
        eps = 0.05
        unit = perturbation_radius(1.0, 1.0, arch.r, arch.W, eps)
        cfg = BoundConfig(arch=arch, box_bound=3.0 / unit, init_scale=1.0,
                          weight_sup=1.0, n_samples=100, delta=0.1)
        assert parameterization_lipschitz(cfg, eps) == pytest.approx(64.0, rel=1e-10)

    def test_interval_brackets_upper(self):
        cfg = cfg_with()
        lo, hi = parameterization_lipschitz_interval(cfg, 0.05, c_lower=0.25)
        assert lo <= hi
        assert hi == pytest.approx(parameterization_lipschitz(cfg, 0.05), rel=1e-12)


class TestBallCoveringLog:
    def test_unit_everything(self):
        assert ball_covering_log(1.0, 1.0, 5) == 0.0

    def test_one_halving(self):
        assert ball_covering_log(1.0, 0.5, 1) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_floor_of_log(self):
        # floor(log2 0.3) = -2 so the count is (4 * 4)^10
        assert ball_covering_log(4.0, 0.3, 10) == pytest.approx(10 * math.log(16.0), rel=1e-12)


class TestAdapterClassCoveringLog:
    def test_collapses_at_matching_radius(self):
        cfg = cfg_with()
        eps = 0.05
        R = perturbation_radius(cfg.box_bound, cfg.init_scale, cfg.arch.r, cfg.arch.W, eps)
        ct1 = cfg.depth_constant * cfg.arch.T + 1
        eps_cov = (2 * R + 2 * cfg.weight_sup) ** ct1
        assert adapter_class_covering_log(cfg, eps, eps_cov) == pytest.approx(0.0, abs=1e-9)

    def test_frozen_value(self):
        # q=6, (cT+1)=3, 2R+2R0=8, eps_cov=0.1 -> 6 (3 log 8 + log 10)
        arch = Architecture(d=2, D=1, T=2, W=3, r=1)  # q_formula = 6
        eps = 0.05
        unit = perturbation_radius(1.0, 1.0, arch.r, arch.W, eps)
        cfg = BoundConfig(arch=arch, box_bound=3.0 / unit, init_scale=1.0,
                          weight_sup=1.0, n_samples=100, delta=0.1)
        got = adapter_class_covering_log(cfg, eps, 0.1)
        assert got == pytest.approx(51.24545830820132, rel=1e-12)

    def test_monotone_decreasing_in_radius(self):
        cfg = cfg_with()
        values = [adapter_class_covering_log(cfg, 0.05, e) for e in (0.01, 0.1, 1.0, 10.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_log_space_never_overflows(self):
        arch = Architecture(d=10**6 - 10, D=10, T=1, W=10, r=1)  # q ~ 1e6
        cfg = BoundConfig(arch=arch, box_bound=1e6, init_scale=1.0, weight_sup=1e6,
                          n_samples=10, delta=0.5)
        val = adapter_class_covering_log(cfg, 0.05, 1e-6)
        assert np.isfinite(val)


class TestDudley:
    def test_decays_with_samples(self):
        values = [dudley_rademacher_bound(cfg_with(n_samples=n), 0.05).rademacher_bound
                  for n in (10**4, 10**6, 10**8)]
        assert values[0] > values[1] > values[2]
        assert values[2] < 0.05

    def test_saturates_at_two(self):
        res = dudley_rademacher_bound(cfg_with(n_samples=1), 0.05)
        assert res.rademacher_bound == 2.0

    def test_frozen_value(self):
        # q=6, A=4.9, N=1e4 -> 12 sqrt(29.4) / 100
        arch = Architecture(d=2, D=1, T=2, W=3, r=1)
        eps = 0.05
        unit = perturbation_radius(1.0, 1.0, arch.r, arch.W, eps)
        target_base = math.exp(4.9 / 3.0) / 2.0  # (2R + 2R0)/2 with A=4.9, cT+1=3
        cfg = BoundConfig(arch=arch, box_bound=(target_base - 0.5) / unit, init_scale=1.0,
                          weight_sup=0.5, n_samples=10_000, delta=0.1)
        res = dudley_rademacher_bound(cfg, eps)
        assert res.rademacher_bound == pytest.approx(0.650661202162846, rel=1e-10)
        assert res.t_star == pytest.approx(math.exp(4.9 - 10_000 / 54.0), rel=1e-8)

    def test_degenerate_flagged_when_base_below_one(self):
        cfg = cfg_with(box_bound=1e-6, init_scale=1e-6, weight_sup=0.01)
        res = dudley_rademacher_bound(cfg, 0.05)
        assert res.degenerate
        assert res.rademacher_bound == 0.0


class TestLossCompositionLipschitz:
    def test_unit(self):
        assert loss_composition_lipschitz(1.0) == 1.0

    def test_zero(self):
        assert loss_composition_lipschitz(0.0) == 0.0

    def test_passthrough(self):
        assert loss_composition_lipschitz(3.0) == 3.0


class TestGeneralizationBound:
    def test_delta_one_tail(self):
        cfg = cfg_with(delta=1.0)
        rep = generalization_bound(cfg)
        assert rep.epsilon == 1.0
        tail = math.sqrt(8 * math.log(2.0) / cfg.n_samples)
        assert rep.G_star >= tail
        assert rep.G_star == pytest.approx(
            4 * min(1.0, 6 * math.sqrt(rep.q_formula * rep.A) / 100.0) + tail, rel=1e-12)

    def test_min_saturation(self):
        rep = generalization_bound(cfg_with(n_samples=2))
        tail = math.sqrt(8 * math.log(2.0 / rep.epsilon) / 2)
        assert rep.G_star == pytest.approx(4.0 + tail, rel=1e-12)

    def test_frozen_end_to_end_value(self):
        # q=6, A=4.9, N=1e4, delta=0.1 -> 1.355454732458068 (50-digit reference)
        arch = Architecture(d=2, D=1, T=2, W=3, r=1)
        delta = 0.1
        eps = failure_split(delta)
        unit = perturbation_radius(1.0, 1.0, arch.r, arch.W, eps)
        target_base = math.exp(4.9 / 3.0) / 2.0
        cfg = BoundConfig(arch=arch, box_bound=(target_base - 0.5) / unit, init_scale=1.0,
                          weight_sup=0.5, n_samples=10_000, delta=delta)
        rep = generalization_bound(cfg)
        assert rep.A == pytest.approx(4.9, rel=1e-12)
        assert rep.G_star == pytest.approx(1.355454732458068, rel=1e-11)

    def test_invariant_ceiling(self):
        for n in (10, 10**4):
            for delta in (0.01, 0.5, 1.0):
                rep = generalization_bound(cfg_with(n_samples=n, delta=delta))
                assert rep.G_star <= 4.0 + math.sqrt(8 * math.log(2 / rep.epsilon) / n) + 1e-12

    def test_monotone_in_rank(self):
        gs = [generalization_bound(cfg_with(
            arch=Architecture(d=2, D=1, T=2, W=32, r=r), n_samples=10**6)).G_star
            for r in (1, 2, 4, 8, 16)]
        assert all(a <= b + 1e-15 for a, b in zip(gs, gs[1:]))

    def test_monotone_decreasing_in_samples(self):
        gs = [generalization_bound(cfg_with(n_samples=n)).G_star
              for n in (10**3, 10**4, 10**5, 10**6, 10**7)]
        assert all(a >= b - 1e-15 for a, b in zip(gs, gs[1:]))

    @pytest.mark.parametrize("field", ["box_bound", "init_scale"])
    def test_monotone_in_scales(self, field):
        gs = [generalizing(field, v) for v in (0.5, 1.0, 2.0, 4.0, 8.0)]
        assert all(a <= b + 1e-15 for a, b in zip(gs, gs[1:]))

    def test_monotone_in_depth(self):
        gs = [generalization_bound(cfg_with(
            arch=Architecture(d=2, D=1, T=t, W=8, r=2), n_samples=10**7)).G_star
            for t in (1, 2, 3, 4, 5)]
        assert all(a <= b + 1e-15 for a, b in zip(gs, gs[1:]))

    def test_rate_is_exactly_minus_half_when_unsaturated(self):
        arch = Architecture(d=1, D=1, T=1, W=4, r=1)
        slopes_n = [10**3, 10**4, 10**5, 10**6, 10**7]
        gs = []
        for n in slopes_n:
            cfg = BoundConfig(arch=arch, box_bound=0.5, init_scale=0.5, weight_sup=0.5,
                              n_samples=n, delta=0.05)
            rep = generalization_bound(cfg)
            assert 6 * math.sqrt(rep.q_formula * rep.A) / math.sqrt(n) < 1.0
            gs.append(rep.G_star)
        slope = np.polyfit(np.log(slopes_n), np.log(gs), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.01)

    def test_first_term_matches_doubled_chaining_bound(self):
        # interior minimum: 4 * 6 sqrt(qA/N) must equal 2 * 12 sqrt(qA/N)
        cfg = cfg_with(n_samples=10**6)
        rep = generalization_bound(cfg)
        dud = dudley_rademacher_bound(cfg, rep.epsilon)
        first_term = rep.G_star - math.sqrt(8 * math.log(2 / rep.epsilon) / cfg.n_samples)
        assert first_term == pytest.approx(2 * dud.rademacher_bound, rel=1e-12)

    def test_covering_log_handle(self):
        rep = generalization_bound(cfg_with())
        assert rep.covering_log(1.0) == pytest.approx(rep.q_formula * rep.A, rel=1e-12)

    def test_json_keys_fixed(self):
        d = generalization_bound(cfg_with()).to_json_dict()
        assert list(d) == ["epsilon", "R", "R0", "A", "L_lora", "t_star", "G_star",
                           "q_formula", "q_exact"]


def generalizing(field, value):
    return generalization_bound(cfg_with(**{field: value})).G_star
