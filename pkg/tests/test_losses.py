"""Loss terms: hand fixtures, loop oracles, and analytic-gradient checks."""

import math

import numpy as np
import pytest
import torch

from oracles import masked_l1_loops, multiscale_grad_loss_loops

from depthdecomp.errors import (
    EmptyMaskError,
    MissingTargetError,
    NonPositiveDepthError,
    ScaleTooSmallError,
    SpaceMismatchError,
)
from depthdecomp.losses import (
    LossConfig,
    LossTargets,
    bilinear_downscale,
    downscale_valid_mask,
    loss_g,
    loss_grad_multiscale,
    loss_grad_multiscale_xy,
    loss_logm,
    loss_m,
    loss_mu,
    loss_n,
    total_loss,
)
from depthdecomp.model.network import NetworkOutput


def t64(arr):
    return torch.as_tensor(np.asarray(arr), dtype=torch.float64)


def ones_mask(*shape):
    return torch.ones(shape, dtype=torch.bool)


class TestLossG:
    def test_perfect_prediction_zero(self, rng):
        g = t64(rng.normal(size=(2, 4, 4)))
        assert loss_g(g[0], g[1], g[0], g[1], ones_mask(4, 4)).item() == 0.0

    def test_half_offset_fixture(self):
        # x-residual 0.5 on 4 valid pixels, y-residual 0: (4 * 0.5 + 0) / 4
        gx = t64([[0.0, 1.0], [2.0, 3.0]])
        gy = t64([[1.0, 1.0], [1.0, 1.0]])
        value = loss_g(gx + 0.5, gy, gx, gy, ones_mask(2, 2))
        assert value.item() == pytest.approx(0.5)

    def test_halved_mask_same_mean_for_uniform_residual(self):
        gx = torch.zeros(2, 2, dtype=torch.float64)
        gy = torch.zeros(2, 2, dtype=torch.float64)
        full = loss_g(gx + 0.5, gy, gx, gy, ones_mask(2, 2))
        half_mask = torch.tensor([[True, True], [False, False]])
        half = loss_g(gx + 0.5, gy, gx, gy, half_mask)
        assert full.item() == pytest.approx(half.item())

    def test_empty_mask(self):
        z = torch.zeros(2, 2, dtype=torch.float64)
        with pytest.raises(EmptyMaskError):
            loss_g(z, z, z, z, torch.zeros(2, 2, dtype=torch.bool))


class TestLossN:
    def test_perfect_and_offset(self, rng):
        n = t64(rng.normal(size=(3, 3)))
        mask = ones_mask(3, 3)
        assert loss_n(n, n, mask).item() == 0.0
        assert loss_n(n + 0.7, n, mask).item() == pytest.approx(0.7)
        assert loss_n(n - 1.2, n, mask).item() == pytest.approx(1.2)

    def test_random_case_matches_loop_oracle(self, rng):
        pred = rng.normal(size=(3, 3))
        target = rng.normal(size=(3, 3))
        mask = rng.uniform(size=(3, 3)) > 0.3
        mask[0, 0] = True
        value = loss_n(t64(pred), t64(target), torch.as_tensor(mask))
        assert value.item() == pytest.approx(
            masked_l1_loops(pred, target, mask), abs=1e-12
        )


class TestBilinearDownscale:
    def test_matches_loop_oracle(self, rng):
        arr = rng.normal(size=(8, 12))
        for s in (0.5, 0.25):
            ours = bilinear_downscale(t64(arr), s).numpy()
            theirs = __import__("oracles").bilinear_downscale_loops(arr, s)
            np.testing.assert_allclose(ours, theirs, atol=1e-12)

    def test_mask_rule_matches_loop_oracle(self, rng):
        from oracles import downscale_mask_loops

        mask = rng.uniform(size=(8, 12)) > 0.35
        for s in (0.5, 0.25):
            ours = downscale_valid_mask(torch.as_tensor(mask), s).numpy()
            np.testing.assert_array_equal(ours, downscale_mask_loops(mask, s))


class TestLossGradMultiscale:
    def test_perfect_prediction_zero(self, rng):
        d = t64(rng.normal(size=(16, 16)))
        assert loss_grad_multiscale(d, d, ones_mask(16, 16)).item() == 0.0

    def test_constant_offset_invisible(self, rng):
        d = t64(rng.normal(size=(16, 16)))
        value = loss_grad_multiscale(d + 3.7, d, ones_mask(16, 16))
        assert value.item() == pytest.approx(0.0, abs=1e-12)

    def test_single_scale_ramp_fixture_matches_hand_bilinear(self):
        # 4x4 ramps: prediction doubles the slope of the target
        base = np.tile(np.arange(4.0), (4, 1))
        pred, target = 2.0 * base, base
        value = loss_grad_multiscale_xy(
            t64(pred), t64(target), ones_mask(4, 4), scales=(0.5,)
        )
        lx_oracle, ly_oracle = multiscale_grad_loss_loops(
            pred, target, np.ones((4, 4), dtype=bool), (0.5,)
        )
        assert value[0].item() == pytest.approx(lx_oracle, abs=1e-12)
        assert value[1].item() == pytest.approx(ly_oracle, abs=1e-12)
        # hand value: scaled maps are 2x2 ramps with slopes 4 and 2, one
        # valid gradient entry, so lx = |4 - 2| / (16 * 0.25) = 0.5
        assert value[0].item() == pytest.approx(0.5)
        assert value[1].item() == pytest.approx(0.0)

    def test_random_maps_match_loop_oracle(self, rng):
        pred = rng.normal(size=(8, 12))
        target = rng.normal(size=(8, 12))
        mask = rng.uniform(size=(8, 12)) > 0.2
        scales = (0.5, 0.25)
        lx, ly = loss_grad_multiscale_xy(
            t64(pred), t64(target), torch.as_tensor(mask), scales
        )
        ox, oy = multiscale_grad_loss_loops(pred, target, mask, scales)
        assert lx.item() == pytest.approx(ox, abs=1e-12)
        assert ly.item() == pytest.approx(oy, abs=1e-12)

    def test_scale_too_small(self):
        d = torch.zeros(8, 8, dtype=torch.float64)
        with pytest.raises(ScaleTooSmallError):
            loss_grad_multiscale(d, d, ones_mask(8, 8), scales=(0.125,))


class TestLossM:
    def test_perfect_zero(self, rng):
        m = t64(rng.uniform(0.1, 1.0, size=(4, 4)))
        assert loss_m(m, m, ones_mask(4, 4)).item() == 0.0

    def test_inverted_error_fixture(self):
        # original depths 2 and 4 inverted as 1/chi: |1/2 - 1/4| = 0.25
        value = loss_m(t64([[0.5]]), t64([[0.25]]), ones_mask(1, 1))
        assert value.item() == pytest.approx(0.25)

    def test_space_mismatch(self):
        m = t64([[0.5]])
        with pytest.raises(SpaceMismatchError):
            loss_m(m, m, ones_mask(1, 1), pred_space="original")
        with pytest.raises(SpaceMismatchError):
            loss_m(m, m, ones_mask(1, 1), target_space="original")

    def test_random_matches_loop_oracle(self, rng):
        pred = rng.uniform(0.1, 1.0, size=(5, 5))
        target = rng.uniform(0.1, 1.0, size=(5, 5))
        mask = rng.uniform(size=(5, 5)) > 0.25
        mask[0, 0] = True
        value = loss_m(t64(pred), t64(target), torch.as_tensor(mask))
        assert value.item() == pytest.approx(
            masked_l1_loops(pred, target, mask), abs=1e-12
        )


class TestLossMu:
    def test_mean_matched_zero(self, rng):
        m = t64(rng.uniform(0.1, 1.0, size=(4, 4)))
        assert loss_mu(m, ones_mask(4, 4), m.mean()).item() == pytest.approx(0.0)

    def test_scalar_fixture(self):
        m = torch.full((2, 2), 0.4, dtype=torch.float64)
        assert loss_mu(m, ones_mask(2, 2), torch.tensor(0.25)).item() == (
            pytest.approx(0.15)
        )

    def test_permutation_invariant(self, rng):
        m = rng.uniform(0.1, 1.0, size=16)
        shuffled = rng.permutation(m)
        target = torch.tensor(0.3, dtype=torch.float64)
        a = loss_mu(t64(m.reshape(4, 4)), ones_mask(4, 4), target)
        b = loss_mu(t64(shuffled.reshape(4, 4)), ones_mask(4, 4), target)
        assert a.item() == pytest.approx(b.item(), abs=1e-15)


class TestLossLogM:
    def test_perfect_zero(self, rng):
        m = t64(rng.uniform(0.1, 1.0, size=(4, 4)))
        assert loss_logm(m, m, ones_mask(4, 4)).item() == 0.0

    def test_factor_e_gives_one(self, rng):
        m = t64(rng.uniform(0.1, 0.3, size=(4, 4)))
        value = loss_logm(math.e * m, m, ones_mask(4, 4))
        assert value.item() == pytest.approx(1.0, abs=1e-12)

    def test_scale_equivariance(self, rng):
        m_hat = t64(rng.uniform(0.1, 1.0, size=(4, 4)))
        m = t64(rng.uniform(0.1, 1.0, size=(4, 4)))
        mask = ones_mask(4, 4)
        base = loss_logm(m_hat, m, mask).item()
        for a in (0.5, 3.0):
            assert loss_logm(a * m_hat, a * m, mask).item() == (
                pytest.approx(base, abs=1e-12)
            )

    def test_nonpositive_rejected(self):
        m = t64([[0.5, -0.1]])
        with pytest.raises(NonPositiveDepthError):
            loss_logm(m, torch.abs(m), ones_mask(1, 2))


def make_output_and_targets(rng, batch=None):
    shape = (16, 16) if batch is None else (batch, 16, 16)

    def rand(*extra):
        return t64(rng.normal(size=extra + shape[-2:]))

    if batch is None:
        g_hat = t64(rng.normal(size=(2, 16, 16)))
        n_hat = t64(rng.normal(size=(1, 16, 16)))
        m_hat = t64(rng.uniform(0.1, 0.9, size=(1, 16, 16)))
        mu_hat = t64(rng.uniform(0.2, 0.5, size=()))
    else:
        g_hat = t64(rng.normal(size=(batch, 2, 16, 16)))
        n_hat = t64(rng.normal(size=(batch, 1, 16, 16)))
        m_hat = t64(rng.uniform(0.1, 0.9, size=(batch, 1, 16, 16)))
        mu_hat = t64(rng.uniform(0.2, 0.5, size=(batch,)))
    output = NetworkOutput(g_hat=g_hat, n_hat=n_hat, m_hat=m_hat, mu_hat=mu_hat)
    targets = LossTargets(
        gx=t64(rng.normal(size=shape)),
        gy=t64(rng.normal(size=shape)),
        grad_valid=torch.ones(shape, dtype=torch.bool),
        n=t64(rng.normal(size=shape)),
        n_valid=torch.ones(shape, dtype=torch.bool),
        m=t64(rng.uniform(0.1, 0.9, size=shape)),
        m_valid=torch.ones(shape, dtype=torch.bool),
        mu=t64(rng.uniform(0.2, 0.5, size=() if batch is None else (batch,))),
    )
    return output, targets


class TestTotalLoss:
    def test_relative_only_omits_metric_terms(self, rng):
        output, targets = make_output_and_targets(rng)
        total, breakdown = total_loss(output, targets, LossConfig(), False)
        assert set(breakdown) == {"L_G", "L_N", "L_Nx", "L_Ny"}

        # the total is unaffected by the metric prediction
        other = NetworkOutput(
            g_hat=output.g_hat,
            n_hat=output.n_hat,
            m_hat=output.m_hat * 0.5,
            mu_hat=output.mu_hat,
        )
        total2, _ = total_loss(other, targets, LossConfig(), False)
        assert total.item() == total2.item()

    def test_metric_sample_has_all_nine_terms(self, rng):
        output, targets = make_output_and_targets(rng)
        _, breakdown = total_loss(output, targets, LossConfig(), True)
        assert set(breakdown) == {
            "L_G", "L_N", "L_Nx", "L_Ny", "L_M", "L_Mx", "L_My", "L_muM", "L_logM",
        }

    def test_zero_weights_except_n(self, rng):
        output, targets = make_output_and_targets(rng)
        weights = dict.fromkeys(
            ["L_G", "L_N", "L_Nx", "L_Ny", "L_M", "L_Mx", "L_My", "L_muM", "L_logM"],
            0.0,
        )
        weights["L_N"] = 1.0
        total, _ = total_loss(output, targets, LossConfig(term_weights=weights), True)
        expected = loss_n(output.n_hat.squeeze(0), targets.n, targets.n_valid)
        assert total.item() == pytest.approx(expected.item(), abs=1e-15)

    def test_unit_weights_total_is_sum_of_terms(self, rng):
        output, targets = make_output_and_targets(rng)
        cfg = LossConfig()
        total, breakdown = total_loss(output, targets, cfg, True)
        independent = (
            loss_g(output.g_hat[0], output.g_hat[1], targets.gx, targets.gy,
                   targets.grad_valid)
            + loss_n(output.n_hat[0], targets.n, targets.n_valid)
            + sum(loss_grad_multiscale_xy(output.n_hat[0], targets.n,
                                          targets.n_valid, cfg.gradient_scales))
            + loss_m(output.m_hat[0], targets.m, targets.m_valid)
            + sum(loss_grad_multiscale_xy(output.m_hat[0], targets.m,
                                          targets.m_valid, cfg.gradient_scales))
            + loss_mu(output.m_hat[0], targets.m_valid, targets.mu)
            + loss_logm(output.m_hat[0], targets.m, targets.m_valid)
        )
        assert total.item() == pytest.approx(independent.item(), abs=1e-12)
        assert sum(breakdown.values()) == pytest.approx(total.item(), abs=1e-12)

    def test_per_sample_flags_select_metric_subset(self, rng):
        output, targets = make_output_and_targets(rng, batch=3)
        flags = torch.tensor([True, False, True])
        total, breakdown = total_loss(output, targets, LossConfig(), flags)
        assert "L_M" in breakdown
        # metric terms must ignore the relative-only sample entirely
        tampered = targets.m.clone()
        tampered[1] += 123.0
        targets2 = LossTargets(
            gx=targets.gx, gy=targets.gy, grad_valid=targets.grad_valid,
            n=targets.n, n_valid=targets.n_valid, m=tampered,
            m_valid=targets.m_valid, mu=targets.mu,
        )
        total2, _ = total_loss(output, targets2, LossConfig(), flags)
        assert total.item() == total2.item()

    def test_missing_metric_targets_rejected(self, rng):
        output, targets = make_output_and_targets(rng)
        targets.m = None
        with pytest.raises(MissingTargetError):
            total_loss(output, targets, LossConfig(), True)

    def test_baseline_output_without_targets_ok(self, rng):
        output, targets = make_output_and_targets(rng)
        bare = NetworkOutput(g_hat=None, n_hat=None, m_hat=output.m_hat, mu_hat=None)
        _, breakdown = total_loss(bare, targets, LossConfig(), True)
        assert set(breakdown) == {"L_M", "L_Mx", "L_My", "L_logM"}

    def test_no_applicable_terms_rejected(self, rng):
        output, targets = make_output_and_targets(rng)
        bare = NetworkOutput(g_hat=None, n_hat=None, m_hat=output.m_hat, mu_hat=None)
        with pytest.raises(MissingTargetError):
            total_loss(bare, targets, LossConfig(), False)


class TestMaskMonotonicity:
    def test_invalidating_a_pixel_preserves_other_contributions(self, rng):
        pred = t64(rng.normal(size=(5, 5)))
        target = t64(rng.normal(size=(5, 5)))
        mask = ones_mask(5, 5)
        full_sum = loss_n(pred, target, mask).item() * 25
        reduced = mask.clone()
        reduced[2, 3] = False
        reduced_sum = loss_n(pred, target, reduced).item() * 24
        removed = abs(pred[2, 3].item() - target[2, 3].item())
        assert full_sum - removed == pytest.approx(reduced_sum, abs=1e-12)


LOSS_CASES = [
    "L_G", "L_N", "L_Nx", "L_Ny", "L_M", "L_Mx", "L_My", "L_muM", "L_logM",
]


@pytest.mark.parametrize("term", LOSS_CASES)
def test_analytic_gradients_match_central_differences(term, rng):
    """Autograd gradients of each term vs central differences, 8x8, float64."""
    torch.manual_seed(0)
    mask = torch.ones(8, 8, dtype=torch.bool)
    mask[1, 2] = False  # keep one invalid pixel in play
    target = t64(rng.normal(size=(8, 8)))
    if term in ("L_M", "L_Mx", "L_My", "L_muM", "L_logM"):
        target = t64(rng.uniform(0.2, 0.8, size=(8, 8)))
        pred = t64(rng.uniform(0.2, 0.8, size=(8, 8)))
    else:
        pred = target + t64(rng.uniform(0.2, 0.6, size=(8, 8)))  # residuals off 0
    pred.requires_grad_(True)
    aux = t64(rng.normal(size=(8, 8)))

    def compute():
        if term == "L_G":
            return loss_g(pred, aux, target, aux, mask)
        if term == "L_N":
            return loss_n(pred, target, mask)
        if term == "L_Nx":
            return loss_grad_multiscale_xy(pred, target, mask, (0.5, 0.25))[0]
        if term == "L_Ny":
            return loss_grad_multiscale_xy(pred, target, mask, (0.5, 0.25))[1]
        if term == "L_M":
            return loss_m(pred, target, mask)
        if term == "L_Mx":
            return loss_grad_multiscale_xy(pred, target, mask, (0.5,))[0]
        if term == "L_My":
            return loss_grad_multiscale_xy(pred, target, mask, (0.5,))[1]
        if term == "L_muM":
            return loss_mu(pred, mask, torch.tensor(0.9, dtype=torch.float64))
        return loss_logm(pred, target, mask)

    value = compute()
    (analytic,) = torch.autograd.grad(value, pred)

    eps = 1e-6
    numeric = torch.zeros_like(pred)
    with torch.no_grad():
        flat_p = pred.view(-1)
        flat_n = numeric.view(-1)
        for k in range(flat_p.numel()):
            orig = flat_p[k].item()
            flat_p[k] = orig + eps
            hi = compute().item()
            flat_p[k] = orig - eps
            lo = compute().item()
            flat_p[k] = orig
            flat_n[k] = (hi - lo) / (2 * eps)

    scale = max(numeric.abs().max().item(), 1e-12)
    rel_err = (analytic - numeric).abs().max().item() / scale
    assert rel_err < 1e-6
