import math

import pytest
import torch

from mcfnet.errors import NumericError
from mcfnet.losses import (LossWeights, cycle_loss,
                           discriminator_loss, edge_loss, gan_loss,
                           generator_gan_loss, hsv_supervision_loss,
                           pair_loss, total_loss)


def const(value, shape=(1, 1, 4, 4)):
    return torch.full(shape, float(value), dtype=torch.float64)


class TestGanLoss:
    def test_symmetric_midpoint(self):
        expected = math.log(0.5) + math.log(0.5)
        assert float(gan_loss(const(0.5), const(0.5))) == pytest.approx(
            expected, abs=1e-9)

    def test_discriminator_optimum_approaches_zero(self):
        val = float(gan_loss(const(1 - 1e-7), const(1e-7)))
        assert abs(val) < 1e-5

    def test_hand_evaluated_point(self):
        expected = math.log(0.8) + math.log(0.7)
        assert float(gan_loss(const(0.8), const(0.3))) == pytest.approx(
            expected, abs=1e-9)

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            gan_loss(const(float("nan")), const(0.5))

    def test_discriminator_loss_is_negation(self):
        a, b = const(0.7), const(0.2)
        assert float(discriminator_loss(a, b)) == pytest.approx(
            -float(gan_loss(a, b)), abs=1e-12)


class TestPairLoss:
    def test_identity_is_zero(self):
        rgb, nir = torch.rand(1, 3, 5, 5), torch.rand(1, 1, 5, 5)
        assert float(pair_loss(rgb, rgb, nir, nir)) == 0.0

    def test_constant_offset_on_one_leg(self):
        rgb = torch.rand(1, 3, 6, 6, dtype=torch.float64)
        nir = torch.rand(1, 1, 6, 6, dtype=torch.float64)
        val = pair_loss(rgb + 0.1, rgb, nir, nir)
        assert float(val) == pytest.approx(0.1, abs=1e-9)

    def test_leg_symmetry(self):
        g = torch.Generator().manual_seed(0)
        a, b = torch.rand(1, 3, 4, 4, generator=g), torch.rand(1, 3, 4, 4, generator=g)
        c, d = torch.rand(1, 1, 4, 4, generator=g), torch.rand(1, 1, 4, 4, generator=g)
        assert float(pair_loss(a, b, c, d)) == pytest.approx(
            float(pair_loss(c, d, a, b)), abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pair_loss(torch.rand(1, 3, 4, 4), torch.rand(1, 3, 8, 8),
                      torch.rand(1, 1, 4, 4), torch.rand(1, 1, 4, 4))


class TestCycleLoss:
    def test_perfect_reconstruction(self):
        nir, rgb = torch.rand(2, 1, 4, 4), torch.rand(2, 3, 4, 4)
        assert float(cycle_loss(nir, nir, rgb, rgb)) == 0.0

    def test_one_direction_constant_offset(self):
        nir = torch.rand(1, 1, 5, 5, dtype=torch.float64)
        rgb = torch.rand(1, 3, 5, 5, dtype=torch.float64)
        assert float(cycle_loss(nir, nir, rgb + 0.2, rgb)) == pytest.approx(
            0.2, abs=1e-9)

    def test_non_negative(self):
        g = torch.Generator().manual_seed(1)
        for _ in range(5):
            args = [torch.rand(1, 1, 4, 4, generator=g) for _ in range(2)]
            args += [torch.rand(1, 3, 4, 4, generator=g) for _ in range(2)]
            assert float(cycle_loss(*args)) >= 0.0


class TestEdgeLoss:
    def test_identity_is_zero(self):
        rgb, nir = torch.rand(1, 3, 6, 6), torch.rand(1, 1, 6, 6)
        assert float(edge_loss(rgb, rgb, nir, nir)) == 0.0

    def test_constant_offset_killed_by_zero_sum_kernel(self):
        rgb = torch.rand(1, 3, 6, 6, dtype=torch.float64)
        nir = torch.rand(1, 1, 6, 6, dtype=torch.float64)
        val = edge_loss(rgb + 0.25, rgb, nir, nir)
        assert float(val) == pytest.approx(0.0, abs=1e-12)

    def test_single_flipped_pixel_matches_impulse_response(self):
        h = w = 8
        rgb = torch.zeros(1, 3, h, w, dtype=torch.float64)
        pred = rgb.clone()
        delta = 0.5
        pred[0, 1, 4, 4] += delta   # interior pixel, one channel
        nir = torch.zeros(1, 1, h, w, dtype=torch.float64)
        # Laplacian of a delta-impulse has |−4d| + 4|d| = 8d total magnitude
        expected = 8.0 * delta / (3 * h * w)
        assert float(edge_loss(pred, rgb, nir, nir)) == pytest.approx(
            expected, abs=1e-12)


class TestHsvSupervision:
    def test_zero_iff_equal(self):
        hsv = torch.rand(1, 3, 4, 4)
        assert float(hsv_supervision_loss(hsv, hsv)) == 0.0
        assert float(hsv_supervision_loss(hsv + 0.01, hsv)) > 0.0


class TestTotalLoss:
    W = LossWeights(lambda_cyc=10.0, lambda_pair=10.0, lambda_edge=5.0)

    def test_all_zero(self):
        bd = total_loss(0.0, 0.0, 0.0, 0.0, self.W)
        assert bd.total == 0.0

    def test_arithmetic_composite(self):
        bd = total_loss(gan=-1.0, pair=3.0, cyc=2.0, edge=4.0, weights=self.W)
        assert bd.total == pytest.approx(69.0, abs=1e-12)

    def test_degenerate_weights(self):
        bd = total_loss(gan=-0.7, pair=1.0, cyc=2.0, edge=3.0,
                        weights=LossWeights(0.0, 0.0, 0.0))
        assert bd.total == pytest.approx(-0.7, abs=1e-12)

    def test_linearity_in_each_component(self):
        base = total_loss(1.0, 1.0, 1.0, 1.0, self.W).total
        bumped = total_loss(1.0, 2.0, 1.0, 1.0, self.W).total
        assert bumped - base == pytest.approx(self.W.lambda_pair, abs=1e-12)

    def test_total_identity_holds_exactly(self):
        bd = total_loss(gan=0.3, pair=0.7, cyc=1.1, edge=0.2, weights=self.W)
        assert bd.total == bd.gan + 10.0 * bd.cyc + 10.0 * bd.pair + 5.0 * bd.edge

    def test_rejects_non_finite_parts(self):
        with pytest.raises(NumericError):
            total_loss(float("inf"), 0.0, 0.0, 0.0, self.W)

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_cyc=-1.0)


class ToyGenerator(torch.nn.Module):
    """Two-parameter generator: pixel-wise sigmoid(a*x + b)."""

    def __init__(self):
        super().__init__()
        self.a = torch.nn.Parameter(torch.tensor(0.8, dtype=torch.float64))
        self.b = torch.nn.Parameter(torch.tensor(-0.2, dtype=torch.float64))

    def forward(self, x):
        return torch.sigmoid(self.a * x + self.b)


def finite_difference(loss_fn, param, h=1e-4):
    with torch.no_grad():
        orig = param.item()
        param.fill_(orig + h)
        up = float(loss_fn())
        param.fill_(orig - h)
        down = float(loss_fn())
        param.fill_(orig)
    return (up - down) / (2 * h)


class TestGradientAgreement:
    """Analytic gradients of each loss vs central finite differences."""

    def setup_method(self):
        torch.manual_seed(13)
        self.gen = ToyGenerator()
        self.x_rgb = torch.rand(1, 3, 6, 6, dtype=torch.float64)
        self.x_nir = torch.rand(1, 1, 6, 6, dtype=torch.float64)
        self.gt_rgb = torch.rand(1, 3, 6, 6, dtype=torch.float64)
        self.gt_nir = torch.rand(1, 1, 6, 6, dtype=torch.float64)
        conv = torch.nn.Conv2d(3, 1, 3, padding=1).double()
        for p in conv.parameters():
            p.requires_grad_(False)
        self.disc = lambda img: torch.sigmoid(conv(img))

    def losses(self):
        g = self.gen
        return {
            "gan": lambda: generator_gan_loss(self.disc(g(self.x_rgb))),
            "pair": lambda: pair_loss(g(self.x_rgb), self.gt_rgb,
                                      g(self.x_nir), self.gt_nir),
            "cyc": lambda: cycle_loss(g(self.x_nir), self.gt_nir,
                                      g(self.x_rgb), self.gt_rgb),
            "edge": lambda: edge_loss(g(self.x_rgb), self.gt_rgb,
                                      g(self.x_nir), self.gt_nir),
        }

    @pytest.mark.parametrize("name", ["gan", "pair", "cyc", "edge"])
    def test_each_loss(self, name):
        loss_fn = self.losses()[name]
        value = loss_fn()
        self.gen.zero_grad()
        value.backward()
        for param in (self.gen.a, self.gen.b):
            analytic = float(param.grad)
            numeric = finite_difference(loss_fn, param)
            scale = max(abs(analytic), abs(numeric), 1e-8)
            assert abs(analytic - numeric) / scale <= 1e-3, (
                f"{name}: analytic {analytic} vs numeric {numeric}")
