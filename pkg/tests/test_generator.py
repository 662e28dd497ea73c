"""Generator: input pyramid, style modulation, progressive ladder."""

import pytest
import torch

from facerestore.generator import (
    GenConfig,
    ProgressiveGenerator,
    StyleNet,
    build_input_pyramid,
    style_transform,
)

TOY = GenConfig(base_resolution=8, num_blocks=3, channel_schedule=(24, 16, 12), const_channels=24, style_hidden=12)


def _toy_inputs(batch=2, res=32, seed=0):
    gen = torch.Generator().manual_seed(seed)
    lq = torch.rand(batch, 3, res, res, generator=gen) * 2 - 1
    labels = torch.randint(0, 19, (batch, res, res), generator=gen)
    return lq, labels


class TestGenConfig:
    def test_default_resolution_ladder(self):
        cfg = GenConfig()
        assert cfg.in_resolution == 512
        assert cfg.level_resolutions == (16, 32, 64, 128, 256, 512)

    def test_schedule_length_must_match(self):
        with pytest.raises(ValueError):
            GenConfig(num_blocks=3, channel_schedule=(64, 32)).validate()

    def test_schedule_must_not_increase(self):
        with pytest.raises(ValueError):
            GenConfig(num_blocks=3, channel_schedule=(32, 64, 64)).validate()


class TestInputPyramid:
    def test_level_shapes(self):
        lq, labels = _toy_inputs()
        levels = build_input_pyramid(lq, labels, TOY)
        assert [l[0].shape[-1] for l in levels] == [8, 16, 32]
        assert [l[1].shape[1] for l in levels] == [19, 19, 19]

    def test_finest_level_is_input(self):
        lq, labels = _toy_inputs()
        levels = build_input_pyramid(lq, labels, TOY)
        assert levels[-1][0] is lq

    def test_soft_masks_sum_to_one(self):
        lq, labels = _toy_inputs(seed=1)
        for lq_i, parse_i in build_input_pyramid(lq, labels, TOY):
            sums = parse_i.sum(dim=1)
            assert float((sums - 1.0).abs().max()) <= 1e-4

    def test_finest_parse_is_exact_one_hot(self):
        lq, labels = _toy_inputs(seed=2)
        _, parse = build_input_pyramid(lq, labels, TOY)[-1]
        assert set(parse.unique().tolist()) == {0.0, 1.0}
        assert torch.equal(parse.argmax(dim=1), labels)

    def test_rejects_bad_labels(self):
        lq, labels = _toy_inputs()
        with pytest.raises(ValueError):
            build_input_pyramid(lq, labels.clamp_min(0) + 19, TOY)

    def test_rejects_wrong_resolution(self):
        lq, labels = _toy_inputs(res=16)
        with pytest.raises(ValueError):
            build_input_pyramid(lq, labels, TOY)


class TestStyleTransform:
    def test_constant_modulation_sets_stats(self):
        gen = torch.Generator().manual_seed(3)
        feat = torch.rand(4, 8, 16, 16, generator=gen) * 3 - 1
        a, b = 1.7, -0.3
        out = style_transform(feat, torch.full_like(feat, a), torch.full_like(feat, b))
        mean = out.mean(dim=(2, 3))
        std = out.var(dim=(2, 3), unbiased=False).sqrt()
        assert float((mean - b).abs().max()) < 1e-4
        assert float((std - abs(a)).abs().max()) < 1e-4

    def test_identity_modulation_normalizes(self):
        feat = torch.randn(2, 4, 12, 12)
        out = style_transform(feat, torch.ones_like(feat), torch.zeros_like(feat))
        assert float(out.mean(dim=(2, 3)).abs().max()) < 1e-5
        assert float((out.var(dim=(2, 3), unbiased=False).sqrt() - 1).abs().max()) < 1e-4

    def test_constant_channel_is_finite(self):
        feat = torch.full((1, 2, 8, 8), 5.0)
        out = style_transform(feat, torch.ones_like(feat), torch.full_like(feat, 0.25))
        assert torch.isfinite(out).all()
        torch.testing.assert_close(out, torch.full_like(feat, 0.25))

    def test_shape_checks(self):
        feat = torch.randn(1, 2, 4, 4)
        with pytest.raises(ValueError):
            style_transform(feat, torch.ones(1, 2, 2, 2), torch.zeros(1, 2, 4, 4))


class TestStyleNet:
    def test_bias_initialization_policy(self):
        net = StyleNet(out_channels=6, hidden=8)
        assert torch.all(net.head_scale.bias == 1.0)
        assert torch.all(net.head_shift.bias == 0.0)
        assert torch.all(net.conv1.bias == 0.0)
        assert torch.all(net.conv2.bias == 0.0)

    def test_zero_inputs_give_identity_modulation(self):
        net = StyleNet(out_channels=6, hidden=8).eval()
        scale, shift = net(torch.zeros(2, 3, 8, 8), torch.zeros(2, 19, 8, 8))
        torch.testing.assert_close(scale, torch.ones_like(scale))
        torch.testing.assert_close(shift, torch.zeros_like(shift))

    def test_output_shapes(self):
        net = StyleNet(out_channels=10, hidden=8)
        scale, shift = net(torch.randn(3, 3, 16, 16), torch.randn(3, 19, 16, 16))
        assert scale.shape == (3, 10, 16, 16) and shift.shape == (3, 10, 16, 16)


class TestProgressiveGenerator:
    def test_feature_ladder_and_output(self):
        torch.manual_seed(0)
        gen = ProgressiveGenerator(TOY).eval()
        lq, labels = _toy_inputs()
        with torch.no_grad():
            img, feats = gen(lq, labels, return_features=True)
        assert img.shape == (2, 3, 32, 32)
        assert [f.shape[-1] for f in feats] == [8, 16, 32]
        assert [f.shape[1] for f in feats] == [24, 16, 12]
        assert float(img.min()) > -1.0 and float(img.max()) < 1.0

    def test_every_parameter_gets_gradient(self):
        torch.manual_seed(1)
        gen = ProgressiveGenerator(TOY).train()
        lq, labels = _toy_inputs(seed=4)
        out = gen(lq, labels)
        loss = torch.mean((out - torch.rand_like(out)) ** 2)
        loss.backward()
        for name, p in gen.named_parameters():
            assert p.grad is not None, name
            assert float(p.grad.abs().sum()) > 0, name

    def test_inference_deterministic(self):
        torch.manual_seed(2)
        gen = ProgressiveGenerator(TOY).eval()
        lq, labels = _toy_inputs(seed=5)
        with torch.no_grad():
            a = gen(lq, labels)
            b = gen(lq, labels)
        torch.testing.assert_close(a, b, atol=0, rtol=0)

    def test_zero_all_levels_still_valid(self):
        torch.manual_seed(3)
        gen = ProgressiveGenerator(TOY).eval()
        lq, labels = _toy_inputs(seed=6)
        with torch.no_grad():
            out = gen(lq, labels, zero_levels="all")
        assert torch.isfinite(out).all()
        assert float(out.min()) > -1.0 and float(out.max()) < 1.0

    def test_finest_level_inputs_matter(self):
        torch.manual_seed(4)
        gen = ProgressiveGenerator(TOY).eval()
        lq, labels = _toy_inputs(seed=7)
        with torch.no_grad():
            all_but_last = gen(lq, labels, zero_levels=(1, 2))
            everything = gen(lq, labels, zero_levels="all")
        assert not torch.allclose(all_but_last, everything)

    def test_bad_zero_level_rejected(self):
        gen = ProgressiveGenerator(TOY)
        lq, labels = _toy_inputs(seed=8)
        with pytest.raises(ValueError):
            gen(lq, labels, zero_levels=(4,))

    def test_batch_consistency(self):
        torch.manual_seed(5)
        gen = ProgressiveGenerator(TOY).eval()
        lq, labels = _toy_inputs(batch=3, seed=9)
        with torch.no_grad():
            batched = gen(lq, labels)
            single = gen(lq[1:2], labels[1:2])
        torch.testing.assert_close(batched[1:2], single, atol=2e-6, rtol=1e-5)
