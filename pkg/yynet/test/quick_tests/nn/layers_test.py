import torch

from yynet.autograd import functional as F
from yynet.autograd.gradient_check import assert_gradients_match
from yynet.autograd.tensor import Tensor, uniform
from yynet.nn.layers import BatchNorm2d, Conv2d, Dropout, Linear, SqueezeExcite
from yynet.nn.module import Module, ModuleList
from yynet.util.errors import ConfigError, ShapeError
from yynet.util.util import check_that_exception_is_thrown


def random_images(*shape, seed=0, requires_grad=False, dtype=torch.float64):
    generator = torch.Generator().manual_seed(seed)
    return uniform(*shape, generator=generator, dtype=dtype, requires_grad=requires_grad)


def randomized(module, seed=0):
    module.randomize(torch.Generator().manual_seed(seed))
    return module


def test_conv2d_layer_shapes():
    conv = randomized(Conv2d(3, 8, 3, stride=2, padding=1))
    x = random_images(2, 3, 32, 32, dtype=torch.float32)
    assert conv(x).shape == (2, 8, 16, 16)
    assert conv.output_size(32) == 16

    depthwise = randomized(Conv2d(8, 8, 3, padding=1, groups=8))
    assert depthwise.weight.shape == (8, 1, 3, 3)

    check_that_exception_is_thrown(lambda: conv(random_images(2, 4, 8, 8, dtype=torch.float32)), ShapeError)
    check_that_exception_is_thrown(lambda: Conv2d(6, 8, 3, groups=4), ConfigError)


def test_layer_gradients():
    for seed in range(5):
        conv = randomized(Conv2d(3, 4, 3, stride=2, padding=1, bias=True, dtype=torch.float64), seed)
        x = random_images(2, 3, 6, 6, seed=seed, requires_grad=True)
        assert_gradients_match(
            lambda x, w, b: F.conv2d(x, w, b, conv.stride, conv.padding), [x, conv.weight, conv.bias], seed=seed
        )

        bn = BatchNorm2d(3, dtype=torch.float64)
        assert_gradients_match(lambda x, g, b: bn(x), [x, bn.gamma, bn.beta], seed=seed)

        se = randomized(SqueezeExcite(3, 2, dtype=torch.float64), seed)
        assert_gradients_match(
            lambda x, *_: se(x),
            [x, se.reduce.weight, se.reduce.bias, se.expand.weight, se.expand.bias],
            seed=seed,
        )

        linear = randomized(Linear(5, 4, dtype=torch.float64), seed)
        features = random_images(3, 5, seed=seed, requires_grad=True)
        assert_gradients_match(lambda f, *_: linear(f), [features, linear.weight, linear.bias], seed=seed)


def test_batch_norm_train_mode_normalizes():
    bn = BatchNorm2d(4, dtype=torch.float64)
    x = Tensor(random_images(8, 4, 5, 5, seed=1).data * 3.0 + 7.0)
    y = bn(x).data
    per_channel_mean = y.mean(dim=(0, 2, 3))
    per_channel_var = y.var(dim=(0, 2, 3), unbiased=False)
    assert per_channel_mean.abs().max().item() < 1e-5
    assert (per_channel_var - 1.0).abs().max().item() < 1e-4


def test_batch_norm_constant_channel_maps_to_zero():
    bn = BatchNorm2d(1)
    y = bn(Tensor(torch.full((4, 1, 3, 3), 2.5)))
    assert torch.equal(y.data, torch.zeros(4, 1, 3, 3))


def test_batch_norm_affine():
    bn = BatchNorm2d(2, dtype=torch.float64)
    bn.gamma.data.fill_(2.0)
    bn.beta.data.fill_(3.0)
    y = bn(random_images(16, 2, 4, 4, seed=2)).data
    assert (y.mean(dim=(0, 2, 3)) - 3.0).abs().max().item() < 1e-6
    assert (y.std(dim=(0, 2, 3), unbiased=False) - 2.0).abs().max().item() < 1e-3


def test_batch_norm_running_statistics_follow_recurrence():
    momentum = 0.1
    bn = BatchNorm2d(3, momentum=momentum, dtype=torch.float64)
    expected_mean = torch.zeros(3, dtype=torch.float64)
    expected_var = torch.ones(3, dtype=torch.float64)
    for step in range(5):
        x = random_images(4, 3, 2, 2, seed=10 + step)
        bn(x)
        expected_mean = (1 - momentum) * expected_mean + momentum * x.data.mean(dim=(0, 2, 3))
        expected_var = (1 - momentum) * expected_var + momentum * x.data.var(dim=(0, 2, 3), unbiased=True)
    assert torch.allclose(bn.running_mean.data, expected_mean, rtol=1e-12, atol=1e-14)
    assert torch.allclose(bn.running_var.data, expected_var, rtol=1e-12, atol=1e-14)
    assert (bn.running_var.data >= 0).all()


def test_batch_norm_eval_uses_running_statistics():
    bn = BatchNorm2d(2, dtype=torch.float64).eval()
    x = random_images(2, 2, 3, 3, seed=4)
    y = bn(x).data
    # initial statistics are mean 0 and variance 1
    assert torch.allclose(y, x.data / torch.sqrt(torch.tensor(1.0 + bn.eps, dtype=torch.float64)))
    assert torch.equal(bn.running_mean.data, torch.zeros(2, dtype=torch.float64))


def test_dropout():
    x = Tensor(torch.ones(200, 100))
    dropout = Dropout(0.2, seed=0)

    assert dropout.eval()(x) is x

    dropout.train()
    means = [dropout(x).data.mean().item() for _ in range(20)]
    overall = sum(means) / len(means)
    assert abs(overall - 1.0) < 0.02
    sample = dropout(x).data
    assert set(torch.unique(sample).tolist()) <= {0.0, 1.0 / 0.8}

    check_that_exception_is_thrown(lambda: Dropout(1.0), ConfigError)


def test_squeeze_excite_identity_and_null_gates():
    x = random_images(2, 8, 4, 4, seed=5)
    se = randomized(SqueezeExcite(8, 2, dtype=torch.float64))

    se.expand.weight.data.zero_()
    se.expand.bias.data.fill_(40.0)
    assert torch.allclose(se(x).data, x.data, rtol=1e-12, atol=1e-12)

    se.expand.bias.data.fill_(-800.0)
    assert torch.allclose(se(x).data, torch.zeros_like(x.data), atol=1e-300)


def test_squeeze_excite_against_composed_oracle():
    x = random_images(3, 8, 5, 5, seed=6)
    se = randomized(SqueezeExcite(8, 2, dtype=torch.float64), seed=1)
    pooled = x.data.mean(dim=(2, 3))
    hidden = pooled @ se.reduce.weight.data.t() + se.reduce.bias.data
    hidden = F.gelu(Tensor(hidden)).data
    gate = torch.sigmoid(hidden @ se.expand.weight.data.t() + se.expand.bias.data)
    expected = x.data * gate[:, :, None, None]
    assert torch.allclose(se(x).data, expected, rtol=1e-12, atol=1e-14)
    assert ((gate > 0) & (gate < 1)).all()


def test_squeeze_excite_preserves_shape_and_validates_ratio():
    for channels, ratio in [(4, 4), (8, 2), (16, 4), (64, 16), (5, 2)]:
        se = randomized(SqueezeExcite.with_ratio(channels, ratio, dtype=torch.float64))
        x = random_images(2, channels, 3, 3)
        assert se(x).shape == x.shape
    check_that_exception_is_thrown(lambda: SqueezeExcite.with_ratio(2, 4), ConfigError)


def test_module_registration_order_and_modes():
    class Pair(Module):
        def __init__(self):
            super().__init__()
            self.first = Conv2d(1, 2, 3)
            self.blocks = ModuleList([BatchNorm2d(2), Linear(2, 3)])

    pair = Pair()
    names = [name for name, _ in pair.named_parameters()]
    assert names == [
        "first.weight",
        "blocks.0.gamma",
        "blocks.0.beta",
        "blocks.1.weight",
        "blocks.1.bias",
    ]
    assert [name for name, _ in pair.named_buffers()] == ["blocks.0.running_mean", "blocks.0.running_var"]
    pair.eval()
    assert not pair.blocks[0].training
    pair.train()
    assert pair.blocks[0].training
