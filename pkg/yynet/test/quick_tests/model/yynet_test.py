import torch

from yynet.autograd import functional as F
from yynet.autograd.grad_tape import GradTape
from yynet.autograd.tensor import Tensor
from yynet.model.fusion import CONCAT, FusionFormula
from yynet.model.model_config import ModelConfig, cifar10_config, imagenet_config, preset
from yynet.model.parameter_count import param_count
from yynet.model.yynet import YYNet, build, predict_labels, predict_probabilities
from yynet.util.errors import ConfigError, ShapeError
from yynet.util.util import check_that_exception_is_thrown


def random_batch(n, resolution=32, seed=0, dtype=torch.float32):
    generator = torch.Generator().manual_seed(seed)
    return Tensor(torch.randn(n, 3, resolution, resolution, generator=generator, dtype=dtype))


def tiny_config(**changes):
    """A 4-channel network on 8x8 inputs, small enough for exhaustive checks."""
    return cifar10_config(4).replace(input_resolution=8, **changes)


def test_cifar_presets_produce_logits_for_every_formula():
    for channels in (16, 32, 64):
        for formula in FusionFormula:
            config = cifar10_config(channels).replace(fusion=formula)
            model = build(config, seed=0)
            shapes = model.branch_shapes()
            assert shapes["yin"] == shapes["yang"] == (channels, 16, 16)
            logits = model(random_batch(2))
            assert logits.shape == (2, 10), (channels, formula)


def test_cifar_stride_trace():
    model = YYNet(cifar10_config(64))
    trace = {name: (channels, size) for name, channels, size in model.stride_trace()}
    assert trace["input"] == (3, 32)
    assert trace["yin.0.mbconvs.1"] == (64, 32)
    assert trace["yin.0.mbconvs.2"] == (64, 16)
    assert trace["yang.0.mbconvs.0"] == (64, 16)
    assert trace["fusion"] == (64, 16)
    assert trace["single_path.0.resnet"] == (64, 8)
    assert trace["single_path.0.mbconvs.0"] == (64, 4)
    assert trace["single_path.0.mbconvs.1"] == (64, 4)
    assert trace["head"] == (10, 1)
    assert model.config.stride_count == 3


def test_imagenet_preset():
    config = imagenet_config()
    model = build(config, seed=0).eval()
    shapes = model.branch_shapes()
    assert shapes["yin"] == shapes["yang"] == (22, 112, 112)
    assert [layer.out_channels for layer in model.single_path] == [68, 72, 76, 80]
    assert model.feature_channels == 80
    assert config.stride_count == 5
    number_of_parameters = sum(p.numel() for p in model.parameters())
    assert 1_000_000 < number_of_parameters < 2_500_000
    logits = model(random_batch(1, resolution=224))
    assert logits.shape == (1, 1000)


def test_same_seed_gives_identical_parameters():
    first = build(tiny_config(), seed=7)
    second = build(tiny_config(), seed=7)
    other = build(tiny_config(), seed=8)
    for (name, a), (_, b), (_, c) in zip(
        first.named_parameters(), second.named_parameters(), other.named_parameters()
    ):
        assert torch.equal(a.data, b.data), name
    assert any(not torch.equal(a.data, c.data) for a, c in zip(first.parameters(), other.parameters()))


def test_gradient_reaches_every_parameter():
    for formula in FusionFormula:
        model = build(tiny_config(fusion=formula), seed=1, dtype=torch.float64).eval()
        gradients = loss_gradients(model)
        assert len(gradients) == len(model.parameters())
        for name, gradient in gradients.items():
            assert gradient.abs().sum().item() > 0, f"{name} under {formula.value}"

    # in training mode, batch norm cancels constant shifts, so conv biases and some betas get vanishing
    # gradients; they must still be reached
    model = build(tiny_config(), seed=1, dtype=torch.float64).train()
    assert set(loss_gradients(model)) == {name for name, _ in model.named_parameters()}


def loss_gradients(model):
    x = random_batch(4, resolution=8, seed=2, dtype=torch.float64)
    model.zero_grad()
    with GradTape():
        F.softmax_cross_entropy(model(x), [0, 3, 5, 9]).backward()
    return {name: p.grad for name, p in model.named_parameters() if p.grad is not None}


def test_eval_forward_is_deterministic_and_per_sample():
    model = build(tiny_config(), seed=3, dtype=torch.float64).eval()
    x = random_batch(3, resolution=8, seed=4, dtype=torch.float64)
    assert torch.equal(model(x).data, model(x).data)

    duplicated = Tensor(torch.cat([x.data[:1], x.data[:1]]))
    logits = model(duplicated).data
    assert torch.equal(logits[0], logits[1])

    permutation = torch.tensor([2, 0, 1])
    permuted = model(Tensor(x.data[permutation])).data
    assert torch.allclose(permuted, model(x).data[permutation], rtol=0, atol=1e-12)


def test_training_mode_batch_norm_couples_samples():
    model = build(tiny_config(dropout_rate=0.0), seed=3, dtype=torch.float64)
    x = random_batch(3, resolution=8, seed=4, dtype=torch.float64)
    alone = model(Tensor(x.data[:2])).data
    together = model(x).data[:2]
    assert not torch.allclose(alone, together)


def test_predict_probabilities():
    model = build(tiny_config(), seed=0)
    probabilities = predict_probabilities(model, random_batch(5, resolution=8))
    assert probabilities.shape == (5, 10)
    assert torch.allclose(probabilities.data.sum(dim=1), torch.ones(5), atol=1e-6)
    assert model.training
    assert predict_labels(model, random_batch(5, resolution=8)).shape == (5,)


def test_forward_rejects_wrong_inputs():
    model = build(tiny_config(), seed=0)
    check_that_exception_is_thrown(lambda: model(random_batch(1, resolution=16)), ShapeError)
    check_that_exception_is_thrown(lambda: model(Tensor(torch.zeros(1, 1, 8, 8))), ShapeError)


def test_config_validation():
    check_that_exception_is_thrown(lambda: YYNet(cifar10_config().replace(input_resolution=30)), ConfigError)
    check_that_exception_is_thrown(lambda: cifar10_config().replace(yy_layers=0).validate(), ConfigError)
    check_that_exception_is_thrown(lambda: cifar10_config().replace(dropout_rate=1.0).validate(), ConfigError)
    check_that_exception_is_thrown(lambda: cifar10_config().replace(yin_mode="red").validate(), ConfigError)
    check_that_exception_is_thrown(lambda: cifar10_config().replace(se_ratio=0).validate(), ConfigError)
    # a 4-channel input basis cannot be reduced eightfold
    check_that_exception_is_thrown(lambda: YYNet(cifar10_config(4).replace(se_ratio=8, se_basis="input")), ConfigError)
    # 4 stride-2 sub-blocks without the extra stride need 16 | resolution
    assert imagenet_config().replace(sp_layers=3, input_resolution=16).validate().stride_count == 4


def test_config_from_dict():
    config = ModelConfig.from_dict({"yy_start_channels": 32, "sp_start_channels": 32, "fusion": "A*I"})
    assert config.fusion is FusionFormula.A_MUL_I
    assert config.yy_start_channels == 32
    assert ModelConfig.from_dict(config.to_dict()) == config
    check_that_exception_is_thrown(lambda: ModelConfig.from_dict({"channels": 3}), ConfigError)


def test_presets():
    assert preset("cifar10-32") == cifar10_config(32)
    assert preset("imagenet").num_classes == 1000
    small = preset("cifar10-16")
    assert (small.yy_layers, small.sp_layers, small.yy_mbconv_per_layer, small.sp_mbconv_per_layer) == (1, 1, 3, 2)
    assert small.extra_sp_stride2 and small.channels_per_mbconv == 0 and small.pre_classifier_neurons == 40
    check_that_exception_is_thrown(lambda: preset("cifar100"), ConfigError)


def test_concatenation_baseline_doubles_single_path_input():
    for channels in (16, 32, 64):
        gate = YYNet(cifar10_config(channels))
        concat = YYNet(cifar10_config(channels).replace(fusion_mode=CONCAT))
        trace = {name: (c, size) for name, c, size in concat.stride_trace()}
        assert trace["fusion"] == (2 * channels, 16)
        assert concat.single_path[0].in_channels == 2 * channels
        # the first single-path 3x3 convolution and its 1x1 projection take twice the channels
        assert param_count(concat) - param_count(gate) == 10 * channels * channels
    model = build(tiny_config(fusion_mode=CONCAT), seed=0)
    assert model(random_batch(2, resolution=8)).shape == (2, 10)
    assert "fusion=concat" in repr(model)
    check_that_exception_is_thrown(lambda: cifar10_config().replace(fusion_mode="stack").validate(), ConfigError)
    assert ModelConfig.from_dict({"fusion_mode": "concat"}).fusion_label == "concat"
