import torch

from yynet.autograd.tensor import Tensor
from yynet.data.batches import LabeledBatch
from yynet.learn.evaluation import compute_accuracy, evaluate
from yynet.model.model_config import cifar10_config
from yynet.model.yynet import build, predict_labels
from yynet.optim.adamw import OptimizerState
from yynet.optim.ema import ema_update


def labeled_batches(model, number_of_batches=3, batch_size=5):
    generator = torch.Generator().manual_seed(0)
    result = []
    for index in range(number_of_batches):
        images = Tensor(torch.randn(batch_size, 3, 32, 32, generator=generator))
        labels = predict_labels(model, images)
        if index == 0:
            labels = (labels + 1) % 10
        result.append(LabeledBatch(images, labels))
    return result


def test_compute_accuracy():
    model = build(cifar10_config(4), seed=0)
    batches = labeled_batches(model)
    assert model.training
    assert compute_accuracy(model, batches) == 10 / 15
    assert model.training
    assert compute_accuracy(model, []) == 0.0


def test_evaluate_with_and_without_shadow():
    model = build(cifar10_config(4), seed=0)
    batches = labeled_batches(model)
    named_parameters = list(model.named_parameters())
    state = OptimizerState(named_parameters)

    accuracy, used_shadow = evaluate(model, state, batches)
    assert not used_shadow and accuracy == 10 / 15

    ema_update(state, named_parameters, 0, 1, start_fraction=0.0)
    for shadow in state.ema_shadow.values():
        shadow.zero_()
    shadow_accuracy, used_shadow = evaluate(model, state, batches)
    assert used_shadow
    live_accuracy, used_shadow = evaluate(model, state, batches, use_ema=False)
    assert not used_shadow and live_accuracy == 10 / 15
    # all-zero parameters give all-zero logits, and argmax picks class 0
    labels = torch.cat([batch.labels for batch in batches])
    assert shadow_accuracy == int((labels == 0).sum()) / 15
