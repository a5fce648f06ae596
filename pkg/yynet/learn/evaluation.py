import structlog
import torch

from yynet.optim.ema import shadow_parameters

log = structlog.get_logger()


def compute_number_of_correct_and_total_predictions(model, batch):
    predictions = torch.argmax(model(batch.images).data, dim=1)
    return int((predictions == batch.labels).sum()), len(batch.labels)


def compute_accuracy(model, batches):
    """Top-1 accuracy of `model` in evaluation mode over an iterable of LabeledBatches; the model's mode is restored."""
    was_training = model.training
    model.eval()
    total_number_of_correct_predictions = 0
    total_number_of_predictions = 0
    try:
        for batch in batches:
            number_of_correct_predictions, number_of_predictions = compute_number_of_correct_and_total_predictions(
                model, batch
            )
            total_number_of_correct_predictions += number_of_correct_predictions
            total_number_of_predictions += number_of_predictions
    finally:
        model.train(was_training)
    if total_number_of_predictions == 0:
        return 0.0
    return total_number_of_correct_predictions / total_number_of_predictions


def evaluate(model, state, batches, use_ema=True):
    """
    Accuracy with the EMA shadow parameters swapped in when `use_ema` and averaging is active,
    with the live parameters otherwise. Returns (accuracy, whether the shadow was used).
    """
    if use_ema and state is not None and state.ema_active:
        with shadow_parameters(model, state):
            return compute_accuracy(model, batches), True
    return compute_accuracy(model, batches), False
