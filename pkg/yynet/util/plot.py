import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_training_curves(rows, path):
    """Writes a two-panel figure of per-epoch metrics rows: loss and test accuracy above, lr and wd below."""
    rows = [row for row in rows if row.epoch > 0]
    epochs = [row.epoch for row in rows]

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    top.plot(epochs, [row.train_loss for row in rows], "r", label="train loss")
    top.set_ylabel("loss")
    accuracy_axis = top.twinx()
    accuracy_axis.plot(
        epochs, [row.test_accuracy if row.test_accuracy is not None else float("nan") for row in rows], "b",
        label="test accuracy",
    )
    accuracy_axis.set_ylabel("accuracy")
    accuracy_axis.set_ylim(0.0, 1.0)
    top.legend(loc="upper left")
    accuracy_axis.legend(loc="upper right")

    bottom.plot(epochs, [row.lr for row in rows], "g", label="lr at epoch end")
    bottom.plot(epochs, [row.wd for row in rows], "k--", label="weight decay")
    bottom.set_xlabel("epoch")
    bottom.set_yscale("log")
    bottom.legend(loc="upper right")

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
