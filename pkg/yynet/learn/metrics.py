import csv
import dataclasses
import os
from dataclasses import dataclass
from typing import Optional

from yynet.util.errors import DataIOError, FormatError

METRICS_COLUMNS = ("epoch", "step", "train_loss", "lr", "wd", "test_accuracy", "ema_active", "wall_time_s")


@dataclass(frozen=True)
class MetricsRow:
    """
    One line of metrics.csv.
    `step` counts the optimizer steps taken so far; `lr` is the learning rate of the last of them
    and `wd` the weight decay used throughout the epoch.
    """

    epoch: int
    step: int
    train_loss: float
    lr: float
    wd: float
    test_accuracy: Optional[float]
    ema_active: bool
    wall_time_s: float

    def to_csv_row(self):
        # repr keeps floats exact, so equal runs give byte-identical files
        return [
            str(self.epoch),
            str(self.step),
            repr(float(self.train_loss)),
            repr(float(self.lr)),
            repr(float(self.wd)),
            "" if self.test_accuracy is None else repr(float(self.test_accuracy)),
            "true" if self.ema_active else "false",
            f"{self.wall_time_s:.3f}",
        ]

    @staticmethod
    def from_csv_row(row):
        try:
            return MetricsRow(
                epoch=int(row["epoch"]),
                step=int(row["step"]),
                train_loss=float(row["train_loss"]),
                lr=float(row["lr"]),
                wd=float(row["wd"]),
                test_accuracy=None if row["test_accuracy"] == "" else float(row["test_accuracy"]),
                ema_active=row["ema_active"] == "true",
                wall_time_s=float(row["wall_time_s"]),
            )
        except (KeyError, ValueError) as e:
            raise FormatError(f"Malformed metrics row {row}: {e}") from e

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def read_metrics(path):
    try:
        with open(path, newline="") as file:
            reader = csv.DictReader(file)
            if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
                raise FormatError(f"{path} has columns {reader.fieldnames}, expected {list(METRICS_COLUMNS)}")
            return [MetricsRow.from_csv_row(row) for row in reader]
    except OSError as e:
        raise DataIOError(f"Cannot read metrics {path}: {e.strerror}") from e


class MetricsWriter:
    """
    Appends MetricsRows to a CSV file, flushing after each one; with no path the rows are only kept in `rows`.
    With `keep_through_epoch`, an existing file is first cut back to the rows of epochs up to that one
    (resuming from a checkpoint); otherwise it is started afresh.
    """

    def __init__(self, path=None, keep_through_epoch=None):
        self.path = path
        self.rows = []
        if path is None:
            return
        if keep_through_epoch is not None and os.path.exists(path):
            self.rows = [row for row in read_metrics(path) if row.epoch <= keep_through_epoch]
        directory = os.path.dirname(os.fspath(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(METRICS_COLUMNS)
            for row in self.rows:
                writer.writerow(row.to_csv_row())

    def write(self, row):
        if self.rows and (row.epoch, row.step) <= (self.rows[-1].epoch, self.rows[-1].step):
            raise FormatError(
                f"Metrics rows must increase in (epoch, step) but {(row.epoch, row.step)} follows "
                f"{(self.rows[-1].epoch, self.rows[-1].step)}"
            )
        if self.path is not None:
            with open(self.path, "a", newline="") as file:
                csv.writer(file, lineterminator="\n").writerow(row.to_csv_row())
        self.rows.append(row)
        return row
