import math

from yynet.learn.metrics import MetricsRow
from yynet.util.plot import plot_training_curves


def test_training_curves_are_written(tmp_path):
    rows = [
        MetricsRow(0, 0, math.nan, 0.0, 6.24e-4, 0.1, False, 0.0),
        MetricsRow(1, 10, 2.1, 8e-3, 6.24e-4, 0.3, True, 1.5),
        MetricsRow(2, 20, 1.7, 1e-6, 1.25e-2, None, True, 3.0),
    ]
    path = plot_training_curves(rows, tmp_path / "curves.png")
    with open(path, "rb") as file:
        assert file.read(8) == b"\x89PNG\r\n\x1a\n"
