import csv
import os

from yynet.data.cifar10 import load_cifar10
from yynet.experiments.ablation import (
    ABLATION_FILE,
    REFERENCE_ACCURACY,
    AblationReport,
    AblationRow,
    ablation_seed,
    run_ablation,
    variant_index,
)
from yynet.model.fusion import CONCAT, FusionFormula
from yynet.model.model_config import cifar10_config
from yynet.optim.train_config import TrainConfig
from yynet.test.quick_tests.data.synthetic_cifar import write_synthetic_cifar10
from yynet.util.errors import ConfigError
from yynet.util.util import check_that_exception_is_thrown


def test_seeds_do_not_collide():
    seeds = {ablation_seed(7, f, r) for f in range(len(FusionFormula)) for r in range(5)}
    assert len(seeds) == len(FusionFormula) * 5
    assert ablation_seed(7, 2, 1) == 2008


def test_reference_covers_every_formula():
    assert set(REFERENCE_ACCURACY) == set(FusionFormula)
    best = max(REFERENCE_ACCURACY, key=lambda f: REFERENCE_ACCURACY[f][0])
    assert best is FusionFormula.A_PLUS_I


def test_report_statistics():
    report = AblationReport(
        (
            AblationRow(FusionFormula.A_PLUS_I, (0.5, 0.7, 0.6)),
            AblationRow(FusionFormula.A_MUL_I, (0.4, 0.4, 0.4)),
        )
    )
    assert report.runs == 3
    row = report.row(FusionFormula.A_PLUS_I)
    assert abs(row.mean - 0.6) <= 1e-12
    assert abs(row.std - 0.1) <= 1e-12
    assert report.row(FusionFormula.A_MUL_I).std == 0.0
    assert report.best() is row
    assert AblationRow(FusionFormula.A_MUL_I, (0.3,)).std == 0.0
    assert AblationRow(FusionFormula.A_MUL_I, (0.1 + 0.2, 0.1 + 0.2, 0.1 + 0.2)).std == 0.0
    assert "A+I" in report.format()
    check_that_exception_is_thrown(lambda: report.row(FusionFormula.A_MUL_1MI), KeyError)


def test_run_ablation_writes_csv(tmp_path):
    write_synthetic_cifar10(tmp_path / "cifar", records_per_train_file=10, test_records=20, learnable=True)
    train_split, test_split = load_cifar10(tmp_path / "cifar", expected_counts=None)
    out_dir = os.fspath(tmp_path / "ablation")
    formulas = (FusionFormula.A_PLUS_I, FusionFormula.A_MUL_1MI)

    report = run_ablation(
        cifar10_config(4),
        TrainConfig(prefetch_depth=0),
        train_split,
        test_split,
        runs=1,
        epochs=1,
        batch_size=25,
        out_dir=out_dir,
        formulas=formulas,
        show_progress=False,
    )

    assert tuple(row.formula for row in report.rows) == formulas
    assert report.runs == 1
    assert os.path.exists(os.path.join(out_dir, "runs", "a_plus_i-0", "metrics.csv"))
    assert os.path.exists(os.path.join(out_dir, "runs", "a_mul_1mi-0", "final.ckpt"))
    with open(os.path.join(out_dir, ABLATION_FILE)) as file:
        rows = list(csv.DictReader(file))
    assert [row["formula"] for row in rows] == ["A+I", "A*(1-I)"]
    assert [float(row["mean_accuracy"]) for row in rows] == [row.mean for row in report.rows]
    assert abs(float(rows[0]["reference_mean"]) - 0.8821) <= 1e-12


def test_run_ablation_needs_a_run():
    check_that_exception_is_thrown(
        lambda: run_ablation(cifar10_config(4), TrainConfig(), None, None, runs=0), ConfigError
    )


def test_concatenation_baseline_runs_after_the_formulas(tmp_path):
    write_synthetic_cifar10(tmp_path / "cifar", records_per_train_file=10, test_records=20, learnable=True)
    train_split, test_split = load_cifar10(tmp_path / "cifar", expected_counts=None)
    out_dir = os.fspath(tmp_path / "ablation")

    report = run_ablation(
        cifar10_config(4),
        TrainConfig(prefetch_depth=0),
        train_split,
        test_split,
        runs=1,
        epochs=1,
        batch_size=25,
        out_dir=out_dir,
        formulas=(FusionFormula.A_PLUS_I,),
        concat_baseline=True,
        show_progress=False,
    )

    assert [row.label for row in report.rows] == ["A+I", CONCAT]
    gate, concat = report.rows
    assert concat.parameters - gate.parameters == 10 * 4 * 4
    assert report.row(CONCAT) is concat
    assert variant_index(CONCAT) == len(FusionFormula)
    assert os.path.exists(os.path.join(out_dir, "runs", "concat-0", "final.ckpt"))
    with open(os.path.join(out_dir, ABLATION_FILE)) as file:
        rows = list(csv.DictReader(file))
    assert [row["formula"] for row in rows] == ["A+I", CONCAT]
    assert rows[1]["reference_mean"] == ""
    assert [int(row["parameters"]) for row in rows] == [gate.parameters, concat.parameters]
    assert "concat" in report.format()
