import csv
import os
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import structlog

from yynet.data.normalization import channel_statistics
from yynet.learn.trainer import run_training
from yynet.model.fusion import CONCAT, GATE, FusionFormula
from yynet.model.parameter_count import param_count
from yynet.util.errors import ConfigError
from yynet.util.util import join

log = structlog.get_logger()

ABLATION_FILE = "ablation.csv"

# Full-scale CIFAR-10 accuracy in percent (mean, standard deviation over 3 runs at batch size 512).
# Recorded for comparison only.
REFERENCE_ACCURACY = {
    FusionFormula.A_MUL_1MI: (87.61, 0.09),
    FusionFormula.A_MUL_I_PLUS_A_PLUS_I: (87.63, 0.08),
    FusionFormula.A_MUL_1MI_PLUS_A_MINUS_I: (87.81, 0.19),
    FusionFormula.A_MUL_I: (87.87, 0.23),
    FusionFormula.A_MUL_1MI_PLUS_A_PLUS_I: (87.98, 0.22),
    FusionFormula.A_PLUS_I: (88.21, 0.46),
}


def ablation_seed(seed, formula_index, run_index):
    return seed + formula_index * 1000 + run_index


def variant_index(variant):
    """Position of a formula in FusionFormula; the concatenation baseline comes after all of them."""
    return len(FusionFormula) if variant == CONCAT else list(FusionFormula).index(variant)


def variant_label(variant):
    return CONCAT if variant == CONCAT else variant.value


def variant_config(model_config, variant):
    if variant == CONCAT:
        return model_config.replace(fusion_mode=CONCAT)
    return model_config.replace(fusion=variant, fusion_mode=GATE)


@dataclass(frozen=True)
class AblationRow:
    """Test accuracies of one fusion formula, or of the concatenation baseline (CONCAT)."""

    formula: Union[FusionFormula, str]
    accuracies: Tuple[float, ...]
    parameters: int = 0

    @property
    def label(self):
        return variant_label(self.formula)

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        """Sample standard deviation; 0 for a single run or identical runs."""
        if len(set(self.accuracies)) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))


@dataclass(frozen=True)
class AblationReport:
    rows: Tuple[AblationRow, ...]

    @property
    def runs(self):
        return len(self.rows[0].accuracies) if self.rows else 0

    def row(self, formula):
        for row in self.rows:
            if row.formula == formula:
                return row
        raise KeyError(formula)

    def best(self):
        return max(self.rows, key=lambda row: row.mean)

    def write_csv(self, path):
        with open(path, "w", newline="") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(
                ["formula", "runs", "mean_accuracy", "std_accuracy", "accuracies", "reference_mean", "parameters"]
            )
            for row in self.rows:
                reference = REFERENCE_ACCURACY.get(row.formula)
                writer.writerow(
                    [
                        row.label,
                        len(row.accuracies),
                        repr(row.mean),
                        repr(row.std),
                        join((repr(a) for a in row.accuracies), ";"),
                        "" if reference is None else reference[0] / 100.0,
                        row.parameters,
                    ]
                )

    def format(self):
        lines = [f"{'formula':<14}{'mean':>9}{'std':>9}{'reference':>11}{'parameters':>12}"]
        for row in self.rows:
            reference = REFERENCE_ACCURACY.get(row.formula)
            reference_text = "" if reference is None else f"{reference[0]:.2f}"
            lines.append(
                f"{row.label:<14}{100 * row.mean:>9.2f}{100 * row.std:>9.2f}{reference_text:>11}{row.parameters:>12,}"
            )
        return "\n".join(lines)

    def __str__(self):
        return self.format()


def run_ablation(
    model_config,
    train_config,
    train_split,
    test_split,
    runs=3,
    epochs=None,
    batch_size=None,
    out_dir=None,
    formulas=tuple(FusionFormula),
    concat_baseline=False,
    **learner_kwargs,
):
    """
    Trains `runs` models per fusion formula, with seed `seed + formula_index * 1000 + run_index`,
    all on the same data subset and normalization, and reports the test accuracies.
    With `concat_baseline`, the single path is also trained on the concatenated embeddings
    (formula index 6, twice the channels).
    Writes ablation.csv and the per-run metrics under `out_dir` when given.
    """
    if runs < 1:
        raise ConfigError(f"Ablation needs at least one run per formula but got {runs}")
    overrides = {}
    if epochs is not None:
        overrides["epochs"] = epochs
    if batch_size is not None:
        overrides["batch_size"] = batch_size
    base_config = train_config.replace(**overrides, train_subset=None, test_subset=None).validate()

    train_split = train_split.subset(train_config.train_subset, seed=train_config.seed)
    test_split = test_split.subset(train_config.test_subset, seed=train_config.seed)
    stats = channel_statistics(train_split)

    variants = list(formulas) + ([CONCAT] if concat_baseline else [])
    rows = []
    for variant in variants:
        name = CONCAT if variant == CONCAT else variant.name.lower()
        accuracies = []
        parameters = 0
        for run_index in range(runs):
            seed = ablation_seed(train_config.seed, variant_index(variant), run_index)
            run_dir = None if out_dir is None else os.path.join(out_dir, "runs", f"{name}-{run_index}")
            learner = run_training(
                variant_config(model_config, variant),
                base_config.replace(seed=seed),
                train_split,
                test_split,
                out_dir=run_dir,
                stats=stats,
                **learner_kwargs,
            )
            accuracy = learner.last_row.test_accuracy
            accuracies.append(accuracy)
            parameters = param_count(learner.model)
            log.info(
                "ablation run finished",
                formula=variant_label(variant),
                run=run_index,
                seed=seed,
                test_accuracy=accuracy,
                parameters=parameters,
            )
        rows.append(AblationRow(variant, tuple(accuracies), parameters))

    report = AblationReport(tuple(rows))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        report.write_csv(os.path.join(out_dir, ABLATION_FILE))
    return report
