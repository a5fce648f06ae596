"""
Recovery of the sub-block internals behind the published CIFAR-10 parameter counts.

The architecture tables fix the layer layout but not the MBConv internals, so every point of a
small grid of internals is counted at the three published widths. A point is accepted only if it
matches all three counts; otherwise the point with the smallest total absolute deviation is
reported together with its per-width deltas.
"""
import itertools
from dataclasses import dataclass
from typing import Dict, Optional

import structlog

from yynet.model.model_config import cifar10_config
from yynet.model.parameter_count import param_count
from yynet.model.yynet import YYNet

log = structlog.get_logger()

PUBLISHED_COUNTS = {16: 52_882, 32: 191_330, 64: 726_274}

EXPANSION_FACTORS = (2, 3, 4, 6)
SE_RATIOS = (2, 4, 8, 16, None)
SE_BASES = ("expanded", "input", "projected")
BOOLEANS = (True, False)


@dataclass(frozen=True)
class Internals:
    expansion_factor: int
    se_ratio: Optional[int]
    se_basis: str
    conv_bias: bool
    head_bias: bool

    def apply_to(self, config):
        return config.replace(
            expansion_factor=self.expansion_factor,
            se_ratio=self.se_ratio,
            se_basis=self.se_basis,
            conv_bias=self.conv_bias,
            head_bias=self.head_bias,
        )

    def __str__(self):
        se = "none" if self.se_ratio is None else f"{self.se_basis}/{self.se_ratio}"
        return (
            f"e={self.expansion_factor} se={se} conv_bias={'yes' if self.conv_bias else 'no'} "
            f"head_bias={'yes' if self.head_bias else 'no'}"
        )


def default_grid():
    """Every combination of the search axes; without SE the placement axis collapses to one point."""
    grid = []
    for e, r, basis, conv_bias, head_bias in itertools.product(
        EXPANSION_FACTORS, SE_RATIOS, SE_BASES, BOOLEANS, BOOLEANS
    ):
        if r is None and basis != SE_BASES[0]:
            continue
        grid.append(Internals(e, r, basis, conv_bias, head_bias))
    return grid


@dataclass
class GridPoint:
    internals: Internals
    counts: Dict[int, int]
    targets: Dict[int, int]

    @property
    def deltas(self):
        return {width: self.counts[width] - target for width, target in self.targets.items()}

    @property
    def relative_deltas(self):
        return {width: self.deltas[width] / target for width, target in self.targets.items()}

    @property
    def total_absolute_deviation(self):
        return sum(abs(d) for d in self.deltas.values())

    @property
    def is_exact(self):
        return self.total_absolute_deviation == 0


@dataclass
class ReconcileReport:
    best: GridPoint
    points: list

    @property
    def exact(self):
        return self.best.is_exact

    def best_config(self, channels=16):
        return self.best.internals.apply_to(cifar10_config(channels))

    def format(self):
        widths = sorted(self.best.targets)
        header = "internals".ljust(60) + "".join(f"{w:>4}ch count".rjust(16) for w in widths) + "  |deviation|"
        lines = [header]
        for point in self.points:
            counts = "".join(f"{point.counts[w]:>16,}" for w in widths)
            lines.append(f"{str(point.internals):<60}{counts}  {point.total_absolute_deviation:>11,}")
        lines.append("")
        lines.append(self.discrepancy())
        return "\n".join(lines)

    def discrepancy(self):
        best = self.best
        verdict = "exact match" if best.is_exact else "no exact match; closest point"
        lines = [f"{verdict}: {best.internals}"]
        for width in sorted(best.targets):
            lines.append(
                f"  {width:>3} channels: {best.counts[width]:>9,} vs published {best.targets[width]:>9,} "
                f"(delta {best.deltas[width]:+,}, {100 * best.relative_deltas[width]:+.2f}%)"
            )
        return "\n".join(lines)


def count_for(internals, channels):
    config = internals.apply_to(cifar10_config(channels))
    return param_count(YYNet(config))


def reconcile_internals(targets=None, grid=None):
    """
    Counts every grid point at every target width and returns the report,
    whose `best` is an exact match if one exists and the closest point otherwise.
    Ties go to the earlier grid point.
    """
    targets = dict(PUBLISHED_COUNTS if targets is None else targets)
    grid = default_grid() if grid is None else list(grid)
    points = [
        GridPoint(internals, {width: count_for(internals, width) for width in targets}, targets)
        for internals in grid
    ]
    best = min(points, key=lambda p: p.total_absolute_deviation)
    log.info(
        "reconciled internals",
        grid_points=len(points),
        exact=best.is_exact,
        best=str(best.internals),
        deltas=best.deltas,
    )
    return ReconcileReport(best, points)
