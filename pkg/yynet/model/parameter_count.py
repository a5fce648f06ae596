from typing import NamedTuple, Tuple

from yynet.util.util import join


class ParameterRow(NamedTuple):
    name: str
    shape: Tuple[int, ...]
    count: int


class ParameterTable:
    """
    Trainable scalars of a module, one row per parameter tensor in registration order.
    BatchNorm running statistics are buffers and are not counted.
    """

    def __init__(self, rows):
        self.rows = list(rows)

    @staticmethod
    def of(module):
        return ParameterTable(ParameterRow(name, p.shape, p.numel()) for name, p in module.named_parameters())

    @property
    def total(self):
        return sum(row.count for row in self.rows)

    def by_prefix(self, depth=3):
        """Counts aggregated over the first `depth` components of parameter names, e.g. `yin.0.mbconvs`."""
        totals = {}
        for row in self.rows:
            prefix = ".".join(row.name.split(".")[:depth])
            totals[prefix] = totals.get(prefix, 0) + row.count
        return totals

    def format(self):
        name_width = max([len(row.name) for row in self.rows] + [len("total")])
        lines = [f"{'name':<{name_width}}  {'shape':<18}  {'count':>10}"]
        for row in self.rows:
            shape = "(" + join(row.shape, "x") + ")"
            lines.append(f"{row.name:<{name_width}}  {shape:<18}  {row.count:>10,}")
        lines.append(f"{'total':<{name_width}}  {'':<18}  {self.total:>10,}")
        return "\n".join(lines)

    def __len__(self):
        return len(self.rows)

    def __str__(self):
        return self.format()


def param_count(module):
    return sum(p.numel() for p in module.parameters())
