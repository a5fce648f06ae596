from enum import Enum

from yynet.autograd import functional as F
from yynet.util.errors import ConfigError, ShapeMismatch


class FusionFormula(Enum):
    """
    Parameter-free ways of combining the Yang embedding A with the Yin embedding I.
    Every formula keeps the channel count, half of what the concatenation baseline (`combine` with CONCAT) gives.
    """

    A_MUL_1MI = "A*(1-I)"
    A_MUL_I_PLUS_A_PLUS_I = "A*I+A+I"
    A_MUL_1MI_PLUS_A_MINUS_I = "A*(1-I)+A-I"
    A_MUL_I = "A*I"
    A_MUL_1MI_PLUS_A_PLUS_I = "A*(1-I)+A+I"
    A_PLUS_I = "A+I"

    @staticmethod
    def parse(text):
        """Accepts either the member name (A_PLUS_I) or the formula itself (A+I)."""
        for formula in FusionFormula:
            if text in (formula.name, formula.value):
                return formula
        raise ConfigError(
            f"Unknown fusion formula '{text}'; expected one of {[f.value for f in FusionFormula]}"
        )

    @property
    def is_symmetric(self):
        return self in (FusionFormula.A_PLUS_I, FusionFormula.A_MUL_I, FusionFormula.A_MUL_I_PLUS_A_PLUS_I)


def fuse(a, i, formula):
    if a.shape != i.shape:
        raise ShapeMismatch(f"fuse {formula.value}", a.shape, i.shape)

    if formula is FusionFormula.A_PLUS_I:
        return F.add(a, i)
    if formula is FusionFormula.A_MUL_I:
        return F.mul(a, i)
    if formula is FusionFormula.A_MUL_I_PLUS_A_PLUS_I:
        return F.add(F.mul(a, i), F.add(a, i))

    gated = F.mul(a, F.one_minus(i))
    if formula is FusionFormula.A_MUL_1MI:
        return gated
    if formula is FusionFormula.A_MUL_1MI_PLUS_A_MINUS_I:
        return F.add(gated, F.sub(a, i))
    if formula is FusionFormula.A_MUL_1MI_PLUS_A_PLUS_I:
        return F.add(gated, F.add(a, i))
    raise ConfigError(f"Unsupported fusion formula {formula}")


GATE = "gate"
CONCAT = "concat"
FUSION_MODES = (GATE, CONCAT)


def fused_channels(channels, mode):
    """Channels entering the single path: the branch width for the gate, twice it for concatenation."""
    return 2 * channels if mode == CONCAT else channels


def combine(a, i, formula, mode=GATE):
    """
    The fusion gate `fuse(a, i, formula)`, or for the concatenation baseline,
    A's channels followed by I's with `formula` ignored.
    """
    if mode == CONCAT:
        return F.concat_channels(a, i)
    if mode != GATE:
        raise ConfigError(f"Unknown fusion mode '{mode}'; expected one of {FUSION_MODES}")
    return fuse(a, i, formula)
