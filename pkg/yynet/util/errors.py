class YYNetError(Exception):
    """Root of every error raised by yynet."""


class ShapeError(YYNetError):
    pass


class StateError(YYNetError):
    pass


class ConfigError(YYNetError):
    pass


class DataError(YYNetError):
    pass


class DataIOError(DataError):
    pass


class FormatError(DataError):
    pass


class NonFiniteError(YYNetError):
    def __init__(self, op_name):
        super().__init__(f"{op_name} produced non-finite values from finite inputs")
        self.op_name = op_name


class TrainingDivergedError(YYNetError):
    def __init__(self, step, what="gradients"):
        super().__init__(f"Training diverged at step {step}: non-finite {what}")
        self.step = step
        self.what = what


class ShapeMismatch(ShapeError):
    def __init__(self, op_name, *shapes):
        shapes_str = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op_name} received incompatible shapes {shapes_str}")
        self.op_name = op_name
        self.shapes = [tuple(s) for s in shapes]

    def __eq__(self, other):
        return (
            isinstance(other, ShapeMismatch)
            and self.op_name == other.op_name
            and self.shapes == other.shapes
        )

    def __hash__(self):
        return hash((self.op_name, tuple(self.shapes)))


class NoActiveTape(StateError):
    def __init__(self):
        super().__init__(
            "backward requires a loss produced under an active GradTape"
        )


class LabelOutOfRange(DataError):
    def __init__(self, label, number_of_classes):
        super().__init__(
            f"Label {label} is outside of [0, {number_of_classes})"
        )
        self.label = label
        self.number_of_classes = number_of_classes
