"""Shared numerical error types."""


class FullyMaskedRowError(ValueError):
    """A query row has every score masked; its softmax is undefined."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"query row {row} is fully masked; cannot normalize")


class NormalizerUnderflowError(ArithmeticError):
    """A softmax normalizer underflowed to zero at finalization."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"normalizer underflow at query row {row}")
