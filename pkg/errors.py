"""Exceptions raised by the simulation toolkit.

Every error carries a machine-readable ``code`` that the CLI prints on the
diagnostic stream.
"""

from typing import Optional


class WfhdError(Exception):
    code = "error"


class DomainError(WfhdError, ValueError):
    code = "domain_error"


class KernelOverflowError(WfhdError, OverflowError):
    code = "kernel_overflow"

    def __init__(self, j: int, m: int, n: int, bits: int, herald: Optional[int] = None):
        self.triple = (j, m, n)
        self.bits = bits
        self.herald = herald
        message = f"interference kernel for (j={j}, m={m}, n={n}) exceeds {bits}-bit working width"
        if herald is not None:
            message = f"herald outcome j={herald}: {message}"
        super().__init__(message)


class ShapeError(WfhdError, ValueError):
    code = "shape_error"


class InsufficientDataError(WfhdError, ValueError):
    code = "insufficient_data"


class FitError(WfhdError, ValueError):
    code = "fit_failure"


class UnreachableOutcomeError(WfhdError, ValueError):
    code = "unreachable_outcome"


class AlignmentError(WfhdError, ValueError):
    code = "alignment_error"


class FormatError(WfhdError, ValueError):
    code = "malformed_input"


class BinningError(WfhdError, ValueError):
    code = "binning_error"
