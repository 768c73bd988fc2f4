from typing import Optional

import numpy as np


class RegSparseError(Exception):
    """Base class for every error raised by the solvers, generators and harness."""


class InvalidArgumentError(RegSparseError, ValueError):
    pass


class PreconditionError(InvalidArgumentError):
    """A lemma or theorem precondition does not hold.

    `inequality` names the violated condition, e.g. "||w||_1 >= n - s'/2".
    """

    def __init__(self, message: str, inequality: str = ''):
        super().__init__(message)
        self.inequality = inequality


class NumericalError(RegSparseError, ArithmeticError):
    def __init__(self, message: str, residual: Optional[float] = None):
        if residual is not None:
            message = f'{message} (residual={residual:.3e})'
        super().__init__(message)
        self.residual = residual


class ConvergenceError(NumericalError):
    """An iteration cap was hit; `best` holds the best iterate seen so far."""

    def __init__(self, message: str, best: Optional[np.ndarray] = None, residual: Optional[float] = None):
        super().__init__(message, residual)
        self.best = best


class ParseError(RegSparseError, ValueError):
    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f'line {line}, column {column}: {message}')
        self.line = line
        self.column = column


class ConfigError(RegSparseError, ValueError):
    pass
