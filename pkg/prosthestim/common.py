"""Global declarations

Type aliases shared by every module, and the exception hierarchy. Argument
validation raises :class:`ValueError` (or a subclass of it); failures that
happen while simulating, filtering or training derive from
:class:`ProsthestimError`.
"""

from typing import (
    Dict,
    Optional,
    Sequence,
    Tuple
)

import numpy as np


Vector = np.ndarray
Matrix = np.ndarray
Channel = str
ChannelSet = Tuple[Channel, ...]
Series = Dict[Channel, np.ndarray]
Interval = Tuple[float, float]

STATE_DIM = 3
"""Dimension of the augmented filter state :math:`[\\theta, \\dot{\\theta},
F_z]`"""

STATE_LABELS = ('theta', 'theta_dot', 'f_z')

GRAVITY = 9.81
"""Gravitational acceleration in :math:`m/s^2`"""


class ProsthestimError(Exception):
    """Base class of runtime failures"""


class FieldError(ValueError):
    """A single field of a parameter record is invalid

    Attributes:
        field: Name of the offending field
    """

    def __init__(self, field: str, message: str):
        super().__init__(f'{field}: {message}')
        self.field = field
        self.message = message


class NonFiniteInputError(FieldError):
    """An input that must be finite is NaN or infinite"""

    def __init__(self, field: str):
        super().__init__(field, 'must be finite')


class DimensionMismatchError(ValueError):
    """Two arrays that must agree in shape do not"""


class SimulationDivergedError(ProsthestimError):
    """The joint angle left the physical range :math:`|\\theta| \\leq \\pi`

    Attributes:
        step_index: Index of the step that produced the invalid state
    """

    def __init__(self, step_index: int, theta: float):
        super().__init__(
            f'Simulation diverged at step {step_index}: theta={theta:.6g} rad'
        )
        self.step_index = step_index
        self.theta = theta


class CovarianceNotPSDError(ProsthestimError):
    """A covariance matrix is not positive semidefinite, even after jitter

    Attributes:
        matrix: The offending matrix
    """

    def __init__(self, matrix: Matrix, context: str = ''):
        suffix = f' ({context})' if context else ''
        super().__init__(f'Covariance is not positive semidefinite{suffix}')
        self.matrix = np.array(matrix, copy=True)


class SingularInnovationError(ProsthestimError):
    """The innovation covariance cannot be inverted

    Attributes:
        condition_number: 2-norm condition number of the innovation covariance
    """

    def __init__(self, condition_number: float):
        super().__init__(
            'Innovation covariance is singular '
            f'(condition number {condition_number:.3e})'
        )
        self.condition_number = condition_number


class NumericOverflowError(ProsthestimError):
    """A network activation became non-finite

    Attributes:
        layer: Layer index
        time_index: Time index within the window
    """

    def __init__(self, layer: int, time_index: int):
        super().__init__(
            f'Non-finite activation in layer {layer} at time index '
            f'{time_index}'
        )
        self.layer = layer
        self.time_index = time_index


class TrainingDivergedError(ProsthestimError):
    """The validation loss became NaN

    Attributes:
        epoch: Epoch index (1-based)
    """

    def __init__(self, epoch: int):
        super().__init__(f'Validation loss is NaN at epoch {epoch}')
        self.epoch = epoch


class DatasetError(ProsthestimError):
    """An input file is missing or malformed

    Attributes:
        path: File concerned
        row: Row index (0-based, file lines), if applicable
        column: Column index (0-based), if applicable
    """

    def __init__(
            self,
            message: str,
            path: Optional[str] = None,
            row: Optional[int] = None,
            column: Optional[int] = None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f'row {row}')
        if column is not None:
            where.append(f'column {column}')
        prefix = ', '.join(where)
        super().__init__(f'{prefix}: {message}' if prefix else message)
        self.path = path
        self.row = row
        self.column = column


class ConfigError(ProsthestimError):
    """A configuration document violates the schema

    Attributes:
        path: Dotted path of the offending key, e.g. ``plant.dt``
    """

    def __init__(self, path: str, message: str):
        super().__init__(f'{path}: {message}' if path else message)
        self.path = path


def require_finite(**values: float) -> None:
    """Raises :class:`NonFiniteInputError` naming the first non-finite
    keyword argument

    Works for scalars and arrays alike.
    """
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteInputError(name)


def require_same_length(**arrays: Sequence) -> int:
    """Returns the common length of the keyword arguments

    Raises:
        DimensionMismatchError: If the lengths differ
    """
    lengths = {name: len(array) for name, array in arrays.items()}
    if len(set(lengths.values())) > 1:
        detail = ', '.join(f'{k}={v}' for k, v in lengths.items())
        raise DimensionMismatchError(f'Length mismatch: {detail}')
    return next(iter(lengths.values()))
