"""Accuracy metrics and cycle normalization

The percentage RMSE is normalized by the peak-to-peak range of the measured
signal:

.. math::

    \\mathrm{RMSE} = \\sqrt{\\frac{1}{T} \\sum_{i=1}^T (y_i - \\hat{y}_i)^2},
    \\qquad
    \\mathrm{RMSE}\\% = 100 \\frac{\\mathrm{RMSE}}{\\max y - \\min y},
    \\qquad
    R^2 = 1 - \\frac{\\sum (y_i - \\hat{y}_i)^2}{\\sum (y_i - \\bar{y})^2}
"""

from typing import (
    Sequence
)

import numpy as np
from scipy.integrate import (
    cumulative_trapezoid
)

from prosthestim.common import (
    DimensionMismatchError,
    FieldError
)


SAMPLES_PER_CYCLE = 1001


def _pair(measured, predicted):
    measured = np.asarray(measured, dtype=float).reshape(-1)
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    if len(measured) != len(predicted):
        raise DimensionMismatchError(
            f'measured has {len(measured)} samples, predicted '
            f'{len(predicted)}'
        )
    if len(measured) == 0:
        raise FieldError('measured', 'must not be empty')
    return measured, predicted


def rmse(measured: Sequence[float], predicted: Sequence[float]) -> float:
    """Root mean squared error

    Raises:
        DimensionMismatchError: If the lengths differ
        ValueError: If the series are empty
    """
    measured, predicted = _pair(measured, predicted)
    return float(np.sqrt(np.mean((measured - predicted) ** 2)))


def rmse_percent(measured: Sequence[float],
                 predicted: Sequence[float]) -> float:
    """RMSE as a percentage of the peak-to-peak range of ``measured``

    Raises:
        ValueError: If ``measured`` is flat
    """
    measured, predicted = _pair(measured, predicted)
    span = float(np.ptp(measured))
    if span <= 0:
        raise FieldError('measured', 'flat series, normalization undefined')
    return 100.0 * rmse(measured, predicted) / span


def r_squared(measured: Sequence[float], predicted: Sequence[float]) -> float:
    """Coefficient of determination, possibly negative

    Raises:
        ValueError: If ``measured`` has zero variance
    """
    measured, predicted = _pair(measured, predicted)
    total = float(np.sum((measured - np.mean(measured)) ** 2))
    if total <= 0:
        raise FieldError('measured', 'zero variance, R^2 undefined')
    return 1.0 - float(np.sum((measured - predicted) ** 2)) / total


def resample_cycle(
        series: Sequence[float],
        boundaries: Sequence[int],
        points: int = SAMPLES_PER_CYCLE) -> np.ndarray:
    """Resamples every cycle onto ``points`` uniformly spaced phases,
    endpoints included

    Args:
        series: Raw samples
        boundaries: Increasing indices :math:`b_0 < \\dots < b_n`; cycle
            :math:`i` spans samples :math:`[b_i, b_{i+1})`
        points: Samples per normalized cycle

    Returns:
        Array of shape ``(n, points)``

    Raises:
        ValueError: If a cycle has fewer than two samples, naming its index
    """
    series = np.asarray(series, dtype=float)
    boundaries = [int(b) for b in boundaries]
    if len(boundaries) < 2:
        raise FieldError('boundaries', 'needs at least one cycle')
    if boundaries[0] < 0 or boundaries[-1] > len(series):
        raise FieldError('boundaries', 'outside of the series')
    cycles = []
    for index, (start, end) in enumerate(zip(boundaries, boundaries[1:])):
        segment = series[start:end]
        if len(segment) < 2:
            raise FieldError(
                'boundaries',
                f'cycle {index} has {max(len(segment), 0)} samples, '
                'at least 2 are needed'
            )
        raw = np.arange(len(segment), dtype=float)
        grid = np.linspace(0.0, len(segment) - 1.0, points)
        cycles.append(np.interp(grid, raw, segment))
    return np.stack(cycles)


def normalize_cycles(series: Sequence[float],
                     boundaries: Sequence[int]) -> np.ndarray:
    """Resampled cycles, concatenated into one series"""
    return resample_cycle(series, boundaries).reshape(-1)


def integrate_gyro(t: Sequence[float], omega: Sequence[float],
                   theta0: float) -> np.ndarray:
    """Raw angle estimate: trapezoidal integral of the gyroscope from
    ``theta0``"""
    return theta0 + cumulative_trapezoid(
        np.asarray(omega, dtype=float), np.asarray(t, dtype=float), initial=0.0
    )
