"""Training of the LSTM regressor

Trials are split into contiguous blocks, the first 80% train and the last
20% validate, so that no trial contributes samples to both sides. Inputs and
targets are z-scored with the statistics of the training block. Training
stops when the validation loss has not improved for ``patience`` epochs and
the best checkpoint is returned.
"""

import logging
from dataclasses import (
    asdict,
    dataclass,
    field
)
from typing import (
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    ChannelSet,
    FieldError,
    TrainingDivergedError
)
from prosthestim.neural import (
    AdamOptimizer,
    LstmNetwork,
    backward_and_adam_step,
    loss,
    loss_gradients
)
from prosthestim.random_streams import (
    substream
)


logger = logging.getLogger(__name__)

LOG_COLUMNS = ('epoch', 'train_loss', 'val_loss', 'lr', 'stopped_early')


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and data layout of the regressor

    Attributes:
        layers: Stacked LSTM layers
        units: Units per layer
        dropout_rate: Inverted dropout rate
        learning_rate: Adam step size
        window_length: Samples per input window
        stride: Samples between consecutive training windows
        target_offset: Samples between the window end and its target
        input_channels: Input channels, by dataset channel name
        target_channels: Regression targets, by dataset channel name
    """

    layers: int = 2
    units: int = 50
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    window_length: int = 100
    stride: int = 1
    target_offset: int = 0
    input_channels: ChannelSet = ('force_plate', 'grf', 'knee_angle')
    target_channels: ChannelSet = ('ankle_angle', 'f_z')

    def __post_init__(self):
        if self.layers < 1:
            raise FieldError('layers', 'must be >= 1')
        if self.units < 1:
            raise FieldError('units', 'must be >= 1')
        if not 0 <= self.dropout_rate < 1:
            raise FieldError('dropout_rate', 'must lie in [0, 1)')
        if not self.learning_rate > 0:
            raise FieldError('learning_rate', 'must be > 0')
        if self.window_length < 1:
            raise FieldError('window_length', 'must be >= 1')
        if self.stride < 1:
            raise FieldError('stride', 'must be >= 1')
        if self.target_offset < 0:
            raise FieldError('target_offset', 'must be >= 0')
        if not self.input_channels:
            raise FieldError('input_channels', 'must not be empty')
        if not self.target_channels:
            raise FieldError('target_channels', 'must not be empty')
        object.__setattr__(self, 'input_channels', tuple(self.input_channels))
        object.__setattr__(self, 'target_channels',
                           tuple(self.target_channels))


@dataclass(frozen=True)
class TrainSpec:
    """Training protocol

    Attributes:
        split: Training and validation fractions of the trials
        patience: Epochs without improvement before stopping
        max_epochs: Upper bound on the epochs
        batch_size: Windows per mini-batch
        loss_lambda: Weight of the KL term, 0 for pure MSE
        seed: Seed of initialization, shuffling and dropout
    """

    split: Tuple[float, float] = (0.8, 0.2)
    patience: int = 10
    max_epochs: int = 100
    batch_size: int = 64
    loss_lambda: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.split) != 2 or min(self.split) <= 0 or \
                abs(sum(self.split) - 1.0) > 1e-9:
            raise FieldError('split', 'expects two positive fractions '
                             'summing to 1')
        object.__setattr__(self, 'split', tuple(self.split))
        if self.patience < 1:
            raise FieldError('patience', 'must be >= 1')
        if self.max_epochs < 1:
            raise FieldError('max_epochs', 'must be >= 1')
        if self.batch_size < 1:
            raise FieldError('batch_size', 'must be >= 1')
        if self.loss_lambda < 0:
            raise FieldError('loss_lambda', 'must be >= 0')
        if self.seed < 0:
            raise FieldError('seed', 'must be >= 0')


@dataclass(frozen=True)
class Normalizer:
    """Per-channel z-score"""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(data: np.ndarray) -> 'Normalizer':
        """Statistics over the rows of ``data``; a flat channel gets unit
        scale"""
        mean = np.mean(data, axis=0)
        std = np.std(data, axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return Normalizer(mean, std)

    def apply(self, data: np.ndarray) -> np.ndarray:
        """Normalizes"""
        return (data - self.mean) / self.std

    def invert(self, data: np.ndarray) -> np.ndarray:
        """Denormalizes"""
        return data * self.std + self.mean


class EarlyStopping:
    """Tracks the best validation loss

    Args:
        patience: Epochs without strict improvement tolerated
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise FieldError('patience', 'must be >= 1')
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> bool:
        """Records the loss of ``epoch`` and returns whether to stop"""
        if value < self.best_loss:
            self.best_loss = value
            self.best_epoch = epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience

    @property
    def improved(self) -> bool:
        """Whether the last update was an improvement"""
        return self.wait == 0


@dataclass
class EpochRecord:
    """One row of the training log"""

    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    stopped_early: bool = False


@dataclass
class TrainingLog:
    """Per-epoch losses of a training run"""

    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def to_frame(self) -> pd.DataFrame:
        """Returns the log in the CSV layout"""
        return pd.DataFrame([asdict(record) for record in self.records],
                            columns=list(LOG_COLUMNS))

    def to_csv(self, path) -> None:
        """Writes ``epoch,train_loss,val_loss,lr,stopped_early``"""
        frame = self.to_frame()
        frame['stopped_early'] = frame['stopped_early'].map(
            {True: 'true', False: 'false'}
        )
        frame.to_csv(path, index=False, lineterminator='\n')

    def best_so_far(self) -> np.ndarray:
        """Running minimum of the validation loss"""
        return np.minimum.accumulate([r.val_loss for r in self.records])


@dataclass
class TrainedModel:
    """A network together with its data layout and normalization

    Attributes:
        network: Trained network
        config: Architecture and data layout
        inputs: Input normalization
        targets: Target normalization
        val_mse: Validation mean squared error of every target, in physical
            units
    """

    network: LstmNetwork
    config: NetworkConfig
    inputs: Normalizer
    targets: Normalizer
    val_mse: Dict[str, float] = field(default_factory=dict)

    def predict_windows(self, windows: np.ndarray) -> np.ndarray:
        """Physical-unit predictions of raw windows of shape
        ``(batch, time, inputs)``"""
        output = self.network.predict(self.inputs.apply(windows))
        return self.targets.invert(output)

    def predict_series(self, inputs: np.ndarray,
                       batch_size: int = 512) -> np.ndarray:
        """Predictions of the windows ending at every sample

        The series is padded on the left with its first row, so that every
        sample gets a full window.

        Args:
            inputs: Raw inputs of shape ``(T, inputs)``

        Returns:
            Array of shape ``(T, targets)``; row ``e`` is the prediction of
            the window ending at ``e``, i.e. of the target at
            ``e + target_offset``
        """
        inputs = np.asarray(inputs, dtype=float)
        length = self.config.window_length
        padded = np.concatenate(
            [np.repeat(inputs[:1], length - 1, axis=0), inputs], axis=0
        )
        normalized = self.inputs.apply(padded)
        windows = np.lib.stride_tricks.sliding_window_view(
            normalized, length, axis=0
        ).transpose(0, 2, 1)
        outputs = [
            self.network.predict(windows[start:start + batch_size])
            for start in range(0, len(windows), batch_size)
        ]
        return self.targets.invert(np.concatenate(outputs, axis=0))


def make_windows(
        inputs: np.ndarray,
        targets: np.ndarray,
        window_length: int,
        stride: int = 1,
        target_offset: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Cuts a series into windows and their targets

    The window ending at sample ``e`` is paired with the target at
    ``e + target_offset``.

    Returns:
        Windows of shape ``(N, window_length, inputs)`` and targets of shape
        ``(N, targets)``
    """
    last = len(inputs) - 1 - target_offset
    ends = np.arange(window_length - 1, last + 1, stride)
    if len(ends) == 0:
        width = inputs.shape[1]
        return np.empty((0, window_length, width)), \
            np.empty((0, targets.shape[1]))
    index = ends[:, None] + np.arange(-window_length + 1, 1)[None, :]
    return inputs[index], targets[ends + target_offset]


def split_trials(n_trials: int,
                 split: Tuple[float, float]) -> Tuple[range, range]:
    """Contiguous training and validation blocks of trial indices

    Raises:
        ValueError: With fewer than two trials
    """
    if n_trials < 2:
        raise FieldError('trials', 'at least two trials are needed')
    n_train = int(round(split[0] * n_trials))
    n_train = min(max(n_train, 1), n_trials - 1)
    return range(0, n_train), range(n_train, n_trials)


TrialArrays = Tuple[np.ndarray, np.ndarray]


def _windows_of(trials: Sequence[TrialArrays], config: NetworkConfig):
    pairs = [make_windows(x, y, config.window_length, config.stride,
                          config.target_offset) for x, y in trials]
    windows = np.concatenate([p[0] for p in pairs], axis=0)
    targets = np.concatenate([p[1] for p in pairs], axis=0)
    return windows, targets


def _evaluate(model: TrainedModel, windows: np.ndarray, targets: np.ndarray,
              lambda_: float, batch_size: int = 512) -> float:
    total = 0.0
    for start in range(0, len(windows), batch_size):
        batch = windows[start:start + batch_size]
        output, logvar, _ = model.network.forward(batch, train=False)
        predicted = None if logvar is None else (output, np.exp(logvar))
        total += len(batch) * loss(
            output, targets[start:start + batch_size], predicted,
            (0.0, 1.0), lambda_
        )
    return total / len(windows)


def train(
        trials: Sequence[TrialArrays],
        config: NetworkConfig = NetworkConfig(),
        spec: TrainSpec = TrainSpec(),
        initial: Optional[TrainedModel] = None,
        on_epoch: Optional[Callable[[EpochRecord], None]] = None
) -> Tuple[TrainedModel, TrainingLog]:
    """Trains a regressor on whole trials

    Args:
        trials: Pairs (inputs, targets) of arrays of shape ``(T, inputs)``
            and ``(T, targets)``, in chronological order
        config: Architecture and data layout
        spec: Training protocol
        initial: Resumes from the weights and normalization of this model
        on_epoch: Called with every log record

    Raises:
        ValueError: With fewer than two trials, or no window in a split
        TrainingDivergedError: If the validation loss becomes NaN
    """
    train_index, val_index = split_trials(len(trials), spec.split)
    train_trials = [trials[i] for i in train_index]
    val_trials = [trials[i] for i in val_index]

    if initial is not None:
        input_norm, target_norm = initial.inputs, initial.targets
        network = initial.network.copy()
    else:
        input_norm = Normalizer.fit(
            np.concatenate([x for x, _ in train_trials], axis=0)
        )
        target_norm = Normalizer.fit(
            np.concatenate([y for _, y in train_trials], axis=0)
        )
        network = LstmNetwork(
            input_size=train_trials[0][0].shape[1],
            output_size=train_trials[0][1].shape[1],
            units=config.units,
            layers=config.layers,
            dropout_rate=config.dropout_rate,
            variance_head=spec.loss_lambda > 0,
            seed=spec.seed
        )

    def normalized(pairs):
        return [(input_norm.apply(x), target_norm.apply(y)) for x, y in pairs]

    train_windows, train_targets = _windows_of(normalized(train_trials),
                                               config)
    val_windows, val_targets = _windows_of(normalized(val_trials), config)
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise FieldError('window_length', 'longer than the trials')

    optimizer = AdamOptimizer(learning_rate=config.learning_rate)
    shuffle_rng = substream(spec.seed, 'neural', 'shuffle')
    dropout_rng = substream(spec.seed, 'neural', 'dropout')
    stopping = EarlyStopping(spec.patience)
    log = TrainingLog()
    best = network.copy()
    model = TrainedModel(network, config, input_norm, target_norm)

    for epoch in range(1, spec.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_windows))
        epoch_loss = 0.0
        for start in range(0, len(order), spec.batch_size):
            batch = order[start:start + spec.batch_size]
            output, logvar, cache = network.forward(
                train_windows[batch], train=True, rng=dropout_rng
            )
            value, d_output, d_logvar = loss_gradients(
                output, train_targets[batch], logvar, spec.loss_lambda
            )
            backward_and_adam_step(network, cache, d_output, optimizer,
                                   d_logvar)
            epoch_loss += value * len(batch)
        epoch_loss /= len(order)

        val_loss = _evaluate(model, val_windows, val_targets,
                             spec.loss_lambda)
        if np.isnan(val_loss):
            raise TrainingDivergedError(epoch)
        stop = stopping.update(epoch, val_loss)
        if stopping.improved:
            best = network.copy()
        record = EpochRecord(epoch, epoch_loss, val_loss,
                             config.learning_rate, stop)
        log.records.append(record)
        logger.debug('epoch %d: train %.6g, validation %.6g',
                     epoch, epoch_loss, val_loss)
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            logger.info(
                'Early stopping after epoch %d, best epoch %d (%.6g)',
                epoch, stopping.best_epoch, stopping.best_loss
            )
            break

    log.best_epoch = stopping.best_epoch
    model = TrainedModel(best, config, input_norm, target_norm)
    physical = target_norm.invert(
        np.concatenate([
            best.predict(val_windows[start:start + 512])
            for start in range(0, len(val_windows), 512)
        ], axis=0)
    )
    errors = np.mean((physical - target_norm.invert(val_targets)) ** 2,
                     axis=0)
    model.val_mse = {name: float(value) for name, value
                     in zip(config.target_channels, errors)}
    return model, log
