"""Stacked LSTM sequence regressor written against numpy

A layer of :math:`H` units reads :math:`x_t \\in \\mathbb{R}^D` and updates
its hidden and cell states through the gates

.. math::

    f_t = \\sigma(W_f [h_{t-1}, x_t] + b_f), \\quad
    i_t = \\sigma(W_i [h_{t-1}, x_t] + b_i), \\quad
    \\tilde{C}_t = \\tanh(W_C [h_{t-1}, x_t] + b_C)

.. math::

    C_t = f_t \\odot C_{t-1} + i_t \\odot \\tilde{C}_t, \\quad
    o_t = \\sigma(W_o [h_{t-1}, x_t] + b_o), \\quad
    h_t = o_t \\odot \\tanh(C_t)

The four gate matrices of a layer are stacked into one array of shape
:math:`(4H, H + D)` in the order :math:`f, i, C, o`. Layers are stacked, the
last hidden state feeds a dense head. In training mode inverted dropout is
applied between layers and before the head. Gradients are computed by
backpropagation through time and applied with Adam.

Inputs are batched as arrays of shape ``(batch, time, features)``.
"""

import logging
from dataclasses import (
    dataclass
)
from typing import (
    Dict,
    List,
    Optional,
    Tuple
)

import numpy as np

from prosthestim.common import (
    DimensionMismatchError,
    FieldError,
    NumericOverflowError
)
from prosthestim.random_streams import (
    substream
)


logger = logging.getLogger(__name__)

GATES = ('f', 'i', 'C', 'o')

Params = Dict[str, np.ndarray]


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, evaluated without overflow"""
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    return out


@dataclass
class LstmLayerWeights:
    """Weights of one layer

    Attributes:
        weight: Stacked gate matrices, shape ``(4H, H + D)``
        bias: Stacked gate biases, shape ``(4H,)``
    """

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        rows, columns = self.weight.shape
        if rows % 4 != 0 or rows // 4 > columns:
            raise DimensionMismatchError(
                f'weight of shape {self.weight.shape} is not a stack of four '
                'gate matrices over [h, x]'
            )
        if self.bias.shape != (rows,):
            raise DimensionMismatchError(
                f'bias of shape {self.bias.shape} does not match weight of '
                f'shape {self.weight.shape}'
            )
        if not (np.all(np.isfinite(self.weight)) and
                np.all(np.isfinite(self.bias))):
            raise FieldError('weight', 'entries must be finite')

    @property
    def hidden_size(self) -> int:
        """Number of units :math:`H`"""
        return self.weight.shape[0] // 4

    @property
    def input_size(self) -> int:
        """Input dimension :math:`D`"""
        return self.weight.shape[1] - self.hidden_size

    def gate(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """Returns the matrix and bias of gate ``f``, ``i``, ``C`` or ``o``
        """
        index = GATES.index(name)
        size = self.hidden_size
        rows = slice(index * size, (index + 1) * size)
        return self.weight[rows], self.bias[rows]


@dataclass
class LstmCellState:
    """Hidden and cell vectors, possibly batched"""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(hidden_size: int,
              batch: Optional[int] = None) -> 'LstmCellState':
        """Returns the all-zero state"""
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return LstmCellState(np.zeros(shape), np.zeros(shape))


@dataclass
class _StepCache:
    joined: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray


def _gates(joined: np.ndarray, w: LstmLayerWeights):
    size = w.hidden_size
    z = joined @ w.weight.T + w.bias
    f = sigmoid(z[..., :size])
    i = sigmoid(z[..., size:2 * size])
    g = np.tanh(z[..., 2 * size:3 * size])
    o = sigmoid(z[..., 3 * size:])
    return f, i, g, o


def cell_step(
        x_t: np.ndarray,
        prev: LstmCellState,
        w: LstmLayerWeights) -> LstmCellState:
    """Advances one layer by one time step

    Raises:
        DimensionMismatchError: If the input or the state does not match the
            weights
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != w.input_size:
        raise DimensionMismatchError(
            f'x_t of shape {x_t.shape} does not match weight of shape '
            f'{w.weight.shape} (input size {w.input_size})'
        )
    if prev.h.shape[-1] != w.hidden_size or prev.c.shape != prev.h.shape:
        raise DimensionMismatchError(
            f'state h{prev.h.shape}, C{prev.c.shape} does not match weight '
            f'of shape {w.weight.shape} (hidden size {w.hidden_size})'
        )
    joined = np.concatenate([prev.h, x_t], axis=-1)
    f, i, g, o = _gates(joined, w)
    c = f * prev.c + i * g
    return LstmCellState(o * np.tanh(c), c)


def dropout_mask(shape: Tuple[int, ...], rate: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout mask: 0 with probability ``rate``, else
    :math:`1 / (1 - rate)`"""
    if rate == 0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


@dataclass
class ForwardCache:
    """Activations of a training forward pass, consumed by
    :meth:`LstmNetwork.backward`"""

    steps: List[List[_StepCache]]
    layer_masks: List[np.ndarray]
    head_input: np.ndarray
    head_mask: np.ndarray
    input_shape: Tuple[int, ...]


class LstmNetwork:
    """Stacked LSTM with a dense head

    Args:
        input_size: Number of input features
        output_size: Number of regression targets
        units: Units per layer
        layers: Number of stacked layers
        dropout_rate: Inverted dropout rate, within :math:`[0, 1)`
        variance_head: Adds a head predicting the log-variance of every
            target
        seed: Seed of the weight initialization

    Weights are drawn uniformly in :math:`\\pm 1 / \\sqrt{\\mathrm{fan\\_in}}`,
    the forget biases start at 1.
    """

    def __init__(
            self,
            input_size: int,
            output_size: int,
            units: int = 50,
            layers: int = 2,
            dropout_rate: float = 0.2,
            variance_head: bool = False,
            seed: int = 0):
        if input_size < 1 or output_size < 1:
            raise FieldError('input_size', 'network needs inputs and outputs')
        if units < 1:
            raise FieldError('units', 'must be >= 1')
        if layers < 1:
            raise FieldError('layers', 'must be >= 1')
        if not 0 <= dropout_rate < 1:
            raise FieldError('dropout_rate', 'must lie in [0, 1)')
        self.input_size = input_size
        self.output_size = output_size
        self.units = units
        self.layers = layers
        self.dropout_rate = dropout_rate
        self.variance_head = variance_head
        self.params: Params = {}
        rng = substream(seed, 'neural', 'init')
        fan_in = input_size
        for layer in range(layers):
            bound = 1.0 / np.sqrt(units + fan_in)
            self.params[f'lstm{layer}.weight'] = rng.uniform(
                -bound, bound, size=(4 * units, units + fan_in)
            )
            bias = rng.uniform(-bound, bound, size=4 * units)
            bias[:units] += 1.0
            self.params[f'lstm{layer}.bias'] = bias
            fan_in = units
        bound = 1.0 / np.sqrt(units)
        self.params['dense.weight'] = rng.uniform(
            -bound, bound, size=(output_size, units)
        )
        self.params['dense.bias'] = np.zeros(output_size)
        if variance_head:
            self.params['logvar.weight'] = rng.uniform(
                -bound, bound, size=(output_size, units)
            )
            self.params['logvar.bias'] = np.zeros(output_size)

    def layer_weights(self, layer: int) -> LstmLayerWeights:
        """Returns a view on the weights of ``layer``"""
        return LstmLayerWeights(
            self.params[f'lstm{layer}.weight'],
            self.params[f'lstm{layer}.bias']
        )

    def copy(self) -> 'LstmNetwork':
        """Returns a deep copy"""
        other = LstmNetwork.__new__(LstmNetwork)
        other.__dict__.update(self.__dict__)
        other.params = {name: value.copy()
                        for name, value in self.params.items()}
        return other

    def n_parameters(self) -> int:
        """Number of scalar parameters"""
        return int(sum(value.size for value in self.params.values()))

    def forward(
            self,
            window: np.ndarray,
            train: bool = False,
            rng: Optional[np.random.Generator] = None
    ) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[ForwardCache]]:
        """Runs the network over a batch of windows

        Args:
            window: Inputs of shape ``(batch, time, features)`` or
                ``(time, features)``
            train: Applies dropout and keeps the activations for
                :meth:`backward`
            rng: Generator of the dropout masks, required when training with
                dropout

        Returns:
            The outputs, the predicted log-variances (``None`` without a
            variance head) and the cache (``None`` in evaluation mode)

        Raises:
            DimensionMismatchError: If the window has the wrong feature count
            NumericOverflowError: If an activation becomes non-finite
        """
        window = np.asarray(window, dtype=float)
        single = window.ndim == 2
        if single:
            window = window[None]
        if window.ndim != 3 or window.shape[2] != self.input_size:
            raise DimensionMismatchError(
                f'window of shape {window.shape} for input size '
                f'{self.input_size}'
            )
        if window.shape[1] < 1:
            raise FieldError('window', 'length must be >= 1')
        use_dropout = train and self.dropout_rate > 0
        if use_dropout and rng is None:
            raise ValueError('Training with dropout requires a generator')
        batch, length, _ = window.shape

        steps: List[List[_StepCache]] = []
        layer_masks: List[np.ndarray] = []
        sequence = window
        for layer in range(self.layers):
            if layer > 0 and use_dropout:
                mask = dropout_mask(sequence.shape, self.dropout_rate, rng)
                layer_masks.append(mask)
                sequence = sequence * mask
            elif layer > 0:
                layer_masks.append(np.ones(sequence.shape))
            w = self.layer_weights(layer)
            h = np.zeros((batch, self.units))
            c = np.zeros((batch, self.units))
            outputs = np.empty((batch, length, self.units))
            layer_steps = []
            for t in range(length):
                joined = np.concatenate([h, sequence[:, t]], axis=1)
                f, i, g, o = _gates(joined, w)
                c_prev = c
                c = f * c_prev + i * g
                tanh_c = np.tanh(c)
                h = o * tanh_c
                if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
                    raise NumericOverflowError(layer, t)
                outputs[:, t] = h
                if train:
                    layer_steps.append(
                        _StepCache(joined, f, i, g, o, c_prev, tanh_c)
                    )
            steps.append(layer_steps)
            sequence = outputs

        head_input = sequence[:, -1]
        if use_dropout:
            head_mask = dropout_mask(head_input.shape, self.dropout_rate, rng)
        else:
            head_mask = np.ones(head_input.shape)
        dropped = head_input * head_mask
        output = dropped @ self.params['dense.weight'].T + \
            self.params['dense.bias']
        logvar = None
        if self.variance_head:
            logvar = dropped @ self.params['logvar.weight'].T + \
                self.params['logvar.bias']
        if not np.all(np.isfinite(output)):
            raise NumericOverflowError(self.layers, length - 1)

        cache = None
        if train:
            cache = ForwardCache(steps, layer_masks, dropped, head_mask,
                                 window.shape)
        if single:
            output = output[0]
            logvar = None if logvar is None else logvar[0]
        return output, logvar, cache

    def predict(self, window: np.ndarray) -> np.ndarray:
        """Evaluation-mode outputs, deterministic and dropout free"""
        output, _, _ = self.forward(window, train=False)
        return output

    def backward(
            self,
            cache: ForwardCache,
            d_output: np.ndarray,
            d_logvar: Optional[np.ndarray] = None) -> Params:
        """Backpropagation through time

        Args:
            cache: Cache of the training forward pass
            d_output: Gradient of the loss with respect to the outputs,
                shape ``(batch, outputs)``
            d_logvar: Gradient with respect to the log-variances

        Returns:
            Gradients, keyed as :attr:`params`
        """
        grads: Params = {name: np.zeros_like(value)
                         for name, value in self.params.items()}
        d_output = np.atleast_2d(d_output)
        grads['dense.weight'] = d_output.T @ cache.head_input
        grads['dense.bias'] = d_output.sum(axis=0)
        d_head = d_output @ self.params['dense.weight']
        if self.variance_head and d_logvar is not None:
            d_logvar = np.atleast_2d(d_logvar)
            grads['logvar.weight'] = d_logvar.T @ cache.head_input
            grads['logvar.bias'] = d_logvar.sum(axis=0)
            d_head = d_head + d_logvar @ self.params['logvar.weight']
        d_head = d_head * cache.head_mask

        batch, length, _ = cache.input_shape
        d_sequence = np.zeros((batch, length, self.units))
        d_sequence[:, -1] = d_head
        units = self.units
        for layer in reversed(range(self.layers)):
            weight = self.params[f'lstm{layer}.weight']
            d_weight = grads[f'lstm{layer}.weight']
            d_bias = grads[f'lstm{layer}.bias']
            input_size = weight.shape[1] - units
            d_inputs = np.zeros((batch, length, input_size))
            d_h_next = np.zeros((batch, units))
            d_c_next = np.zeros((batch, units))
            for t in reversed(range(length)):
                step = cache.steps[layer][t]
                d_h = d_sequence[:, t] + d_h_next
                d_o = d_h * step.tanh_c
                d_c = d_c_next + d_h * step.o * (1.0 - step.tanh_c ** 2)
                d_f = d_c * step.c_prev
                d_i = d_c * step.g
                d_g = d_c * step.i
                d_c_next = d_c * step.f
                d_z = np.concatenate([
                    d_f * step.f * (1.0 - step.f),
                    d_i * step.i * (1.0 - step.i),
                    d_g * (1.0 - step.g ** 2),
                    d_o * step.o * (1.0 - step.o),
                ], axis=1)
                d_weight += d_z.T @ step.joined
                d_bias += d_z.sum(axis=0)
                d_joined = d_z @ weight
                d_h_next = d_joined[:, :units]
                d_inputs[:, t] = d_joined[:, units:]
            if layer > 0:
                d_sequence = d_inputs * cache.layer_masks[layer - 1]
        return grads


def gaussian_kl(mean_p, var_p, mean_q, var_q) -> np.ndarray:
    """Closed-form :math:`KL(\\mathcal{N}_p \\| \\mathcal{N}_q)` of diagonal
    Gaussians, summed over the last axis

    Raises:
        ValueError: If a variance is not positive
    """
    var_p = np.asarray(var_p, dtype=float)
    var_q = np.asarray(var_q, dtype=float)
    if np.any(var_p <= 0) or np.any(var_q <= 0):
        raise FieldError('variance', 'must be > 0')
    mean_p = np.asarray(mean_p, dtype=float)
    mean_q = np.asarray(mean_q, dtype=float)
    terms = np.log(var_q / var_p) + \
        (var_p + (mean_p - mean_q) ** 2) / var_q - 1.0
    return 0.5 * np.sum(terms, axis=-1)


def loss(
        pred: np.ndarray,
        target: np.ndarray,
        predicted_dist: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        prior_dist: Tuple[float, float] = (0.0, 1.0),
        lambda_: float = 0.0) -> float:
    """Mean squared error, plus :math:`\\lambda` times the batch mean of the
    KL divergence from the predicted distribution to the prior

    Args:
        pred: Predictions
        target: Targets of the same shape
        predicted_dist: Pair (mean, variance), needed when
            :math:`\\lambda > 0`
        prior_dist: Pair (mean, variance) of the prior
        lambda_: KL weight

    Raises:
        DimensionMismatchError: If the shapes differ
        ValueError: If :math:`\\lambda > 0` and a variance is not positive
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionMismatchError(
            f'pred of shape {pred.shape} vs target of shape {target.shape}'
        )
    if lambda_ < 0:
        raise FieldError('lambda', 'must be >= 0')
    value = float(np.mean((pred - target) ** 2))
    if lambda_ > 0:
        if predicted_dist is None:
            raise FieldError('predicted_dist', 'required when lambda > 0')
        mean, var = predicted_dist
        prior_mean, prior_var = prior_dist
        divergence = gaussian_kl(
            mean, var,
            np.broadcast_to(prior_mean, np.shape(mean)),
            np.broadcast_to(prior_var, np.shape(var))
        )
        value += lambda_ * float(np.mean(divergence))
    return value


def loss_gradients(
        output: np.ndarray,
        target: np.ndarray,
        logvar: Optional[np.ndarray] = None,
        lambda_: float = 0.0
) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
    """Loss of a batch and its gradients with respect to the outputs and the
    log-variances

    The prior of the KL term is the standard normal of the normalized
    targets.
    """
    predicted = None if logvar is None else (output, np.exp(logvar))
    value = loss(output, target, predicted, (0.0, 1.0), lambda_)
    d_output = 2.0 * (output - target) / output.size
    d_logvar = None
    if lambda_ > 0 and logvar is not None:
        batch = output.shape[0] if output.ndim > 1 else 1
        d_output = d_output + lambda_ * output / batch
        d_logvar = lambda_ * 0.5 * (np.exp(logvar) - 1.0) / batch
    return value, d_output, d_logvar


class AdamOptimizer:
    """Adam with bias-corrected moments and global-norm clipping

    Args:
        learning_rate: Step size
        beta1: Decay of the first moment
        beta2: Decay of the second moment
        epsilon: Denominator offset
        clip_norm: Gradients whose global norm exceeds this value are rescaled
    """

    def __init__(
            self,
            learning_rate: float = 1e-3,
            beta1: float = 0.9,
            beta2: float = 0.999,
            epsilon: float = 1e-8,
            clip_norm: float = 5.0):
        if learning_rate <= 0:
            raise FieldError('learning_rate', 'must be > 0')
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.iteration = 0
        self.first: Params = {}
        self.second: Params = {}

    def clip(self, grads: Params) -> Params:
        """Rescales the gradients to the clipping norm if needed"""
        norm = float(np.sqrt(sum(np.sum(g ** 2) for g in grads.values())))
        if not np.isfinite(norm):
            raise FloatingPointError('Non-finite gradient norm')
        if norm > self.clip_norm:
            logger.warning(
                'Clipping gradient of global norm %.4g to %.4g',
                norm, self.clip_norm
            )
            scale = self.clip_norm / norm
            return {name: g * scale for name, g in grads.items()}
        return grads

    def step(self, params: Params, grads: Params) -> None:
        """Updates ``params`` in place"""
        grads = self.clip(grads)
        self.iteration += 1
        correction1 = 1.0 - self.beta1 ** self.iteration
        correction2 = 1.0 - self.beta2 ** self.iteration
        for name, grad in grads.items():
            if name not in self.first:
                self.first[name] = np.zeros_like(grad)
                self.second[name] = np.zeros_like(grad)
            first = self.first[name]
            second = self.second[name]
            first *= self.beta1
            first += (1.0 - self.beta1) * grad
            second *= self.beta2
            second += (1.0 - self.beta2) * grad ** 2
            params[name] -= self.learning_rate * (first / correction1) / (
                np.sqrt(second / correction2) + self.epsilon
            )


def backward_and_adam_step(
        network: LstmNetwork,
        cache: ForwardCache,
        d_output: np.ndarray,
        optimizer: AdamOptimizer,
        d_logvar: Optional[np.ndarray] = None) -> Params:
    """Backpropagates a loss gradient and applies one Adam step

    Returns:
        The (unclipped) gradients
    """
    grads = network.backward(cache, d_output, d_logvar)
    optimizer.step(network.params, grads)
    return grads
