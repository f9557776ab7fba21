"""Run configuration

A run is described by one YAML document whose sections map onto the
configuration records of the package::

    seed: 0
    out: out
    plant: {inertia: 0.0197, damping: 4.0, stiffness: 400.0, ...}
    noise: {sigma_gyro: 0.02, ...}
    gait: {walking_stance_fraction: 0.6, ...}
    simulate: {tasks: [walking, sitting, running], ...}
    filter: {q: [1.0e-08, 0.0001, 100.0], ukf: {alpha: 0.001, ...}, ...}
    network: {layers: 2, units: 50, ...}
    train: {max_epochs: 100, ...}
    hybrid: {history_k: 50, ...}
    benchmark: {models: [KF, EKF, UKF, LSTM, LSTM+UKF], ...}

Missing keys take their default, unknown keys are rejected. Every violation
raises :class:`~prosthestim.common.ConfigError` naming the dotted path of the
offending field, e.g. ``plant.dt``.
"""

from dataclasses import (
    MISSING,
    Field,
    asdict,
    dataclass,
    fields,
    is_dataclass,
    replace
)
from typing import (
    Any,
    Dict,
    Tuple
)

import yaml

from prosthestim.benchmark import (
    BenchmarkConfig
)
from prosthestim.common import (
    ConfigError,
    FieldError
)
from prosthestim.datasets import (
    SimulationSettings
)
from prosthestim.filter_kalman import (
    DISCRETIZATIONS
)
from prosthestim.filter_model import (
    DEFAULT_INITIAL_VARIANCE,
    ProcessModel,
    UkfParams
)
from prosthestim.hybrid import (
    HybridConfig
)
from prosthestim.neural_training import (
    NetworkConfig,
    TrainSpec
)
from prosthestim.plant import (
    GaitSettings,
    PlantParams
)
from prosthestim.sensors import (
    NoiseSpec
)


@dataclass(frozen=True)
class FilterSettings:
    """Settings shared by the model-based estimators

    Attributes:
        q: Diagonal of the process noise covariance
        initial_variance: Diagonal of the initial covariance
        ukf: Sigma-point spread
        discretization: Discretization of the linear filter
    """

    q: Tuple[float, float, float] = (1e-8, 1e-4, 100.0)
    initial_variance: Tuple[float, float, float] = DEFAULT_INITIAL_VARIANCE
    ukf: UkfParams = UkfParams()
    discretization: str = 'expm'

    def __post_init__(self):
        object.__setattr__(self, 'q', tuple(float(v) for v in self.q))
        ProcessModel(q=self.q)
        variance = tuple(float(v) for v in self.initial_variance)
        if len(variance) != 3 or min(variance) <= 0:
            raise FieldError('initial_variance',
                             'expects three positive variances')
        object.__setattr__(self, 'initial_variance', variance)
        if self.discretization not in DISCRETIZATIONS:
            raise FieldError(
                'discretization',
                f'expects one of {", ".join(DISCRETIZATIONS)}'
            )

    def process_model(self, plant: PlantParams) -> ProcessModel:
        """Process model over ``plant``"""
        return ProcessModel(plant=plant, q=self.q)


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, from one master seed"""

    seed: int = 0
    out: str = 'out'
    plant: PlantParams = PlantParams()
    noise: NoiseSpec = NoiseSpec()
    gait: GaitSettings = GaitSettings()
    simulate: SimulationSettings = SimulationSettings()
    filter: FilterSettings = FilterSettings()
    network: NetworkConfig = NetworkConfig()
    train: TrainSpec = TrainSpec()
    hybrid: HybridConfig = HybridConfig()
    benchmark: BenchmarkConfig = BenchmarkConfig()

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise FieldError('seed', 'must be a non-negative integer')
        if not self.out:
            raise FieldError('out', 'must not be empty')


def _join(path: str, name: Any) -> str:
    return f'{path}.{name}' if path else str(name)


def _default(spec: Field) -> Any:
    if spec.default is not MISSING:
        return spec.default
    if spec.default_factory is not MISSING:  # type: ignore
        return spec.default_factory()  # type: ignore
    return None


def _coerce(value: Any, default: Any, path: str) -> Any:
    """Converts a YAML scalar or list to the type of ``default``"""
    if isinstance(value, list):
        if isinstance(default, tuple) and default:
            return tuple(
                _coerce(item, default[min(i, len(default) - 1)], path)
                for i, item in enumerate(value)
            )
        return tuple(_coerce(item, None, path) for item in value)
    if isinstance(value, dict):
        raise ConfigError(path, 'expects a value, got a mapping')
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f'expects true or false, got {value!r}')
        return value
    if isinstance(default, float) and not isinstance(value, bool):
        # PyYAML reads 1e-3 (no dot) as a string
        try:
            return float(value)
        except (TypeError, ValueError) as error:
            raise ConfigError(path, f'expects a number, got {value!r}') \
                from error
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f'expects an integer, got {value!r}')
    return value


def _build(cls: type, data: Any, path: str = '', base: Any = None) -> Any:
    """Builds the dataclass ``cls`` from a mapping, recursively

    Missing keys are taken from ``base`` when given, from the field defaults
    otherwise.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path or '<root>', 'expects a mapping')
    specs = {spec.name: spec for spec in fields(cls) if spec.init}
    for key in data:
        if key not in specs:
            raise ConfigError(_join(path, key), 'unknown key')
    kwargs = {}
    for name, value in data.items():
        default = getattr(base, name) if base is not None \
            else _default(specs[name])
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, _join(path, name),
                                  default)
        else:
            kwargs[name] = _coerce(value, default, _join(path, name))
    try:
        if base is not None:
            return replace(base, **kwargs)
        return cls(**kwargs)
    except ConfigError:
        raise
    except FieldError as error:
        raise ConfigError(_join(path, error.field), error.message) from error
    except (TypeError, ValueError, NotImplementedError) as error:
        raise ConfigError(path or '<root>', str(error)) from error


def from_dict(data: Any) -> RunConfig:
    """Builds a configuration from a parsed YAML document

    Raises:
        ConfigError: On an unknown key or an invalid value
    """
    return _build(RunConfig, data)


def loads(text: str) -> RunConfig:
    """Parses a YAML configuration

    Raises:
        ConfigError: On a syntax error, an unknown key or an invalid value
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as error:
        raise ConfigError('<root>', f'invalid YAML: {error}') from error
    return from_dict(data)


def load(path) -> RunConfig:
    """Reads a YAML configuration file

    Raises:
        ConfigError: If the file cannot be read or is invalid
    """
    try:
        with open(path, encoding='utf-8') as file:
            text = file.read()
    except OSError as error:
        raise ConfigError('<root>', f'cannot read {path}: {error}') \
            from error
    return loads(text)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def to_dict(config: RunConfig) -> Dict[str, Any]:
    """Plain mapping of a configuration, tuples as lists"""
    return _plain(asdict(config))


def dumps(config: RunConfig) -> str:
    """Renders a configuration as YAML, loadable by :func:`loads`"""
    return yaml.safe_dump(to_dict(config), sort_keys=False,
                          default_flow_style=None)
