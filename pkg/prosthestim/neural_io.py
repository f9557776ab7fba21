"""Binary container of trained models

Layout, all integers little endian::

    magic        8 bytes   b'PSTLSTM\\x00'
    version      uint32
    header size  uint32
    header       UTF-8 JSON text: configuration, normalization, tensor
                 names and shapes, validation errors
    tensors      float64, little endian, C order, in header order
"""

import json
import struct
from dataclasses import (
    asdict
)
from typing import (
    Any,
    Dict
)

import numpy as np

from prosthestim.common import (
    DatasetError
)
from prosthestim.neural import (
    LstmNetwork
)
from prosthestim.neural_training import (
    NetworkConfig,
    Normalizer,
    TrainedModel
)


MAGIC = b'PSTLSTM\x00'
FORMAT_VERSION = 1
_PREFIX = struct.Struct('<8sII')


def _header(model: TrainedModel) -> Dict[str, Any]:
    network = model.network
    return {
        'config': asdict(model.config),
        'network': {
            'input_size': network.input_size,
            'output_size': network.output_size,
            'units': network.units,
            'layers': network.layers,
            'dropout_rate': network.dropout_rate,
            'variance_head': network.variance_head,
        },
        'normalization': {
            'input_mean': model.inputs.mean.tolist(),
            'input_std': model.inputs.std.tolist(),
            'target_mean': model.targets.mean.tolist(),
            'target_std': model.targets.std.tolist(),
        },
        'val_mse': model.val_mse,
        'tensors': [
            {'name': name, 'shape': list(value.shape)}
            for name, value in network.params.items()
        ],
    }


def dumps_model(model: TrainedModel) -> bytes:
    """Serializes a model"""
    header = json.dumps(_header(model), sort_keys=True).encode('utf-8')
    chunks = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)), header]
    for value in model.network.params.values():
        chunks.append(np.ascontiguousarray(value, dtype='<f8').tobytes())
    return b''.join(chunks)


def loads_model(data: bytes, path: str = '<bytes>') -> TrainedModel:
    """Deserializes a model

    Raises:
        DatasetError: If the container is malformed or of another version
    """
    if len(data) < _PREFIX.size:
        raise DatasetError('truncated model container', path)
    magic, version, header_size = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DatasetError('not a model container', path)
    if version != FORMAT_VERSION:
        raise DatasetError(f'unsupported model format version {version}',
                           path)
    offset = _PREFIX.size
    try:
        header = json.loads(data[offset:offset + header_size].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise DatasetError(f'corrupt header: {error}', path) from error
    offset += header_size

    network = LstmNetwork(seed=0, **header['network'])
    for tensor in header['tensors']:
        shape = tuple(tensor['shape'])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise DatasetError(f'truncated tensor {tensor["name"]}', path)
        network.params[tensor['name']] = np.frombuffer(
            data, dtype='<f8', count=count, offset=offset
        ).astype(float).reshape(shape)
        offset = end
    if offset != len(data):
        raise DatasetError('trailing bytes after the last tensor', path)

    norm = header['normalization']
    config = header['config']
    config['input_channels'] = tuple(config['input_channels'])
    config['target_channels'] = tuple(config['target_channels'])
    return TrainedModel(
        network=network,
        config=NetworkConfig(**config),
        inputs=Normalizer(np.array(norm['input_mean']),
                          np.array(norm['input_std'])),
        targets=Normalizer(np.array(norm['target_mean']),
                           np.array(norm['target_std'])),
        val_mse={k: float(v) for k, v in header['val_mse'].items()}
    )


def save_model(model: TrainedModel, path) -> None:
    """Writes a model container"""
    with open(path, 'wb') as file:
        file.write(dumps_model(model))


def load_model(path) -> TrainedModel:
    """Reads a model container

    Raises:
        DatasetError: If the file is missing or malformed
    """
    try:
        with open(path, 'rb') as file:
            data = file.read()
    except OSError as error:
        raise DatasetError(f'cannot read model: {error}', str(path)) \
            from error
    return loads_model(data, str(path))
