"""
Binary checkpoint files for network parameters.

Layout::

    b"HZLB" | uint16 version | uint32 header length | JSON header | float64 data

The header holds the network kind, its config, optional metadata, and the
ordered (name, shape) list; the data section is every parameter in that order,
little endian. Keys are sorted so identical parameters give identical bytes.
"""

import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from ._validation import CheckpointError
from .models import DiscriminatorConfig, GeneratorConfig
from .network import DiscriminatorParams, GeneratorParams, ParamStore
from .tensor import Tensor4

MAGIC = b"HZLB"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")

_KINDS = {
    "generator": (GeneratorConfig, GeneratorParams),
    "discriminator": (DiscriminatorConfig, DiscriminatorParams),
}


def _kind_of(params: ParamStore) -> str:
    return "generator" if isinstance(params.config, GeneratorConfig) else "discriminator"


def encode_checkpoint(params: ParamStore, metadata: Optional[Dict[str, Any]] = None) -> bytes:
    header = {
        "version": VERSION,
        "kind": _kind_of(params),
        "config": params.config.model_dump(mode="json"),
        "metadata": metadata or {},
        "params": [[name, list(t.shape)] for name, t in params],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    data = params.flat().astype("<f8").tobytes()
    return _PREFIX.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + data


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Tuple[ParamStore, Dict[str, Any]]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{source}: truncated checkpoint")
    magic, version, header_length = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: not a hazelab checkpoint")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")

    start = _PREFIX.size
    try:
        header = json.loads(blob[start : start + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: corrupt checkpoint header") from e
    if header.get("kind") not in _KINDS:
        raise CheckpointError(f"{source}: unknown network kind {header.get('kind')!r}")
    config_cls, params_cls = _KINDS[header["kind"]]
    config = config_cls(**header["config"])

    data = blob[start + header_length :]
    if len(data) % 8:
        raise CheckpointError(f"{source}: truncated checkpoint")
    values = np.frombuffer(data, dtype="<f8")
    expected = sum(int(np.prod(shape)) for _, shape in header["params"])
    if values.size != expected:
        raise CheckpointError(f"{source}: expected {expected} parameter values, found {values.size}")

    tensors: "OrderedDict[str, Tensor4]" = OrderedDict()
    offset = 0
    for name, shape in header["params"]:
        size = int(np.prod(shape))
        tensors[name] = Tensor4(values[offset : offset + size].reshape(shape), requires_grad=True, name=name)
        offset += size
    return params_cls(config, tensors), header["metadata"]


def save_checkpoint(params: ParamStore, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write atomically: the previous file stays intact until the new one is complete."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(params, metadata)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"Wrote {_kind_of(params)} checkpoint {path} ({params.count()} parameters)")
    return path


def load_checkpoint(
    path: Union[str, Path],
    expected_config: Optional[Union[GeneratorConfig, DiscriminatorConfig]] = None,
) -> Tuple[ParamStore, Dict[str, Any]]:
    """Read a checkpoint; a config differing from ``expected_config`` is an error."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    params, metadata = decode_checkpoint(path.read_bytes(), source=str(path))
    if expected_config is not None and params.config != expected_config:
        raise CheckpointError(
            f"{path}: checkpoint config does not match the requested network",
            suggestion="Load with the config the checkpoint was trained with, or retrain",
        )
    return params, metadata
