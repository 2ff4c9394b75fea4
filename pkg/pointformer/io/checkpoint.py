"""APFW: deterministic little-endian tensor checkpoint with a trainable flag per tensor.

Layout::

    magic "APFW" | version u32 | entry count u32
    per entry: name length u32 | UTF-8 name | dtype u8 | rank u32 | dims u64 × rank
               | trainable u8 | offset u64 | nbytes u64
    zero padding to 8 bytes, then each payload at its offset, 8-byte aligned
"""

from __future__ import annotations

import logging
import math
import struct
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np

from pointformer.autodiff.tensor import Tensor
from pointformer.core.config import BackboneConfig
from pointformer.core.errors import (
    BadMagicError,
    ConfigError,
    DuplicateNameError,
    FormatError,
    InvalidInputError,
    OverlapError,
    SizeMismatchError,
    TruncatedError,
    UnknownDTypeError,
    VersionMismatchError,
)
from pointformer.model.backbone import BackboneWeights, BlockWeights
from pointformer.model.pipeline import PointFormerModel

logger = logging.getLogger(__name__)

MAGIC = b"APFW"
VERSION = 1
ALIGNMENT = 8
DTYPE_FLOAT32 = 0
_DTYPES = {DTYPE_FLOAT32: ("<f4", 4)}

_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")
_U8 = struct.Struct("<B")
_U64 = struct.Struct("<Q")
_TAIL = struct.Struct("<BQQ")


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def _entries(
    tensors: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
) -> list[tuple[str, Tensor]]:
    items = list(tensors.items()) if isinstance(tensors, Mapping) else list(tensors)
    seen: set[str] = set()
    for name, _ in items:
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
    return items


def encode_checkpoint(tensors: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]]) -> bytes:
    """Serialize in the given order; identical inputs give identical bytes."""
    items = _entries(tensors)
    encoded_names = [name.encode("utf-8") for name, _ in items]
    directory_size = _HEADER.size + sum(
        _U32.size + len(raw) + _U8.size + _U32.size + _U64.size * t.data.ndim + _TAIL.size
        for raw, (_, t) in zip(encoded_names, items)
    )
    offset = _align(directory_size)
    directory = [_HEADER.pack(MAGIC, VERSION, len(items))]
    payloads = []
    for raw, (_, tensor) in zip(encoded_names, items):
        data = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
        directory.append(_U32.pack(len(raw)) + raw)
        directory.append(_U8.pack(DTYPE_FLOAT32) + _U32.pack(tensor.data.ndim))
        directory.extend(_U64.pack(dim) for dim in tensor.data.shape)
        directory.append(_TAIL.pack(int(tensor.requires_grad), offset, len(data)))
        payloads.append((offset, data))
        offset = _align(offset + len(data))

    out = bytearray(b"".join(directory))
    for start, data in payloads:
        out.extend(b"\x00" * (start - len(out)))
        out.extend(data)
    out.extend(b"\x00" * (_align(len(out)) - len(out)))
    return bytes(out)


def write_checkpoint(
    tensors: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]], path: str | Path
) -> None:
    Path(path).write_bytes(encode_checkpoint(tensors))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, fmt: struct.Struct, what: str) -> tuple:
        if self.pos + fmt.size > len(self.data):
            raise TruncatedError(f"checkpoint ends inside {what} at byte {self.pos}")
        values = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return values

    def raw(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"checkpoint ends inside {what} at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def decode_checkpoint(data: bytes) -> dict[str, Tensor]:
    """Parse and validate a checkpoint; tensors come back in file order."""
    if not (MAGIC.startswith(data) if len(data) < len(MAGIC) else data.startswith(MAGIC)):
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    reader = _Reader(data)
    _, version, count = reader.take(_HEADER, "header")
    if version != VERSION:
        raise VersionMismatchError(f"APFW version {version}, this build reads {VERSION}")

    entries = []
    names: set[str] = set()
    for index in range(count):
        (name_len,) = reader.take(_U32, f"entry {index} name length")
        try:
            name = reader.raw(name_len, f"entry {index} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry {index}: name is not UTF-8") from exc
        if name in names:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        names.add(name)
        (dtype,) = reader.take(_U8, f"{name} dtype")
        if dtype not in _DTYPES:
            raise UnknownDTypeError(f"{name}: unknown dtype tag {dtype}")
        (rank,) = reader.take(_U32, f"{name} rank")
        dims = tuple(reader.take(_U64, f"{name} dims")[0] for _ in range(rank))
        trainable, offset, nbytes = reader.take(_TAIL, f"{name} entry")
        if trainable not in (0, 1):
            raise FormatError(f"{name}: trainable flag must be 0 or 1, got {trainable}")
        entries.append((name, dtype, dims, bool(trainable), offset, nbytes))

    end = _align(reader.pos)
    tensors: dict[str, Tensor] = {}
    for name, dtype, dims, trainable, offset, nbytes in entries:
        code, itemsize = _DTYPES[dtype]
        expected = math.prod(dims) * itemsize
        if nbytes != expected:
            raise SizeMismatchError(
                f"{name}: {nbytes} payload bytes declared, shape needs {expected}"
            )
        if offset < end or offset % ALIGNMENT:
            raise OverlapError(
                f"{name}: offset {offset} overlaps the previous extent ending at {end}"
            )
        if offset + nbytes > len(data):
            raise TruncatedError(f"{name}: payload runs past the end of the file")
        array = np.frombuffer(data, dtype=code, count=math.prod(dims), offset=offset)
        tensors[name] = Tensor(
            array.reshape(dims).astype(np.float32),
            requires_grad=trainable,
            name=name,
            dtype=np.float32,
        )
        end = _align(offset + nbytes)
    if len(data) != end:
        raise SizeMismatchError(f"file has {len(data)} bytes, directory accounts for {end}")
    return tensors


def read_checkpoint(path: str | Path) -> dict[str, Tensor]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    return decode_checkpoint(data)


def load_backbone(tensors: Mapping[str, Tensor], config: BackboneConfig) -> BackboneWeights:
    """Assemble ``backbone.*`` tensors into frozen weights shaped for *config*."""
    d, hidden = config.width, config.mlp_hidden
    shapes = {
        "ln1_gain": (d,), "ln1_bias": (d,), "q_weight": (d, d), "q_bias": (d,),
        "k_weight": (d, d), "k_bias": (d,), "v_weight": (d, d), "v_bias": (d,),
        "out_weight": (d, d), "out_bias": (d,), "ln2_gain": (d,), "ln2_bias": (d,),
        "fc1_weight": (d, hidden), "fc1_bias": (hidden,), "fc2_weight": (hidden, d),
        "fc2_bias": (d,),
    }  # fmt: skip

    def fetch(name: str, shape: tuple[int, ...]) -> Tensor:
        if name not in tensors:
            raise FormatError(f"checkpoint is missing {name}")
        tensor = tensors[name]
        if tensor.shape != shape:
            raise ConfigError(f"{name} has shape {tensor.shape}, config expects {shape}")
        if tensor.requires_grad:
            logger.warning("%s is marked trainable in the checkpoint; loading it frozen", name)
        return Tensor(tensor.data, requires_grad=False, name=name, dtype=np.float32)

    blocks = []
    for i in range(config.depth):
        values = {
            attr: fetch(f"backbone.blocks.{i}.{attr}", shape) for attr, shape in shapes.items()
        }
        blocks.append(BlockWeights(heads=config.heads, **values))
    extra = [n for n in tensors if n.startswith(f"backbone.blocks.{config.depth}.")]
    if extra:
        raise ConfigError(f"checkpoint has more than {config.depth} blocks")
    return BackboneWeights(
        cls_token=fetch("backbone.cls_token", (d,)),
        pos_embed=fetch("backbone.pos_embed", (config.max_tokens, d)),
        blocks=blocks,
    )


def model_to_checkpoint(model: PointFormerModel) -> list[tuple[str, Tensor]]:
    """Every named tensor of *model*, frozen and trainable, in enumeration order."""
    return list(model.named_parameters())


def apply_checkpoint(model: PointFormerModel, tensors: Mapping[str, Tensor]) -> int:
    """Copy matching trainable tensors from *tensors* into *model*; returns how many.

    Frozen tensors are never overwritten here; use :func:`load_backbone` for those.
    """
    restored = 0
    for name, param in model.trainable_parameters():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing trainable tensor {name}")
        source = tensors[name]
        if source.shape != param.shape:
            raise ConfigError(f"{name} has shape {source.shape}, model expects {param.shape}")
        param.data = source.data.astype(param.data.dtype, copy=True)
        restored += 1
    logger.info("restored %d trainable tensors", restored)
    return restored
