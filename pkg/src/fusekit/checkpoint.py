"""Checkpoints as named-tensor maps, FCK file I/O, and vector arithmetic.

A checkpoint is an immutable, name-sorted map from tensor names to dense
float tensors. All in-memory arithmetic runs in float64; each tensor
remembers its storage dtype ("f32" or "f64") and is cast back to it only
when written to disk. Two checkpoints are *aligned* when they have the
same names and per-name identical shapes and storage dtypes; alignment is
what makes elementwise arithmetic (and therefore fusion) well defined.

FCK on-disk layout (all little-endian, no padding):

    magic "FCK1" | u32 version=1 | u32 tensor_count
    per tensor, in sorted-name order:
        u16 name_len | name (UTF-8) | u8 dtype (0=f32, 1=f64)
        | u8 rank | rank x u64 dims | raw row-major element bytes
    u32 meta_count
    per meta entry: u16 key_len | key | u32 val_len | val
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import AlignmentError, FormatError, IoError

MAGIC = b"FCK1"
VERSION = 1

# Storage dtype tags and their FCK codes / numpy equivalents.
_DTYPE_CODE = {"f32": 0, "f64": 1}
_CODE_DTYPE = {0: "f32", 1: "f64"}
_NUMPY_DTYPE = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

# Meta key that survives arithmetic (identifies the parameter layout).
ARCH_KEY = "arch"


@dataclass(frozen=True)
class Tensor:
    """One named tensor: float64 working data plus its storage dtype."""

    data: np.ndarray
    dtype: str = "f64"

    def __post_init__(self) -> None:
        if self.dtype not in _DTYPE_CODE:
            raise ValueError(f"unknown storage dtype {self.dtype!r}")
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim > 0 and min(arr.shape) < 1:
            raise ValueError(f"tensor dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        arr = arr.copy() if arr is self.data else arr
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def storage_bytes(self) -> bytes:
        """Row-major element bytes in the storage dtype."""
        return self.data.astype(_NUMPY_DTYPE[self.dtype]).tobytes(order="C")


class Checkpoint:
    """Immutable sorted map of tensor names to tensors, plus advisory meta.

    Meta entries (string to string) never participate in arithmetic; the
    conventional keys are "arch", "task", "train_size", and "seed".
    """

    __slots__ = ("_tensors", "_meta")

    def __init__(
        self,
        tensors: Mapping[str, Tensor],
        meta: Mapping[str, str] | None = None,
    ) -> None:
        items: dict[str, Tensor] = {}
        for name in sorted(tensors):
            if not name:
                raise ValueError("tensor names must be non-empty")
            items[name] = tensors[name]
        self._tensors = items
        self._meta = {str(k): str(v) for k, v in (meta or {}).items()}

    @classmethod
    def from_arrays(
        cls,
        arrays: Mapping[str, np.ndarray],
        meta: Mapping[str, str] | None = None,
        dtype: str = "f64",
    ) -> "Checkpoint":
        return cls({n: Tensor(np.asarray(a), dtype) for n, a in arrays.items()}, meta)

    @property
    def tensors(self) -> Mapping[str, Tensor]:
        return self._tensors

    @property
    def meta(self) -> Mapping[str, str]:
        return self._meta

    def names(self) -> list[str]:
        return list(self._tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        """Float64 working data for one tensor."""
        return self._tensors[name].data

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def num_elements(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def aligned_with(self, other: "Checkpoint") -> bool:
        if self.names() != other.names():
            return False
        return all(
            a.shape == b.shape and a.dtype == b.dtype
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )

    def replace_meta(self, meta: Mapping[str, str]) -> "Checkpoint":
        return Checkpoint(self._tensors, meta)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        if self.names() != other.names() or self._meta != other._meta:
            return False
        return all(
            a.dtype == b.dtype
            and a.shape == b.shape
            and a.data.tobytes() == b.data.tobytes()
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )

    def __repr__(self) -> str:
        shapes = {n: t.shape for n, t in self._tensors.items()}
        return f"Checkpoint({shapes}, meta={self._meta})"


def _require_aligned(a: Checkpoint, b: Checkpoint, op: str) -> None:
    if not a.aligned_with(b):
        raise AlignmentError(f"{op}: checkpoints are not aligned")


def _carry_arch(*ckpts: Checkpoint) -> dict[str, str]:
    for c in ckpts:
        if ARCH_KEY in c.meta:
            return {ARCH_KEY: c.meta[ARCH_KEY]}
    return {}


def zero_like(ckpt: Checkpoint) -> Checkpoint:
    """All-zeros checkpoint aligned with ``ckpt`` (meta reduced to arch)."""
    tensors = {
        n: Tensor(np.zeros(t.shape), t.dtype) for n, t in ckpt.tensors.items()
    }
    return Checkpoint(tensors, _carry_arch(ckpt))


def axpy(alpha: float, a: Checkpoint, b: Checkpoint) -> Checkpoint:
    """Elementwise ``alpha * a + b`` over aligned checkpoints."""
    _require_aligned(a, b, "axpy")
    tensors = {
        n: Tensor(alpha * ta.data + b.tensors[n].data, ta.dtype)
        for n, ta in a.tensors.items()
    }
    return Checkpoint(tensors, _carry_arch(a, b))


def scale(alpha: float, a: Checkpoint) -> Checkpoint:
    """Elementwise ``alpha * a``."""
    return axpy(alpha, a, zero_like(a))


def l2_distance(a: Checkpoint, b: Checkpoint) -> float:
    """Euclidean distance between two aligned checkpoints, over all tensors."""
    _require_aligned(a, b, "l2_distance")
    total = 0.0
    for n, ta in a.tensors.items():
        diff = ta.data - b.tensors[n].data
        total += float(np.dot(diff.ravel(), diff.ravel()))
    return math.sqrt(total)


def l2_norm(ckpt: Checkpoint) -> float:
    """Euclidean norm of all elements (distance from the zero checkpoint)."""
    total = 0.0
    for t in ckpt.tensors.values():
        flat = t.data.ravel()
        total += float(np.dot(flat, flat))
    return math.sqrt(total)


def serialize_checkpoint(ckpt: Checkpoint) -> bytes:
    """Canonical FCK byte encoding of a checkpoint."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(ckpt.tensors))
    for name, tensor in ckpt.tensors.items():
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ValueError(f"tensor name too long: {len(name_bytes)} bytes")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<BB", _DTYPE_CODE[tensor.dtype], tensor.data.ndim)
        out += struct.pack(f"<{tensor.data.ndim}Q", *tensor.data.shape)
        out += tensor.storage_bytes()
    out += struct.pack("<I", len(ckpt.meta))
    for key, val in ckpt.meta.items():
        key_bytes = key.encode("utf-8")
        val_bytes = val.encode("utf-8")
        out += struct.pack("<H", len(key_bytes))
        out += key_bytes
        out += struct.pack("<I", len(val_bytes))
        out += val_bytes
    return bytes(out)


class _Reader:
    """Cursor over a byte buffer that raises FormatError on truncation."""

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated file: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self, n: int, what: str) -> str:
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{what} is not valid UTF-8") from exc


def deserialize_checkpoint(buf: bytes) -> Checkpoint:
    """Decode FCK bytes, validating structure and invariants."""
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic (not an FCK file)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (tensor_count,) = r.unpack("<I")
    tensors: dict[str, Tensor] = {}
    for _ in range(tensor_count):
        (name_len,) = r.unpack("<H")
        name = r.text(name_len, "tensor name")
        if not name:
            raise FormatError("empty tensor name")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        code, rank = r.unpack("<BB")
        if code not in _CODE_DTYPE:
            raise FormatError(f"unknown dtype code {code} for tensor {name!r}")
        dtype = _CODE_DTYPE[code]
        dims = r.unpack(f"<{rank}Q") if rank else ()
        if any(d < 1 for d in dims):
            raise FormatError(f"tensor {name!r} has dimension < 1")
        count = 1
        for d in dims:
            count *= d
        np_dtype = _NUMPY_DTYPE[dtype]
        raw = r.take(count * np_dtype.itemsize)
        data = np.frombuffer(raw, dtype=np_dtype, count=count).reshape(dims)
        if not np.all(np.isfinite(data)):
            raise FormatError(f"tensor {name!r} contains non-finite values")
        tensors[name] = Tensor(data.astype(np.float64), dtype)
    (meta_count,) = r.unpack("<I")
    meta: dict[str, str] = {}
    for _ in range(meta_count):
        (key_len,) = r.unpack("<H")
        key = r.text(key_len, "meta key")
        if key in meta:
            raise FormatError(f"duplicate meta key {key!r}")
        (val_len,) = r.unpack("<I")
        meta[key] = r.text(val_len, "meta value")
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after meta")
    return Checkpoint(tensors, meta)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write ``ckpt`` to ``path`` in FCK format."""
    buf = serialize_checkpoint(ckpt)
    try:
        with open(path, "wb") as fh:
            fh.write(buf)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    """Read an FCK file; FormatError on malformed content, IoError on I/O."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return deserialize_checkpoint(buf)
