"""Binary dataset and checkpoint files.

Both share a little-endian header::

    magic[4]  version:u16  mode:u8  count:u32  H:u16  W:u16  C:u16

Datasets (magic ``FGL1``) follow with ``count`` records of
``label:u8 variant:u8`` plus H*W*C float32 values.  Checkpoints (magic
``FGC1``) store the network input shape in H/W/C, a length-prefixed text line
describing the architecture, then ``count`` named float64 tensors:
``name_len:u16 name ndim:u8 dims:u32*ndim values``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dsp import Mode
from ..nn import Network, NetworkSpec

HEADER = struct.Struct("<4sHBIHHH")
DATASET_MAGIC = b"FGL1"
CHECKPOINT_MAGIC = b"FGC1"
VERSION = 1


class FormatError(ValueError):
    """A file is truncated, has the wrong magic/version or inconsistent content."""


@dataclass
class Dataset:
    mode: Mode
    images: np.ndarray        # float32 [N, H, W, C]
    labels: np.ndarray        # uint8 [N]
    variants: np.ndarray      # uint8 [N]

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.variants = np.asarray(self.variants, dtype=np.uint8)
        if self.images.ndim != 4:
            raise FormatError("dataset images must be [N, H, W, C]")
        if not len(self.images) == len(self.labels) == len(self.variants):
            raise FormatError("dataset arrays have different lengths")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, mask) -> "Dataset":
        return Dataset(self.mode, self.images[mask], self.labels[mask], self.variants[mask])


def _header(magic, mode, count, shape) -> bytes:
    h, w, c = shape
    return HEADER.pack(magic, VERSION, int(mode), int(count), int(h), int(w), int(c))


def _read_header(buf: bytes, magic: bytes):
    if len(buf) < HEADER.size:
        raise FormatError("file too short for header")
    got, version, mode, count, h, w, c = HEADER.unpack_from(buf, 0)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    try:
        mode = Mode(mode)
    except ValueError:
        raise FormatError(f"unknown mode byte {mode}") from None
    return mode, count, (h, w, c)


def encode_dataset(ds: Dataset) -> bytes:
    n = len(ds)
    rec = np.dtype([("label", "u1"), ("variant", "u1"), ("x", "<f4", ds.shape)])
    arr = np.empty(n, dtype=rec)
    arr["label"] = ds.labels
    arr["variant"] = ds.variants
    arr["x"] = ds.images
    return _header(DATASET_MAGIC, ds.mode, n, ds.shape) + arr.tobytes()


def decode_dataset(buf: bytes) -> Dataset:
    mode, n, shape = _read_header(buf, DATASET_MAGIC)
    rec = np.dtype([("label", "u1"), ("variant", "u1"), ("x", "<f4", shape)])
    body = len(buf) - HEADER.size
    if body != n * rec.itemsize:
        raise FormatError(f"dataset body is {body} bytes, expected {n * rec.itemsize}")
    arr = np.frombuffer(buf, dtype=rec, count=n, offset=HEADER.size)
    return Dataset(mode, arr["x"].astype(np.float32), arr["label"].copy(), arr["variant"].copy())


def write_dataset(ds: Dataset, path) -> str:
    """Write ``ds`` and return the sha256 of the bytes written."""
    data = encode_dataset(ds)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_dataset(path) -> Dataset:
    return decode_dataset(Path(path).read_bytes())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _spec_line(spec: NetworkSpec) -> str:
    kh, kw = spec.kernel
    pool = "none" if not spec.pool else f"{spec.pool[0]}x{spec.pool[1]}"
    return f"conv_blocks={spec.conv_blocks} filters={spec.filters} kernel={kh}x{kw} pool={pool}"


def _parse_spec_line(line: str, shape) -> NetworkSpec:
    try:
        fields = dict(item.split("=", 1) for item in line.split())
        kernel = tuple(int(v) for v in fields["kernel"].split("x"))
        pool = None if fields["pool"] == "none" else tuple(int(v) for v in fields["pool"].split("x"))
        return NetworkSpec(input_shape=tuple(shape), conv_blocks=int(fields["conv_blocks"]),
                           filters=int(fields["filters"]), kernel=kernel, pool=pool)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad architecture line {line!r}: {exc}") from None


def encode_checkpoint(model: Network, mode: Mode) -> bytes:
    spec = model.spec
    names = list(spec.param_shapes())
    line = _spec_line(spec).encode("ascii")
    parts = [_header(CHECKPOINT_MAGIC, mode, len(names), spec.input_shape),
             struct.pack("<H", len(line)), line]
    for name in names:
        t = np.ascontiguousarray(model.params[name], dtype="<f8")
        raw = name.encode("ascii")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(t.tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes):
    """Returns (Network, Mode)."""
    mode, count, shape = _read_header(buf, CHECKPOINT_MAGIC)
    off = HEADER.size
    try:
        (n,) = struct.unpack_from("<H", buf, off)
        off += 2
        spec = _parse_spec_line(buf[off:off + n].decode("ascii"), shape)
        off += n
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + n].decode("ascii")
            off += n
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(dims)) if ndim else 1
            if off + 8 * size > len(buf):
                raise FormatError(f"tensor {name} truncated")
            params[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims).copy()
            off += 8 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}") from None
    if off != len(buf):
        raise FormatError("trailing bytes after checkpoint tensors")
    try:
        return Network(spec, params), mode
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_checkpoint(model: Network, mode: Mode, path) -> str:
    data = encode_checkpoint(model, mode)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
