"""Binary tensor files, checkpoint containers, and PNG previews.

Raw tensor layout (single tensor, extension ``.uvpt``):

    magic   4 bytes  b"UVPT"
    version u16 LE   (currently 1)
    dtype   u8       (1 = float32; the only supported tag)
    ndim    u8
    dims    ndim x u32 LE
    payload row-major float32 LE
    crc32   u32 LE over everything before it

Checkpoint container (extension ``.uvpc``): a JSON metadata block plus
named tensor entries, each entry stored in the raw layout above, followed
by a sha256 content hash. Deterministic byte-for-byte given the same
tensors and metadata.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC_TENSOR = b"UVPT"
MAGIC_CONTAINER = b"UVPC"
VERSION = 1
DTYPE_F32 = 1


class TensorFormatError(ValueError):
    pass


def tensor_to_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim > 255:
        raise TensorFormatError("too many dimensions")
    buf = io.BytesIO()
    buf.write(MAGIC_TENSOR)
    buf.write(struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim))
    for d in arr.shape:
        buf.write(struct.pack("<I", d))
    buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 12:
        raise TensorFormatError("truncated tensor blob")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise TensorFormatError("checksum mismatch")
    if body[:4] != MAGIC_TENSOR:
        raise TensorFormatError("bad magic")
    version, dtype, ndim = struct.unpack("<HBB", body[4:8])
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype tag {dtype}")
    off = 8
    dims = []
    for _ in range(ndim):
        dims.append(struct.unpack("<I", body[off:off + 4])[0])
        off += 4
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = body[off:]
    if len(payload) != count * 4:
        raise TensorFormatError(
            f"payload length {len(payload)} != product(dims)*4 = {count * 4}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def save_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def save_container(path, meta: dict, tensors: dict[str, np.ndarray]) -> str:
    """Write named tensors + metadata; returns the sha256 content hash."""
    buf = io.BytesIO()
    buf.write(MAGIC_CONTAINER)
    buf.write(struct.pack("<H", VERSION))
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        blob = tensor_to_bytes(tensors[name])
        buf.write(struct.pack("<Q", len(blob)))
        buf.write(blob)
    body = buf.getvalue()
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)
    return digest.hex()


def load_container(path) -> tuple[dict, dict[str, np.ndarray], str]:
    """Read a container; returns (meta, tensors, content_hash)."""
    blob = Path(path).read_bytes()
    if len(blob) < 42:
        raise TensorFormatError("truncated container")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise TensorFormatError("container hash mismatch")
    if body[:4] != MAGIC_CONTAINER:
        raise TensorFormatError("bad container magic")
    (version,) = struct.unpack("<H", body[4:6])
    if version != VERSION:
        raise TensorFormatError(f"unsupported container version {version}")
    off = 6
    (meta_len,) = struct.unpack("<I", body[off:off + 4])
    off += 4
    meta = json.loads(body[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack("<I", body[off:off + 4])
    off += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", body[off:off + 2])
        off += 2
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        (blob_len,) = struct.unpack("<Q", body[off:off + 8])
        off += 8
        tensors[name] = tensor_from_bytes(body[off:off + blob_len])
        off += blob_len
    return meta, tensors, digest.hex()


def save_png(path, grid) -> None:
    """8-bit PNG preview. Quantized; position maps should use save_tensor."""
    from PIL import Image

    unit = np.clip(grid.to_unit(), 0.0, 1.0)
    arr = np.round(unit * 255.0).astype(np.uint8)
    # rows are stored bottom-up in UV order; flip so v=0 lands at the image bottom
    arr = arr[::-1]
    if arr.shape[2] == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    img.save(Path(path), format="PNG")


def load_png(path, semantics: str = "rgb"):
    from PIL import Image

    from .grids import ImageGrid

    img = Image.open(Path(path))
    img = img.convert("L" if semantics == "mask" else "RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = arr[::-1]
    if semantics == "mask":
        arr = (arr >= 0.5).astype(np.float32)
    return ImageGrid.from_unit(arr, semantics)
