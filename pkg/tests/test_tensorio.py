import struct

import numpy as np
import pytest

from uvtex import tensorio
from uvtex.grids import ImageGrid


def test_tensor_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(3,), (4, 5), (2, 3, 4), (1, 2, 3, 4)]:
        arr = rng.normal(size=shape).astype(np.float32)
        p = tmp_path / "t.uvpt"
        tensorio.save_tensor(p, arr)
        back = tensorio.load_tensor(p)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)


def test_tensor_header_layout():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = tensorio.tensor_to_bytes(arr)
    assert blob[:4] == b"UVPT"
    version, dtype, ndim = struct.unpack("<HBB", blob[4:8])
    assert (version, dtype, ndim) == (1, 1, 2)
    dims = struct.unpack("<II", blob[8:16])
    assert dims == (2, 3)
    assert len(blob) == 16 + 6 * 4 + 4  # header + payload + crc


def test_tensor_checksum_detects_corruption(tmp_path):
    arr = np.ones((4, 4), dtype=np.float32)
    p = tmp_path / "t.uvpt"
    tensorio.save_tensor(p, arr)
    raw = bytearray(p.read_bytes())
    raw[20] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.load_tensor(p)


def test_tensor_truncation_detected(tmp_path):
    arr = np.ones((4, 4), dtype=np.float32)
    blob = tensorio.tensor_to_bytes(arr)
    # drop payload bytes but keep a recomputed checksum
    import zlib
    body = blob[:-8]
    bad = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.tensor_from_bytes(bad)


def test_container_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a.weight": rng.normal(size=(3, 3)).astype(np.float32),
               "b.bias": rng.normal(size=(7,)).astype(np.float32)}
    meta = {"kind": "test", "step": 12}
    p = tmp_path / "c.uvpc"
    digest = tensorio.save_container(p, meta, tensors)
    meta2, tensors2, digest2 = tensorio.load_container(p)
    assert meta2 == meta
    assert digest2 == digest
    assert set(tensors2) == set(tensors)
    for k in tensors:
        assert np.array_equal(tensors2[k], tensors[k])


def test_container_deterministic_bytes(tmp_path):
    tensors = {"w": np.ones((2, 2), dtype=np.float32)}
    p1, p2 = tmp_path / "a.uvpc", tmp_path / "b.uvpc"
    tensorio.save_container(p1, {"x": 1}, tensors)
    tensorio.save_container(p2, {"x": 1}, tensors)
    assert p1.read_bytes() == p2.read_bytes()


def test_container_hash_mismatch(tmp_path):
    p = tmp_path / "c.uvpc"
    tensorio.save_container(p, {}, {"w": np.zeros(3, dtype=np.float32)})
    raw = bytearray(p.read_bytes())
    raw[10] ^= 0x01
    p.write_bytes(bytes(raw))
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.load_container(p)


def test_png_roundtrip_quantized(tmp_path):
    rng = np.random.default_rng(2)
    grid = ImageGrid(rng.random((16, 16, 3), dtype=np.float32), "rgb")
    p = tmp_path / "img.png"
    tensorio.save_png(p, grid)
    back = tensorio.load_png(p, "rgb")
    assert back.data.shape == grid.data.shape
    assert np.abs(back.data - grid.data).max() <= 0.5 / 255 + 1e-6


def test_png_deterministic(tmp_path):
    grid = ImageGrid.constant(8, 8, (0.2, 0.4, 0.6), "rgb")
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    tensorio.save_png(p1, grid)
    tensorio.save_png(p2, grid)
    assert p1.read_bytes() == p2.read_bytes()
