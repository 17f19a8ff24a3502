"""PCT1 tensor files plus plain-text exports for inspection.

PCT1 layout: magic "PCT1", u32 rank, u32 dims[rank], u8 dtype code
(0 = f32, 1 = u8), all little-endian, then the row-major payload.
"""

import struct

import numpy as np

from .errors import DataError

_MAGIC = b"PCT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}


def _dtype_code(array):
    if array.dtype == np.uint8:
        return 1
    if np.issubdtype(array.dtype, np.floating):
        return 0
    raise DataError(f"PCT1 supports f32/u8 payloads, not {array.dtype}")


def to_bytes(array):
    array = np.ascontiguousarray(array)
    code = _dtype_code(array)
    header = _MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    header += struct.pack("<B", code)
    return header + array.astype(_DTYPES[code], copy=False).tobytes()


def from_bytes(buf, offset=0):
    """Decode one tensor; returns (array, next_offset)."""
    if buf[offset:offset + 4] != _MAGIC:
        raise DataError("not a PCT1 tensor (bad magic)")
    offset += 4
    (rank,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    (code,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    if code not in _DTYPES:
        raise DataError(f"unknown PCT1 dtype code {code}")
    dtype = _DTYPES[code]
    count = int(np.prod(dims)) if rank else 1
    end = offset + count * dtype.itemsize
    if end > len(buf):
        raise DataError("PCT1 payload truncated")
    array = np.frombuffer(buf[offset:end], dtype=dtype).reshape(dims).copy()
    return array, end


def write_pct1(path, array):
    with open(path, "wb") as fh:
        fh.write(to_bytes(array))


def read_pct1(path):
    with open(path, "rb") as fh:
        array, _ = from_bytes(fh.read())
    return array


def write_tensor_csv(tensor, prefix):
    """One CSV per channel (rows x cols of the descriptor), for inspection."""
    paths = []
    for c, name in enumerate(tensor.channel_names):
        path = f"{prefix}_{name}.csv"
        np.savetxt(path, tensor.data[:, :, c], delimiter=",", fmt="%.9g")
        paths.append(path)
    return paths


def write_pgm(path, channel):
    """ASCII portable graymap of one u8 channel."""
    channel = np.asarray(channel)
    h, w = channel.shape
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in channel)
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n{rows}\n")


def write_ppm(path, pixels):
    """ASCII portable pixmap of an H x W x 3 u8 image."""
    pixels = np.asarray(pixels)
    h, w, _ = pixels.shape
    lines = [" ".join(str(int(v)) for px in row for v in px) for row in pixels]
    with open(path, "w") as fh:
        fh.write(f"P3\n{w} {h}\n255\n" + "\n".join(lines) + "\n")
