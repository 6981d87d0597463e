"""
Binary map files, PNG visualization and metadata sidecars.

All three binary formats share a 16-byte little-endian header::

    magic[4]  version:u32  width:u32  height:u32

followed by a row-major payload:

    ODPH  width*height float32 depths in meters; non-finite = no return
    OSEG  width*height uint16 object ids; 0 = background
    OLBL  planes:u32 (always 3), then three float32 planes in the order
          score, pitch (deg), yaw (deg); unlabelled pixels are quiet NaN

Decoders raise :class:`FormatError` on anything that does not match exactly.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import FormatError

VERSION = 1
HEADER = struct.Struct("<4sIII")
DEPTH_MAGIC = b"ODPH"
SEG_MAGIC = b"OSEG"
LABEL_MAGIC = b"OLBL"
QUIET_NAN = np.frombuffer(struct.pack("<I", 0x7FC00000), dtype="<f4")[0]


def _header(magic: bytes, arr: np.ndarray) -> bytes:
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise FormatError("expected a nonempty 2D map")
    h, w = arr.shape
    return HEADER.pack(magic, VERSION, w, h)


def _read_header(data: bytes, magic: bytes):
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise FormatError("expected bytes")
    data = bytes(data)
    if len(data) < HEADER.size:
        raise FormatError("truncated header")
    m, version, w, h = HEADER.unpack_from(data)
    if m != magic:
        raise FormatError(f"bad magic {m!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if w == 0 or h == 0:
        raise FormatError("zero-sized map")
    return data, w, h


def encode_depth(depth) -> bytes:
    arr = np.asarray(depth)
    head = _header(DEPTH_MAGIC, arr)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_depth(data: bytes) -> np.ndarray:
    data, w, h = _read_header(data, DEPTH_MAGIC)
    if len(data) != HEADER.size + 4 * w * h:
        raise FormatError("payload length does not match header")
    arr = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(h, w).astype(np.float32)
    fin = np.isfinite(arr)
    if np.any(arr[fin] <= 0):
        raise FormatError("finite depths must be positive")
    return arr


def encode_seg(seg) -> bytes:
    arr = np.asarray(seg)
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
        raise FormatError("segmentation ids must fit in uint16")
    head = _header(SEG_MAGIC, arr)
    return head + np.ascontiguousarray(arr, dtype="<u2").tobytes()


def decode_seg(data: bytes) -> np.ndarray:
    data, w, h = _read_header(data, SEG_MAGIC)
    if len(data) != HEADER.size + 2 * w * h:
        raise FormatError("payload length does not match header")
    return np.frombuffer(data, dtype="<u2", offset=HEADER.size).reshape(h, w).astype(np.uint16)


def encode_labels(planes) -> bytes:
    """Encode a (3, H, W) stack or an object with ``planes()``; NaN stays the quiet NaN."""
    if hasattr(planes, "planes"):
        planes = planes.planes()
    arr = np.asarray(planes, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise FormatError("labels must be a (3, H, W) stack")
    invalid = ~np.all(np.isfinite(arr), axis=0)
    out = arr.astype("<f4")
    out[:, invalid] = QUIET_NAN
    head = _header(LABEL_MAGIC, arr[0])
    return head + struct.pack("<I", 3) + np.ascontiguousarray(out).tobytes()


def decode_labels(data: bytes) -> np.ndarray:
    """Decode to a float32 (3, H, W) stack."""
    data, w, h = _read_header(data, LABEL_MAGIC)
    if len(data) < HEADER.size + 4:
        raise FormatError("truncated plane count")
    (planes,) = struct.unpack_from("<I", data, HEADER.size)
    if planes != 3:
        raise FormatError(f"expected 3 planes, found {planes}")
    if len(data) != HEADER.size + 4 + 12 * w * h:
        raise FormatError("payload length does not match header")
    arr = np.frombuffer(data, dtype="<f4", offset=HEADER.size + 4).reshape(3, h, w).astype(np.float32)
    fin = np.isfinite(arr)
    if np.any(fin.any(axis=0) != fin.all(axis=0)):
        raise FormatError("label planes disagree on which pixels are valid")
    angles = arr[1:][fin[1:]]
    if np.any(np.abs(angles) > 30.0):
        raise FormatError("label angles outside [-30, 30] degrees")
    return arr


def write_bytes(path, data: bytes):
    with open(path, "wb") as fh:
        fh.write(data)


def read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def write_meta(path, fields: dict):
    """Write ``<path>.meta``: one ``key = value`` line per field, keys sorted."""
    from . import __version__
    items = {"tool_version": __version__, **fields}
    with open(f"{path}.meta", "w") as fh:
        for k in sorted(items):
            fh.write(f"{k} = {items[k]}\n")


def read_meta(path) -> dict:
    out = {}
    with open(f"{path}.meta") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# visualization
# ---------------------------------------------------------------------------

def colorize(values, vmin: float, vmax: float) -> np.ndarray:
    """Blue-to-red RGB (H, W, 3) uint8; channel = round-half-up(255 * t), NaN -> black."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or v.ndim != 2:
        raise FormatError("expected a nonempty 2D map")
    if not (np.isfinite(vmin) and np.isfinite(vmax) and vmin < vmax):
        raise FormatError("range must be finite with min < max")
    t = np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0)
    red = np.floor(255.0 * t + 0.5)
    blue = np.floor(255.0 * (1.0 - t) + 0.5)
    rgb = np.stack([red, np.zeros_like(red), blue], axis=-1)
    rgb[~np.isfinite(v)] = 0
    return rgb.astype(np.uint8)


def viz_png(values, vmin: float, vmax: float) -> bytes:
    """PNG bytes of :func:`colorize`."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(colorize(values, vmin, vmax), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
