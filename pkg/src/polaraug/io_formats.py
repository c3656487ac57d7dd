"""Array file I/O (NPY interop, native MMPI container) and PNG rendering.

Both readers enforce little-endian f4/f8 in C order and widen everything
to float64; writers emit float64. Round-trips are bit-exact. Malformed
input raises typed ``FormatError`` subclasses, never a bare exception.

Accepted array shapes are (H, W, 4, 4) and (H, W, 16) for Mueller-like
stacks, (H, W) for scalar maps, and (4, 4) for a global calibration
matrix; an (H, W, 16) stack unflattens row-major to 4x4 blocks.
"""

from __future__ import annotations

import ast
import math
import struct
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb
from matplotlib.image import imsave

from .errors import (
    BadMagicError,
    FormatError,
    FortranOrderUnsupportedError,
    ShapeMismatchError,
    UnsupportedDtypeError,
    VersionUnsupportedError,
)
from .transforms import CalibrationPair

NPY_MAGIC = b"\x93NUMPY"
MMPI_MAGIC = b"MMPI"
MMPI_VERSION = 1
_MMPI_HEADER = struct.Struct("<4sHIIIB7x")
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_MMPI_CODES = {4: "<f4", 8: "<f8"}


@dataclass(frozen=True)
class ArrayHeader:
    dtype: str  # "f4" or "f8" as stored on disk
    shape: tuple
    fortran_order: bool = False


def _check_shape(shape: tuple) -> None:
    ok = (
        (len(shape) == 2)
        or (len(shape) == 3 and shape[2] == 16)
        or (len(shape) == 4 and shape[2:] == (4, 4))
    ) and all(int(n) >= 1 for n in shape)
    if not ok:
        raise ShapeMismatchError(
            f"shape {shape} is not one of (H,W), (H,W,16), (H,W,4,4) with positive dims"
        )


def read_npy(path) -> tuple[np.ndarray, ArrayHeader]:
    """Read an NPY v1.0/v2.0 file; returns a float64 C-order array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:6] != NPY_MAGIC:
        raise BadMagicError(f"{path}: not an NPY file")
    if len(raw) < 10:
        raise FormatError(f"{path}: truncated NPY header")
    major, minor = raw[6], raw[7]
    if (major, minor) == (1, 0):
        (header_len,) = struct.unpack_from("<H", raw, 8)
        start = 10
    elif (major, minor) == (2, 0):
        (header_len,) = struct.unpack_from("<I", raw, 8)
        start = 12
    else:
        raise VersionUnsupportedError(f"{path}: NPY version {major}.{minor} unsupported")
    header_text = raw[start : start + header_len].decode("latin1")
    try:
        header = ast.literal_eval(header_text)
        descr = header["descr"]
        fortran_order = header["fortran_order"]
        shape = tuple(int(n) for n in header["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unparseable NPY header: {exc}") from exc
    if fortran_order:
        raise FortranOrderUnsupportedError(f"{path}: Fortran-order arrays unsupported")
    if descr not in _DTYPES:
        raise UnsupportedDtypeError(
            f"{path}: dtype {descr!r} unsupported (need little-endian f4/f8)"
        )
    _check_shape(shape)
    dtype = _DTYPES[descr]
    payload = raw[start + header_len :]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise ShapeMismatchError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return np.ascontiguousarray(array, dtype=np.float64), ArrayHeader(
        dtype=descr[1:], shape=shape, fortran_order=False
    )


def write_npy(path, array) -> None:
    """Write a float64 little-endian C-order NPY v1.0 file.

    The header is space-padded so the payload starts on a 64-byte
    boundary; read_npy(write_npy(x)) round-trips bit-exactly.
    """
    array = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    _check_shape(array.shape)
    header = (
        "{'descr': '<f8', 'fortran_order': False, "
        f"'shape': {array.shape!r}, }}"
    )
    base_len = len(NPY_MAGIC) + 2 + 2 + len(header) + 1
    pad = (64 - base_len % 64) % 64
    header_bytes = (header + " " * pad + "\n").encode("latin1")
    with open(path, "wb") as fh:
        fh.write(NPY_MAGIC)
        fh.write(bytes((1, 0)))
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(array.tobytes())


@dataclass(frozen=True)
class MmpiHeader:
    version: int
    height: int
    width: int
    channels: int
    dtype: str  # "f4" or "f8" as stored on disk


def write_mmpi(path, payload) -> None:
    """Write an (H, W, C) stack into the MMPI container (C in {1, 16, 48})."""
    payload = np.asarray(payload)
    if payload.ndim == 2:
        payload = payload[:, :, None]
    if payload.ndim != 3 or payload.shape[2] not in (1, 16, 48):
        raise ShapeMismatchError(
            f"MMPI payload must be (H,W,C) with C in 1/16/48, got {payload.shape}"
        )
    dtype = np.dtype("<f4") if payload.dtype == np.float32 else np.dtype("<f8")
    payload = np.ascontiguousarray(payload, dtype=dtype)
    h, w, c = payload.shape
    with open(path, "wb") as fh:
        fh.write(_MMPI_HEADER.pack(MMPI_MAGIC, MMPI_VERSION, h, w, c, dtype.itemsize))
        fh.write(payload.tobytes())


def read_mmpi(path) -> tuple[np.ndarray, MmpiHeader]:
    """Read an MMPI container; returns a float64 (H, W, C) array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MMPI_MAGIC:
        raise BadMagicError(f"{path}: not an MMPI file")
    if len(raw) < _MMPI_HEADER.size:
        raise FormatError(f"{path}: truncated MMPI header")
    magic, version, h, w, c, code = _MMPI_HEADER.unpack_from(raw, 0)
    if version != MMPI_VERSION:
        raise VersionUnsupportedError(f"{path}: MMPI version {version} unsupported")
    if c not in (1, 16, 48):
        raise ShapeMismatchError(f"{path}: channel count {c} not in 1/16/48")
    if code not in _MMPI_CODES:
        raise UnsupportedDtypeError(f"{path}: dtype code {code} unsupported")
    dtype = np.dtype(_MMPI_CODES[code])
    payload = raw[_MMPI_HEADER.size :]
    expected = h * w * c * dtype.itemsize
    if len(payload) != expected:
        raise ShapeMismatchError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(h, w, c)
    header = MmpiHeader(version=version, height=h, width=w, channels=c,
                        dtype=f"f{dtype.itemsize}")
    return np.ascontiguousarray(array, dtype=np.float64), header


def _check_finite(array: np.ndarray, label: str) -> np.ndarray:
    if not np.isfinite(array).all():
        n_bad = int(np.count_nonzero(~np.isfinite(array)))
        raise FormatError(f"{label} contains {n_bad} non-finite entries")
    return array


def mueller_from_array(array: np.ndarray) -> np.ndarray:
    """Coerce an accepted Mueller-like array into finite (H, W, 4, 4)."""
    if array.ndim == 3 and array.shape[2] == 16:
        out = np.ascontiguousarray(array.reshape(array.shape[0], array.shape[1], 4, 4))
    elif array.ndim == 4 and array.shape[2:] == (4, 4):
        out = np.ascontiguousarray(array)
    else:
        raise ShapeMismatchError(f"expected (H,W,4,4) or (H,W,16), got {array.shape}")
    return _check_finite(out, "matrix stack")


def load_mueller(path) -> np.ndarray:
    """Load a Mueller image from .npy or .mmpi (by extension)."""
    path = str(path)
    if path.endswith(".mmpi"):
        array, header = read_mmpi(path)
        if header.channels != 16:
            raise ShapeMismatchError(f"{path}: expected 16 channels, got {header.channels}")
        return mueller_from_array(array)
    array, _ = read_npy(path)
    return mueller_from_array(array)


def save_mueller(path, img: np.ndarray) -> None:
    path = str(path)
    if path.endswith(".mmpi"):
        write_mmpi(path, img.reshape(img.shape[0], img.shape[1], 16))
    else:
        write_npy(path, img)


def load_map(path) -> np.ndarray:
    """Load a scalar (H, W) map from .npy or a 1-channel .mmpi."""
    path = str(path)
    if path.endswith(".mmpi"):
        array, header = read_mmpi(path)
        if header.channels != 1:
            raise ShapeMismatchError(f"{path}: expected 1 channel, got {header.channels}")
        return array[:, :, 0]
    array, _ = read_npy(path)
    if array.ndim != 2:
        raise ShapeMismatchError(f"{path}: expected a 2-D map, got shape {array.shape}")
    return array


def load_calibration_matrix(path) -> np.ndarray:
    """Load an analyzer/modulator array: (4,4) global or (H,W,4,4)/(H,W,16)."""
    array, _ = read_npy(str(path))
    if array.shape == (4, 4):
        return _check_finite(array, "calibration matrix")
    return mueller_from_array(array)


def save_calibration_bundle(path, intensities, cal: CalibrationPair) -> None:
    """Write a 48-channel MMPI bundle: analyzer | intensities | modulator."""
    h, w = intensities.shape[:2]

    def plane(m):
        if m.ndim == 2:
            m = np.broadcast_to(m, (h, w, 4, 4))
        return m.reshape(h, w, 16)

    stacked = np.concatenate(
        [plane(cal.analyzer), intensities.reshape(h, w, 16), plane(cal.modulator)], axis=2
    )
    write_mmpi(path, stacked)


def load_calibration_bundle(path) -> tuple[np.ndarray, CalibrationPair]:
    """Read a 48-channel MMPI bundle back into (intensities, calibration)."""
    array, header = read_mmpi(str(path))
    if header.channels != 48:
        raise ShapeMismatchError(f"{path}: expected 48 channels, got {header.channels}")
    h, w = array.shape[:2]
    _check_finite(array, "calibration bundle")
    a = array[:, :, 0:16].reshape(h, w, 4, 4)
    b = array[:, :, 16:32].reshape(h, w, 4, 4)
    m = array[:, :, 32:48].reshape(h, w, 4, 4)
    return np.ascontiguousarray(b), CalibrationPair(a, m)


def render_azimuth_png(azimuth_values, mask, path) -> None:
    """Render an azimuth map to an 8-bit RGB PNG of identical dimensions.

    Hue runs twice around the circle per pi of azimuth so 0 and pi share
    a color (cyclic continuity). Masked and NaN pixels render black.
    """
    values = np.asarray(azimuth_values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatchError(f"azimuth map must be 2-D, got shape {values.shape}")
    invalid = ~np.isfinite(values)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ShapeMismatchError("mask dimensions do not match the azimuth map")
        invalid |= ~mask
    hue = np.mod(np.where(invalid, 0.0, values), math.pi) / math.pi
    hsv = np.stack([hue, np.ones_like(hue), np.ones_like(hue)], axis=-1)
    rgb = hsv_to_rgb(hsv)
    rgb[invalid] = 0.0
    imsave(str(path), (np.round(rgb * 255.0)).astype(np.uint8), format="png")
