"""Thin bindings over the polaraug kernels for training-time data loaders.

Every function takes and returns contiguous little-endian float arrays
plus flat mappings (plain dicts) instead of package-specific classes, so
the surface stays version-stable for callers that marshal arrays across
process or language boundaries.

Conversion rules
    float64 C-contiguous input is used zero-copy; float32 (or
    non-contiguous) input incurs exactly one widening/copying conversion.
    Computation always runs in float64. ``bind_decompose`` narrows its
    outputs back to float32 when the input was float32 (round-to-nearest);
    the float64 path is bit-identical to the library and CLI outputs for
    the same seed.

Errors raised by the kernels (singular calibration, non-orthogonal
transforms, degenerate decompositions, malformed shapes) propagate as the
primary package's typed exceptions.
"""

from __future__ import annotations

import numpy as np

from polaraug import (
    AugmentPolicy,
    AugmentSpec,
    CalibrationPair,
    augment_mueller,
    azimuth_map,
    compute_mueller,
    decompose_image,
    embed_calibration,
    polar_transform,
    retardance_map,
    sample_spec,
)
from polaraug.errors import ShapeMismatchError

__version__ = "0.1.0"

__all__ = [
    "bind_augment",
    "bind_compute_mueller",
    "bind_decompose",
    "bind_embed_calibration",
    "bind_sample_spec",
]

_SPEC_KEYS = ("rotation_angle", "flip_h", "flip_v", "padding", "interpolation", "seed")


def _spec_from_mapping(spec: dict) -> AugmentSpec:
    unknown = set(spec) - set(_SPEC_KEYS)
    if unknown:
        raise ValueError(f"unknown spec keys: {sorted(unknown)}")
    return AugmentSpec(**spec)


def _as_float64(array, name: str) -> tuple[np.ndarray, np.dtype]:
    array = np.asarray(array)
    if array.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name} must be float32 or float64, got {array.dtype}")
    return np.ascontiguousarray(array, dtype=np.float64), array.dtype


def _as_mueller(array, name: str) -> tuple[np.ndarray, tuple, np.dtype]:
    data, dtype = _as_float64(array, name)
    shape = data.shape
    if data.ndim == 3 and data.shape[2] == 16:
        data = data.reshape(data.shape[0], data.shape[1], 4, 4)
    elif not (data.ndim == 4 and data.shape[2:] == (4, 4)):
        raise ShapeMismatchError(
            f"{name} must be (H,W,4,4) or (H,W,16), got {shape}"
        )
    return data, shape, dtype


def bind_augment(array, spec: dict):
    """Jointly transform a Mueller image given a flat spec mapping.

    ``spec`` keys: rotation_angle (radians), flip_h, flip_v, padding,
    interpolation, seed. Output has the caller's layout ((H,W,4,4) or
    (H,W,16)) in float64.
    """
    data, shape, _ = _as_mueller(array, "array")
    out = augment_mueller(data, _spec_from_mapping(spec))
    return out.reshape(shape)


def bind_decompose(array):
    """Azimuth and linear-retardance maps of a Mueller image.

    Returns two (H, W) arrays; pixels without defined azimuth carry NaN.
    Outputs are float32 when the input was float32, float64 otherwise.
    """
    data, _, dtype = _as_mueller(array, "array")
    dec = decompose_image(data)
    azi = azimuth_map(dec.retarder)
    ret = retardance_map(dec.retarder)
    if dtype == np.float32:
        return azi.astype(np.float32), ret.astype(np.float32)
    return azi, ret


def bind_compute_mueller(intensities, analyzer, modulator):
    """Per-pixel Mueller recovery from raw intensities and calibration."""
    b, shape, _ = _as_mueller(intensities, "intensities")
    a = _coerce_calibration(analyzer, "analyzer")
    w = _coerce_calibration(modulator, "modulator")
    out = compute_mueller(b, CalibrationPair(a, w))
    return out.reshape(shape)


def _coerce_calibration(array, name: str) -> np.ndarray:
    data, dtype = _as_float64(array, name)
    if data.shape == (4, 4):
        return data
    return _as_mueller(data, name)[0]


def bind_embed_calibration(analyzer, modulator, spec: dict):
    """Fold the spec's polarization transform into calibration arrays.

    Returns (analyzer', modulator') with the input layouts preserved.
    """
    a = _coerce_calibration(analyzer, "analyzer")
    w = _coerce_calibration(modulator, "modulator")
    new = embed_calibration(
        CalibrationPair(a, w), polar_transform(_spec_from_mapping(spec))
    )
    def restore(out, original):
        return out.reshape(np.asarray(original).shape)
    return restore(new.analyzer, analyzer), restore(new.modulator, modulator)


def bind_sample_spec(policy: dict, seed: int) -> dict:
    """Draw one augmentation spec from a policy mapping; returns a flat dict.

    ``policy`` keys mirror the sampling policy fields (p_rotation,
    p_flip_h, p_flip_v, theta_range, padding, interpolation); missing keys
    take the library defaults.
    """
    if "theta_range" in policy:
        policy = dict(policy, theta_range=tuple(policy["theta_range"]))
    spec = sample_spec(AugmentPolicy(**policy), seed)
    return {key: getattr(spec, key) for key in _SPEC_KEYS}
