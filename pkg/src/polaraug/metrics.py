"""Azimuth-map comparison metrics, retardance masking, and admissibility
aggregation.

Two azimuth distances are provided side by side. ``cyclic_mae`` applies
the reflection variant min(|pi - a - g|, |a - g|), kept verbatim for
fidelity with the reference protocol; ``wrapped_mae`` is the standard
circular distance min(|d|, pi - |d|). The two disagree on some inputs,
so both are reported wherever one is.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .decompose import ADMISSIBILITY_TOL, is_admissible
from .errors import EmptyMaskError
from .linalg import as_f64
from .transforms import _rng


def _valid_pixels(pred, gt, mask):
    pred = as_f64(pred)
    gt = as_f64(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"map shapes differ: {pred.shape} vs {gt.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} does not match maps {pred.shape}")
    finite = np.isfinite(pred) & np.isfinite(gt)
    valid = mask & finite
    n_nan_excluded = int(np.count_nonzero(mask) - np.count_nonzero(valid))
    if not valid.any():
        raise EmptyMaskError("no valid pixels under the mask")
    return pred[valid], gt[valid], n_nan_excluded


def cyclic_mae(pred, gt, mask=None) -> float:
    """Reflection-based cyclic mean absolute azimuth error, in radians.

    Per pixel: min(|(pi - a) - g|, |a - g|). NaN pixels are excluded
    from the mean (see :func:`compare_azimuth_maps` for the count).
    """
    a, g, _ = _valid_pixels(pred, gt, mask)
    return float(np.mean(np.minimum(np.abs((math.pi - a) - g), np.abs(a - g))))


def wrapped_mae(pred, gt, mask=None) -> float:
    """Standard circular mean absolute azimuth error on [0, pi), in radians."""
    a, g, _ = _valid_pixels(pred, gt, mask)
    d = np.abs(a - g)
    return float(np.mean(np.minimum(d, math.pi - d)))


def compare_azimuth_maps(pred, gt, mask=None) -> dict:
    """Both azimuth metrics plus pixel accounting, for report output."""
    a, g, n_nan = _valid_pixels(pred, gt, mask)
    d = np.abs(a - g)
    return {
        "mae_cyclic_rad": float(np.mean(np.minimum(np.abs((math.pi - a) - g), d))),
        "mae_wrapped_rad": float(np.mean(np.minimum(d, math.pi - d))),
        "n_used": int(a.size),
        "n_nan_excluded": n_nan,
    }


def retardance_mask(retardance_values, percentile: float = 75.0) -> np.ndarray:
    """Keep-high-retardance mask: true where the value reaches the given
    percentile threshold (linear interpolation between order statistics).

    NaN retardance pixels are excluded from the threshold computation and
    are always masked out.
    """
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must be in [0, 100]")
    values = as_f64(retardance_values)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return np.zeros(values.shape, dtype=bool)
    threshold = np.percentile(finite, percentile)
    with np.errstate(invalid="ignore"):
        return values >= threshold


@dataclass(frozen=True)
class AdmissibilityReport:
    """Aggregate admissibility outcome over sampled before/after pixel pairs."""

    n_sampled: int
    n_valid_pairs: int
    n_admissible_both: int
    n_became_inadmissible: int
    n_excluded_out_of_fov: int
    accuracy: float

    def to_key_value_lines(self) -> list[str]:
        return [f"{key}={value}" for key, value in asdict(self).items()]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _is_fill_pixel(pixels: np.ndarray) -> np.ndarray:
    # Identity-filled pixels mark out-of-field regions exactly.
    return np.all(np.abs(pixels - np.eye(4)) <= 1e-12, axis=(-2, -1))


def admissibility_report(before, after, n_samples: int, seed: int,
                         tol: float = ADMISSIBILITY_TOL) -> AdmissibilityReport:
    """Sample pixel coordinates and compare admissibility before/after.

    Coordinates whose before or after pixel equals the identity fill are
    excluded as out-of-field. Accuracy is admissible-in-both over valid
    pairs; with admissible input data the valid pairs split exactly into
    admissible-both and became-inadmissible.
    """
    before = as_f64(before)
    after = as_f64(after)
    if before.shape != after.shape or before.ndim != 4:
        raise ValueError(f"image shapes differ or are not (H,W,4,4): "
                         f"{before.shape} vs {after.shape}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    h, w = before.shape[:2]
    rng = _rng(seed)
    ys = rng.integers(0, h, size=n_samples)
    xs = rng.integers(0, w, size=n_samples)
    b = before[ys, xs]
    a = after[ys, xs]

    out_of_fov = _is_fill_pixel(b) | _is_fill_pixel(a)
    valid = ~out_of_fov
    adm_b = is_admissible(b[valid], tol)
    adm_a = is_admissible(a[valid], tol)
    n_valid = int(np.count_nonzero(valid))
    n_both = int(np.count_nonzero(adm_b & adm_a))
    n_broke = int(np.count_nonzero(adm_b & ~adm_a))
    return AdmissibilityReport(
        n_sampled=int(n_samples),
        n_valid_pairs=n_valid,
        n_admissible_both=n_both,
        n_became_inadmissible=n_broke,
        n_excluded_out_of_fov=int(np.count_nonzero(out_of_fov)),
        accuracy=(n_both / n_valid) if n_valid else math.nan,
    )
