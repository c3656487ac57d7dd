"""Joint spatial + polarimetric isometries for Mueller-matrix images.

Image layout
    A Mueller image is a C-contiguous float64 array of shape (H, W, 4, 4):
    pixel-major, then a row-major 4x4 matrix per pixel. Intensity stacks
    use the same layout. Pixel coordinates are x = column index growing
    right, y = row index growing down, and rotation centers on the pixel
    grid center ((W-1)/2, (H-1)/2).

Rotation sense
    A positive angle turns the image content counter-clockwise on screen
    and is paired with the matching polarization change of basis, so a
    linear structure and its optical-axis orientation stay aligned. Flip
    naming follows the convention that "H" negates y (mirror across the
    horizontal axis) and "V" negates x.

Threading
    Per-pixel work can be split over row bands; the band count is capped
    by the POLARAUG_THREADS environment variable (default 1). Results are
    bit-identical for any band count.

RNG
    All stochastic operations use the counter-based Philox4x32-10 bit
    generator keyed by an explicit 64-bit seed, so streams reproduce
    bit-exactly across processes and bindings.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NotOrthogonalError, SingularMatrixError
from .linalg import as_f64, invert4, orthogonality_defect

PADDING_MODES = ("identity_fill", "mirror")
INTERPOLATION_MODES = ("nearest", "bilinear")

# Out-of-field pixels receive the 16 channels of a flattened 4x4 identity,
# which keeps downstream matrix inversion defined.
IDENTITY_FILL = np.eye(4, dtype=np.float64).reshape(16)

_QUARTER = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


def _cos_sin(angle: float) -> tuple[float, float]:
    """cos/sin with exact values when angle sits on a quarter-turn grid.

    Inputs within 1e-12 (relative) of k*pi/2 snap to the algebraic
    values, so 90-degree transforms are exact permutations and sign
    flips instead of carrying ~1e-16 trigonometric residue.
    """
    q = angle / (0.5 * math.pi)
    r = round(q)
    if abs(q - r) <= 1e-12 * max(1.0, abs(q)):
        return _QUARTER[int(r) % 4]
    return math.cos(angle), math.sin(angle)


def spatial_rotation_matrix(theta: float) -> np.ndarray:
    """2x2 rotation matrix with determinant +1 (norm preserving)."""
    c, s = _cos_sin(float(theta))
    return np.array([[c, -s], [s, c]])


def spatial_flip_matrix(kind: str) -> np.ndarray:
    """Flip matrix: "H" = diag(1,-1), "V" = diag(-1,1), "F" = both."""
    try:
        return {
            "H": np.diag([1.0, -1.0]),
            "V": np.diag([-1.0, 1.0]),
            "F": np.diag([-1.0, -1.0]),
        }[kind]
    except KeyError:
        raise ValueError(f"unknown flip kind {kind!r}, expected H, V or F") from None


def polar_rotation_matrix(theta: float) -> np.ndarray:
    """Rotational change-of-basis matrix for Stokes/Mueller quantities.

    The middle 2x2 block carries the double angle; the matrix is
    orthogonal and satisfies the inverse relation at negated angle.
    """
    c, s = _cos_sin(2.0 * float(theta))
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def polar_flip_matrix(theta: float) -> np.ndarray:
    """Mirror-symmetry transform for a reflection axis at angle theta.

    At quarter-turn multiples this reduces exactly to diag(1, 1, -1, -1),
    the canonical axis-aligned flip that negates 45-degree linear and
    circular components.
    """
    c, s = _cos_sin(4.0 * float(theta))
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, s, 0.0],
            [0.0, s, -c, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ]
    )


#: Canonical axis-aligned polarimetric flip diag(1, 1, -1, -1).
POLAR_FLIP = polar_flip_matrix(0.0)


@dataclass(frozen=True)
class AugmentSpec:
    """One fully resolved augmentation.

    rotation_angle is in radians; positive turns content counter-clockwise
    on screen. Both flips may be set, in which case their polarimetric
    parts cancel to the identity while the spatial parts compose.
    """

    rotation_angle: float = 0.0
    flip_h: bool = False
    flip_v: bool = False
    padding: str = "identity_fill"
    interpolation: str = "bilinear"
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.rotation_angle):
            raise ValueError("rotation_angle must be finite")
        if self.padding not in PADDING_MODES:
            raise ValueError(f"padding must be one of {PADDING_MODES}")
        if self.interpolation not in INTERPOLATION_MODES:
            raise ValueError(f"interpolation must be one of {INTERPOLATION_MODES}")


@dataclass(frozen=True)
class AugmentPolicy:
    """Sampling policy for random augmentation specs."""

    p_rotation: float = 0.5
    p_flip_h: float = 0.25
    p_flip_v: float = 0.25
    theta_range: tuple[float, float] = (-math.pi / 4, math.pi / 4)
    padding: str = "identity_fill"
    interpolation: str = "bilinear"

    def __post_init__(self):
        for name in ("p_rotation", "p_flip_h", "p_flip_v"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        lo, hi = self.theta_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"theta_range must be a non-empty interval, got {self.theta_range}")
        if self.padding not in PADDING_MODES:
            raise ValueError(f"padding must be one of {PADDING_MODES}")
        if self.interpolation not in INTERPOLATION_MODES:
            raise ValueError(f"interpolation must be one of {INTERPOLATION_MODES}")


@dataclass(frozen=True)
class CalibrationPair:
    """Analyzer/modulator matrices, global (4,4) or per-pixel (H,W,4,4)."""

    analyzer: np.ndarray
    modulator: np.ndarray

    def __post_init__(self):
        a = as_f64(self.analyzer)
        w = as_f64(self.modulator)
        for name, m in (("analyzer", a), ("modulator", w)):
            if m.shape != (4, 4) and not (m.ndim == 4 and m.shape[2:] == (4, 4)):
                raise ValueError(f"{name} must be (4,4) or (H,W,4,4), got {m.shape}")
        if (a.ndim == 4) and (w.ndim == 4) and a.shape != w.shape:
            raise ValueError("per-pixel analyzer and modulator shapes differ")
        object.__setattr__(self, "analyzer", a)
        object.__setattr__(self, "modulator", w)

    @property
    def per_pixel(self) -> bool:
        return self.analyzer.ndim == 4 or self.modulator.ndim == 4


def _rng(seed: int) -> np.random.Generator:
    # Negative seeds wrap to their two's-complement 64-bit value.
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def sample_spec(policy: AugmentPolicy, seed: int) -> AugmentSpec:
    """Draw one augmentation spec. Deterministic given the seed.

    Draw order is fixed: rotation trigger, angle, flip H, flip V. All
    four uniforms are always consumed so the stream layout does not
    depend on the policy probabilities.
    """
    rng = _rng(seed)
    u_rot, u_theta, u_flip_h, u_flip_v = rng.random(4)
    lo, hi = policy.theta_range
    theta = lo + u_theta * (hi - lo) if u_rot < policy.p_rotation else 0.0
    return AugmentSpec(
        rotation_angle=float(theta),
        flip_h=bool(u_flip_h < policy.p_flip_h),
        flip_v=bool(u_flip_v < policy.p_flip_v),
        padding=policy.padding,
        interpolation=policy.interpolation,
        seed=int(seed),
    )


def gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Element-wise additive Gaussian noise, deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    img = as_f64(img)
    return img + _rng(seed).normal(0.0, sigma, size=img.shape)


def worker_count() -> int:
    """Row-band worker cap from POLARAUG_THREADS (default 1)."""
    raw = os.environ.get("POLARAUG_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_row_bands(fn, height: int) -> np.ndarray:
    """Apply fn(row_slice) over row bands and concatenate in fixed order."""
    workers = min(worker_count(), height)
    if workers <= 1:
        return fn(slice(0, height))
    step = -(-height // workers)
    bands = [slice(lo, min(lo + step, height)) for lo in range(0, height, step)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, bands))
    return np.concatenate(parts, axis=0)


def validate_mueller_image(img) -> np.ndarray:
    img = as_f64(img)
    if img.ndim != 4 or img.shape[2:] != (4, 4) or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"Mueller image must be (H,W,4,4) with H,W >= 1, got {img.shape}")
    return img


def _mirror_coords(coords: np.ndarray, n: int) -> np.ndarray:
    # Reflect at pixel centers of the boundary rows/columns (no duplication).
    if n == 1:
        return np.zeros_like(coords)
    period = 2.0 * (n - 1)
    folded = np.abs(coords) % period
    return np.where(folded > n - 1, period - folded, folded)


def _resample_channels(src: np.ndarray, t_s: np.ndarray, padding: str,
                       interpolation: str, fill: np.ndarray) -> np.ndarray:
    """Inverse-map resampling of an (H, W, C) channel stack.

    Every output pixel x' samples the source at t_s^-1 (x' - c) + c.
    Out-of-field source coordinates either read the fill vector
    (identity_fill) or reflect at the image boundary (mirror), so the
    operation is total for any angle.
    """
    h, w, nch = src.shape
    if abs(np.linalg.det(t_s)) < 1e-12:
        raise SingularMatrixError("spatial transform is singular")
    pull = np.linalg.inv(t_s)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    flat = src.reshape(h * w, nch)

    def band(rows: slice) -> np.ndarray:
        ys_out, xs_out = np.mgrid[rows, 0:w]
        dx = xs_out - cx
        dy = ys_out - cy
        xs = pull[0, 0] * dx + pull[0, 1] * dy + cx
        ys = pull[1, 0] * dx + pull[1, 1] * dy + cy
        if padding == "mirror":
            xs = _mirror_coords(xs, w)
            ys = _mirror_coords(ys, h)
        if interpolation == "nearest":
            xr = np.rint(xs).astype(np.int64)
            yr = np.rint(ys).astype(np.int64)
            inside = (xr >= 0) & (xr < w) & (yr >= 0) & (yr < h)
            idx = np.where(inside, yr * w + xr, 0)
            out = flat[idx.ravel()].reshape(idx.shape + (nch,))
            out[~inside] = fill
            return out
        x0 = np.floor(xs).astype(np.int64)
        y0 = np.floor(ys).astype(np.int64)
        fx = (xs - x0).ravel()
        fy = (ys - y0).ravel()
        x0 = x0.ravel()
        y0 = y0.ravel()
        # One stacked gather for all four taps, then a weighted reduction.
        xt = np.stack([x0, x0 + 1, x0, x0 + 1])
        yt = np.stack([y0, y0, y0 + 1, y0 + 1])
        weights = np.stack(
            [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy]
        )
        inside = (xt >= 0) & (xt < w) & (yt >= 0) & (yt < h)
        taps = np.take(flat, np.where(inside, yt * w + xt, 0).ravel(), axis=0)
        taps[~inside.ravel()] = fill
        out = np.einsum("tnc,tn->nc", taps.reshape(4, -1, nch), weights)
        return out.reshape(xs.shape + (nch,))

    return _map_row_bands(band, h)


def resample(img, t_s, spec: AugmentSpec) -> np.ndarray:
    """Spatially resample a Mueller image under the 2x2 transform t_s.

    Output dimensions equal input dimensions. Out-of-field pixels are
    written per ``spec.padding``; interpolation runs independently per
    Mueller element, so interpolated matrices may be mildly inadmissible
    (measured by the admissibility report, never silently repaired).
    """
    img = validate_mueller_image(img)
    h, w = img.shape[:2]
    out = _resample_channels(
        img.reshape(h, w, 16), as_f64(t_s), spec.padding, spec.interpolation, IDENTITY_FILL
    )
    return np.ascontiguousarray(out.reshape(h, w, 4, 4))


def _pixelwise_sandwich(stack: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # left @ M_i @ right for every pixel as one (N,16)x(16,16) matmul,
    # via the row-major identity vec(A M C) = vec(M) @ (A^T kron C).
    shape = stack.shape
    out = stack.reshape(-1, 16) @ np.kron(left.T, right)
    return out.reshape(shape)


def _left_multiply(t: np.ndarray, stack: np.ndarray) -> np.ndarray:
    return _pixelwise_sandwich(stack, t, np.eye(4))


def _right_multiply(stack: np.ndarray, t: np.ndarray) -> np.ndarray:
    return _pixelwise_sandwich(stack, np.eye(4), t)


ORTHOGONALITY_TOL = 1e-9


def _check_orthogonal(t_p: np.ndarray) -> None:
    defect = orthogonality_defect(t_p)
    if defect > ORTHOGONALITY_TOL:
        raise NotOrthogonalError(f"transform deviates from orthogonality by {defect:.3e}")


def conjugate_image(img, t_p) -> np.ndarray:
    """Replace every pixel by t_p @ M @ t_p^-1 (polarimetric conjugation)."""
    img = validate_mueller_image(img)
    t_p = as_f64(t_p)
    _check_orthogonal(t_p)
    t_inv = invert4(t_p)

    def band(rows: slice) -> np.ndarray:
        return _pixelwise_sandwich(img[rows], t_p, t_inv)

    return np.ascontiguousarray(_map_row_bands(band, img.shape[0]))


def embed_calibration(cal: CalibrationPair, t_p) -> CalibrationPair:
    """Fold a polarimetric transform into the calibration matrices.

    Returns A' = A @ t_p^-1 and W' = t_p @ W (the rearranged form that
    avoids inverting the calibration matrices themselves), so computing
    the Mueller matrix from raw intensities with (A', W') yields the
    conjugated result directly.
    """
    t_p = as_f64(t_p)
    _check_orthogonal(t_p)
    t_inv = invert4(t_p)
    a, w = cal.analyzer, cal.modulator
    a_new = a @ t_inv if a.ndim == 2 else _right_multiply(a, t_inv)
    w_new = t_p @ w if w.ndim == 2 else _left_multiply(t_p, w)
    return CalibrationPair(a_new, w_new)


def _check_invertible_stack(m: np.ndarray, label: str) -> None:
    det = np.linalg.det(m)
    scale = np.sum(m * m, axis=(-2, -1)) ** 2
    bad = np.abs(det) <= 1e-12 * scale
    if np.any(bad):
        if m.ndim == 2:
            raise SingularMatrixError(f"singular {label} matrix")
        n_bad = int(np.sum(bad))
        first = int(np.flatnonzero(bad.ravel())[0])
        raise SingularMatrixError(
            f"singular {label} matrix at pixel {first} ({n_bad} of {bad.size} failed)"
        )


def compute_mueller(intensities, cal: CalibrationPair) -> np.ndarray:
    """Per-pixel Mueller matrix M = A^-1 @ B @ W^-1 from raw intensities."""
    b = validate_mueller_image(intensities)
    a, w = cal.analyzer, cal.modulator
    for name, m in (("analyzer", a), ("modulator", w)):
        if m.ndim == 4 and m.shape[:2] != b.shape[:2]:
            raise ValueError(
                f"per-pixel {name} dims {m.shape[:2]} do not match image {b.shape[:2]}"
            )
    _check_invertible_stack(a, "analyzer")
    _check_invertible_stack(w, "modulator")
    x = np.linalg.solve(a, b)  # A^-1 B
    m = np.linalg.solve(np.swapaxes(w, -1, -2), np.swapaxes(x, -1, -2))
    return np.ascontiguousarray(np.swapaxes(m, -1, -2))


def spatial_transform(spec: AugmentSpec) -> np.ndarray:
    """Forward 2x2 content transform: flips first, then rotation."""
    t = np.eye(2)
    if spec.flip_h:
        t = spatial_flip_matrix("H") @ t
    if spec.flip_v:
        t = spatial_flip_matrix("V") @ t
    # Screen-CCW content rotation in x-right/y-down pixel coordinates.
    return spatial_rotation_matrix(-spec.rotation_angle) @ t


def polar_transform(spec: AugmentSpec) -> np.ndarray:
    """Matching 4x4 polarimetric transform: flips first, then rotation.

    Each set flip contributes one canonical axis-aligned flip factor;
    setting both cancels the pair to the identity, matching a 180-degree
    rotation of the polarization basis.
    """
    t = np.eye(4)
    if spec.flip_h:
        t = POLAR_FLIP @ t
    if spec.flip_v:
        t = POLAR_FLIP @ t
    return polar_rotation_matrix(spec.rotation_angle) @ t


def augment_mueller(img, spec: AugmentSpec) -> np.ndarray:
    """Jointly transform pixel positions and polarization states."""
    img = validate_mueller_image(img)
    moved = resample(img, spatial_transform(spec), spec)
    return conjugate_image(moved, polar_transform(spec))


def augment_calibration(intensities, cal: CalibrationPair,
                        spec: AugmentSpec) -> tuple[np.ndarray, CalibrationPair]:
    """Augment raw data by resampling A, B, W and re-embedding A, W.

    The intensity stack is only moved spatially; the polarimetric part
    lives entirely in the returned calibration pair, so a downstream
    M = A^-1 B W^-1 computation produces the augmented Mueller image.
    Out-of-field pixels of all three stacks are identity-filled before
    embedding, which keeps them consistent with the Mueller-path fill.
    """
    b = validate_mueller_image(intensities)
    h, w = b.shape[:2]
    t_s = spatial_transform(spec)

    def move(stack: np.ndarray) -> np.ndarray:
        if stack.ndim == 2:
            stack = np.broadcast_to(stack, (h, w, 4, 4))
        flat = _resample_channels(
            np.ascontiguousarray(stack.reshape(h, w, 16)),
            t_s, spec.padding, spec.interpolation, IDENTITY_FILL,
        )
        return np.ascontiguousarray(flat.reshape(h, w, 4, 4))

    moved_cal = CalibrationPair(move(cal.analyzer), move(cal.modulator))
    return move(b), embed_calibration(moved_cal, polar_transform(spec))


def augment(data, spec: AugmentSpec):
    """Dispatch to the Mueller-image or raw (intensities, calibration) path."""
    if isinstance(data, tuple):
        intensities, cal = data
        return augment_calibration(intensities, cal, spec)
    return augment_mueller(data, spec)
