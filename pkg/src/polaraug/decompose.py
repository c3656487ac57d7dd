"""Polar decomposition, scalar maps, admissibility, and synthetic generators.

The decomposition factors a Mueller matrix as depolarizer @ retarder @
diattenuator. The azimuth readout uses the two-argument arctangent of the
retarder entries (2,4) and (4,3) (1-based indices), reduced into [0, pi).
The axis-aligned generator below is built so that the decomposed azimuth
of ``make_linear_retarder(phi, delta)`` is exactly ``phi``; all physical
cross-checks rely on relative (equivariant) azimuth shifts, which do not
depend on that sign choice.

Admissibility follows the coherency-matrix convention: a Mueller matrix
is physical iff its Hermitian coherency matrix is positive semidefinite.
The test reads the signs of the characteristic-polynomial coefficients,
avoiding an eigenvalue solve; an explicit eigenvalue oracle is provided
for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DecompositionError,
    DegenerateDiattenuationError,
    SingularDepolarizerError,
)
from .linalg import as_f64, entry, sym3_eig
from .transforms import _cos_sin, _rng

DEGENERATE_DIATTENUATION_TOL = 1e-9
SINGULAR_DEPOLARIZER_EIG = 1e-20
AZIMUTH_INDETERMINATE_TOL = 1e-12
ADMISSIBILITY_TOL = 1e-9

# Pauli basis in polarimetric order: identity, linear 0/90, linear 45, circular.
_PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
    ],
    dtype=np.complex128,
)

# _BASIS[u, v] = kron(pauli_u, conj(pauli_v)); Hermitian, tr(G_uv G_u'v') = 4 delta.
_BASIS = np.array(
    [[np.kron(_PAULI[u], _PAULI[v].conj()) for v in range(4)] for u in range(4)]
)


def coherency(m) -> np.ndarray:
    """Hermitian 4x4 coherency matrix of a Mueller matrix (or a stack)."""
    m = as_f64(m)
    return 0.25 * np.einsum("...uv,uvjk->...jk", m, _BASIS)


def coherency_eigenvalues(m) -> np.ndarray:
    """Eigenvalues of the coherency matrix, ascending (explicit solve)."""
    return np.linalg.eigvalsh(coherency(m))


def mueller_from_coherency(h) -> np.ndarray:
    """Inverse expansion: Mueller entries from a Hermitian coherency matrix."""
    h = np.asarray(h, dtype=np.complex128)
    return np.real(np.einsum("...ij,uvji->...uv", h, _BASIS))


def _char_poly_coeffs(h: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials e1..e4 of a Hermitian stack.

    Newton's identities on traces of powers; no eigenvalue solve.
    """
    p1 = np.einsum("...ii->...", h).real
    h2 = h @ h
    p2 = np.einsum("...ii->...", h2).real
    p3 = np.einsum("...ij,...ji->...", h2, h).real
    p4 = np.einsum("...ij,...ji->...", h2, h2).real
    e1 = p1
    e2 = (e1 * p1 - p2) / 2.0
    e3 = (e2 * p1 - e1 * p2 + p3) / 3.0
    e4 = (e3 * p1 - e2 * p2 + e1 * p3 - p4) / 4.0
    return np.stack([e1, e2, e3, e4], axis=-1)


def is_admissible(m, tol: float = ADMISSIBILITY_TOL):
    """Physical realizability test via characteristic-polynomial signs.

    True iff every coefficient e_k stays above -tol * |tr H|^k, which for
    a Hermitian coherency matrix is equivalent to all eigenvalues being
    non-negative up to the tolerance. Works element-wise on stacks.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    h = coherency(m)
    e = _char_poly_coeffs(h)
    scale = np.abs(e[..., 0])
    powers = np.stack([scale, scale**2, scale**3, scale**4], axis=-1)
    ok = np.all(e >= -tol * powers, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


def make_linear_retarder(phi: float, delta: float) -> np.ndarray:
    """Mueller matrix of a linear retarder: axis azimuth phi, retardance delta.

    Closed form of a rotated axis-aligned retarder whose decomposed azimuth
    is 0, so decomposing the result returns phi exactly. Entries are
    arranged so the retardance readout cancels exactly at delta = 0 and pi,
    where the arccos in that readout is ill-conditioned.
    """
    if not 0.0 <= delta <= math.pi:
        raise ValueError("delta must be in [0, pi]")
    c, s = _cos_sin(2.0 * float(phi))
    cd, sd = _cos_sin(float(delta))
    # Sharing the product s^2 (1 - cd) between both diagonal entries makes
    # their sum exactly 1 + cd, so the readout stays exact at the endpoints.
    p = s * s * (1.0 - cd)
    cross = c * s * (1.0 - cd)
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0 - p, cross, s * sd],
            [0.0, cross, cd + p, -c * sd],
            [0.0, -s * sd, c * sd, cd],
        ]
    )


def _diattenuator_from_vector(dvec: np.ndarray) -> np.ndarray:
    dmag2 = float(dvec @ dvec)
    dperp = math.sqrt(max(0.0, 1.0 - dmag2))
    out = np.eye(4)
    out[0, 1:] = dvec
    out[1:, 0] = dvec
    ratio = (1.0 - dperp) / dmag2 if dmag2 > 1e-30 else 0.5
    out[1:, 1:] = dperp * np.eye(3) + ratio * np.outer(dvec, dvec)
    return out


def make_diattenuator(d: float, phi: float) -> np.ndarray:
    """Symmetric linear diattenuator of magnitude d oriented at phi."""
    if not 0.0 <= d < 1.0:
        raise ValueError("d must be in [0, 1)")
    dvec = d * np.array([math.cos(2 * phi), math.sin(2 * phi), 0.0])
    return _diattenuator_from_vector(dvec)


def random_physical_mueller(seed: int) -> np.ndarray:
    """Random admissible Mueller matrix with unit total intensity.

    Samples a random positive-semidefinite coherency matrix (Gram matrix
    of complex Gaussian vectors), normalizes its trace, and maps back.
    """
    return random_physical_image(1, 1, seed)[0, 0]


def random_physical_image(height: int, width: int, seed: int) -> np.ndarray:
    """(H, W, 4, 4) image of independent random admissible Mueller pixels."""
    rng = _rng(seed)
    g = rng.normal(size=(height, width, 4, 4)) + 1j * rng.normal(size=(height, width, 4, 4))
    h = g @ np.conj(np.swapaxes(g, -1, -2))
    tr = np.einsum("...ii->...", h).real
    h /= tr[..., None, None]
    return np.ascontiguousarray(mueller_from_coherency(h))


def linear_retarder_image(phi, delta) -> np.ndarray:
    """Vectorized linear-retarder stack from azimuth/retardance arrays.

    Closed form of make_linear_retarder applied element-wise; phi and
    delta broadcast against each other.
    """
    phi = as_f64(phi)
    delta = np.broadcast_to(as_f64(delta), phi.shape)
    c = np.cos(2.0 * phi)
    s = np.sin(2.0 * phi)
    cd = np.cos(delta)
    sd = np.sin(delta)
    p = s * s * (1.0 - cd)
    cross = c * s * (1.0 - cd)
    out = np.zeros(phi.shape + (4, 4), dtype=np.float64)
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0 - p
    out[..., 1, 2] = cross
    out[..., 1, 3] = s * sd
    out[..., 2, 1] = cross
    out[..., 2, 2] = cd + p
    out[..., 2, 3] = -c * sd
    out[..., 3, 1] = -s * sd
    out[..., 3, 2] = c * sd
    out[..., 3, 3] = cd
    return out


def radial_azimuth_pattern(height: int, width: int) -> np.ndarray:
    """Azimuth map equal to the on-screen polar angle about the image center.

    Angles are measured counter-clockwise on screen from the +x axis
    (x = column right, y = row down) and reduced into [0, pi). The exact
    center pixel (zero offset) gets angle 0.
    """
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ys, xs = np.mgrid[0:height, 0:width]
    return np.mod(np.arctan2(cy - ys, xs - cx), math.pi)


def lu_chipman(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polar decomposition of one Mueller matrix into (depolarizer, retarder,
    diattenuator) with depolarizer @ retarder @ diattenuator == m.

    The diattenuator carries the total transmittance m[0,0] and is built
    from the first-row diattenuation vector; the depolarizer 3x3 block is
    the signed symmetric square root of m' m'^T (sign from det m'); the
    retarder is the remaining orthogonal factor.
    """
    m = as_f64(m)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 Mueller matrix, got {m.shape}")
    m00 = float(m[0, 0])
    if m00 <= 0.0:
        raise DecompositionError(f"m[1,1] must be positive, got {m00}")
    mn = m / m00

    dvec = mn[0, 1:].copy()
    dmag = float(np.linalg.norm(dvec))
    if dmag >= 1.0 - DEGENERATE_DIATTENUATION_TOL:
        raise DegenerateDiattenuationError(f"diattenuation magnitude {dmag:.12f} >= 1")
    diat_unit = _diattenuator_from_vector(dvec)

    mid = mn @ np.linalg.inv(diat_unit)  # depolarizer @ retarder
    mp = mid[1:, 1:]
    eig = sym3_eig(mp @ mp.T)
    if eig.values[-1] < SINGULAR_DEPOLARIZER_EIG:
        raise SingularDepolarizerError(
            f"smallest eigenvalue {eig.values[-1]:.3e} below {SINGULAR_DEPOLARIZER_EIG:g}"
        )
    sign = -1.0 if np.linalg.det(mp) < 0 else 1.0
    roots = np.sqrt(eig.values)
    m_delta = sign * (eig.vectors * roots) @ eig.vectors.T
    m_delta_inv = sign * (eig.vectors / roots) @ eig.vectors.T

    depol = np.eye(4)
    depol[1:, 0] = mid[1:, 0]
    depol[1:, 1:] = m_delta
    ret = np.eye(4)
    ret[1:, 1:] = m_delta_inv @ mp
    return depol, ret, m00 * diat_unit


@dataclass(frozen=True)
class PolarDecomposition:
    """Per-pixel decomposition factors plus a validity mask.

    Invalid pixels (non-positive intensity, degenerate diattenuation, or
    singular depolarizer) hold NaN factors and are counted in `failures`.
    """

    depolarizer: np.ndarray
    retarder: np.ndarray
    diattenuator: np.ndarray
    valid: np.ndarray
    failures: dict

    @property
    def n_failed(self) -> int:
        return int(self.valid.size - np.count_nonzero(self.valid))


def decompose_image(img) -> PolarDecomposition:
    """Vectorized polar decomposition of an (H, W, 4, 4) Mueller image."""
    img = as_f64(img)
    h, w = img.shape[:2]
    m = img.reshape(-1, 4, 4)
    n = m.shape[0]

    m00 = m[:, 0, 0]
    ok = m00 > 0.0
    n_nonpositive = int(n - np.count_nonzero(ok))
    safe00 = np.where(ok, m00, 1.0)
    mn = m / safe00[:, None, None]

    dvec = mn[:, 0, 1:]
    dmag2 = np.einsum("ij,ij->i", dvec, dvec)
    degenerate = ok & (np.sqrt(dmag2) >= 1.0 - DEGENERATE_DIATTENUATION_TOL)
    n_degenerate = int(np.count_nonzero(degenerate))
    ok &= ~degenerate

    dperp = np.sqrt(np.clip(1.0 - dmag2, 0.0, None))
    ratio = np.where(dmag2 > 1e-30, (1.0 - dperp) / np.where(dmag2 > 1e-30, dmag2, 1.0), 0.5)
    diat = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    diat[:, 0, 1:] = dvec
    diat[:, 1:, 0] = dvec
    diat[:, 1:, 1:] = dperp[:, None, None] * np.eye(3) + ratio[:, None, None] * (
        dvec[:, :, None] * dvec[:, None, :]
    )

    solve_d = np.where(ok[:, None, None], diat, np.broadcast_to(np.eye(4), diat.shape))
    # mid = mn @ diat^-1, via solve on the symmetric diattenuator.
    mid = np.swapaxes(np.linalg.solve(solve_d, np.swapaxes(mn, -1, -2)), -1, -2)
    mp = mid[:, 1:, 1:]
    gram = mp @ np.swapaxes(mp, -1, -2)
    gram = 0.5 * (gram + np.swapaxes(gram, -1, -2))
    safe_gram = np.where(ok[:, None, None], gram, np.broadcast_to(np.eye(3), gram.shape))
    evals, evecs = np.linalg.eigh(safe_gram)

    singular = ok & (evals[:, 0] < SINGULAR_DEPOLARIZER_EIG)
    n_singular = int(np.count_nonzero(singular))
    ok &= ~singular

    roots = np.sqrt(np.clip(evals, SINGULAR_DEPOLARIZER_EIG * 1e-3, None))
    sign = np.where(np.linalg.det(mp) < 0, -1.0, 1.0)[:, None, None]
    m_delta = sign * (evecs * roots[:, None, :]) @ np.swapaxes(evecs, -1, -2)
    m_delta_inv = sign * (evecs / roots[:, None, :]) @ np.swapaxes(evecs, -1, -2)

    depol = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    depol[:, 1:, 0] = mid[:, 1:, 0]
    depol[:, 1:, 1:] = m_delta
    ret = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    ret[:, 1:, 1:] = m_delta_inv @ mp
    diat *= np.where(ok, m00, np.nan)[:, None, None]

    bad = ~ok
    depol[bad] = np.nan
    ret[bad] = np.nan

    failures = {
        "nonpositive_intensity": n_nonpositive,
        "degenerate_diattenuation": n_degenerate,
        "singular_depolarizer": n_singular,
    }
    shape = (h, w, 4, 4)
    return PolarDecomposition(
        depolarizer=depol.reshape(shape),
        retarder=ret.reshape(shape),
        diattenuator=diat.reshape(shape),
        valid=ok.reshape(h, w),
        failures=failures,
    )


def azimuth(retarder) -> float:
    """Optical-axis azimuth in [0, pi) from one retarder matrix.

    Returns NaN when both contributing entries vanish (no linear
    retardance, orientation undefined).
    """
    retarder = as_f64(retarder)
    num = float(entry(retarder, 2, 4))
    den = float(entry(retarder, 4, 3))
    if max(abs(num), abs(den)) < AZIMUTH_INDETERMINATE_TOL:
        return math.nan
    return (0.5 * math.atan2(num, den)) % math.pi


def azimuth_map(retarder_stack) -> np.ndarray:
    """Per-pixel azimuth of an (H, W, 4, 4) retarder stack (NaN where undefined)."""
    r = as_f64(retarder_stack)
    num = r[..., 1, 3]  # entry (2,4), 1-based
    den = r[..., 3, 2]  # entry (4,3), 1-based
    out = np.mod(0.5 * np.arctan2(num, den), math.pi)
    undefined = np.maximum(np.abs(num), np.abs(den)) < AZIMUTH_INDETERMINATE_TOL
    out[undefined] = np.nan
    return out


def linear_retardance(retarder) -> float:
    """Linear retardance in [0, pi] from one retarder matrix."""
    retarder = as_f64(retarder)
    p = (float(entry(retarder, 2, 2)) + float(entry(retarder, 3, 3))) ** 2 + (
        float(entry(retarder, 3, 2)) - float(entry(retarder, 2, 3))
    ) ** 2
    # Clamp so rounding above P = 4 cannot push arccos out of domain.
    return math.acos(min(1.0, max(-1.0, math.sqrt(p) - 1.0)))


def retardance_map(retarder_stack) -> np.ndarray:
    """Per-pixel linear retardance of an (H, W, 4, 4) retarder stack."""
    r = as_f64(retarder_stack)
    p = (r[..., 1, 1] + r[..., 2, 2]) ** 2 + (r[..., 2, 1] - r[..., 1, 2]) ** 2
    return np.arccos(np.clip(np.sqrt(p) - 1.0, -1.0, 1.0))


def theta_offset_azimuth(azimuth_values, theta: float) -> np.ndarray:
    """Post-hoc angular correction: add theta modulo pi (NaN propagates)."""
    return np.mod(as_f64(azimuth_values) + float(theta), math.pi)
