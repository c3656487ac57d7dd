import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polaraug import (
    AugmentPolicy,
    AugmentSpec,
    CalibrationPair,
    augment,
    augment_calibration,
    augment_mueller,
    azimuth,
    compute_mueller,
    conjugate_image,
    decompose_image,
    embed_calibration,
    gaussian_noise,
    linear_retarder_image,
    lu_chipman,
    make_linear_retarder,
    polar_flip_matrix,
    polar_rotation_matrix,
    radial_azimuth_pattern,
    random_physical_image,
    resample,
    sample_spec,
    spatial_flip_matrix,
    spatial_rotation_matrix,
)
from polaraug.errors import NotOrthogonalError, SingularMatrixError
from polaraug.transforms import POLAR_FLIP, polar_transform, spatial_transform

from conftest import matmul_pixels, well_conditioned_stack

angles = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


# --- transform matrices -----------------------------------------------------

def test_spatial_rotation_trivials():
    assert np.array_equal(spatial_rotation_matrix(0.0), np.eye(2))
    assert np.array_equal(spatial_rotation_matrix(math.pi / 2), [[0.0, -1.0], [1.0, 0.0]])


@given(angles)
def test_spatial_rotation_is_isometry(theta):
    r = spatial_rotation_matrix(theta)
    assert abs(np.linalg.det(r) - 1.0) <= 1e-12
    assert np.max(np.abs(r @ r.T - np.eye(2))) <= 1e-12
    v = np.array([0.3, -1.7])
    assert abs(np.linalg.norm(r @ v) - np.linalg.norm(v)) <= 1e-12


def test_spatial_flips():
    h = spatial_flip_matrix("H")
    v = spatial_flip_matrix("V")
    f = spatial_flip_matrix("F")
    assert np.array_equal(h, np.diag([1.0, -1.0]))
    assert np.array_equal(v, np.diag([-1.0, 1.0]))
    assert np.array_equal(f, np.diag([-1.0, -1.0]))
    assert np.array_equal(h @ v, f)
    assert np.array_equal(h @ h, np.eye(2))
    with pytest.raises(ValueError):
        spatial_flip_matrix("X")


def test_polar_rotation_structure():
    assert np.array_equal(polar_rotation_matrix(0.0), np.eye(4))
    assert np.array_equal(polar_rotation_matrix(math.pi), np.eye(4))
    quarter = polar_rotation_matrix(math.pi / 4)
    assert np.array_equal(quarter[1:3, 1:3], [[0.0, -1.0], [1.0, 0.0]])
    assert quarter[0, 0] == 1.0 and quarter[3, 3] == 1.0


@given(angles)
def test_polar_rotation_orthogonal(theta):
    r = polar_rotation_matrix(theta)
    assert np.max(np.abs(r @ polar_rotation_matrix(-theta) - np.eye(4))) <= 1e-12


def test_polar_flip_structure():
    assert np.array_equal(polar_flip_matrix(0.0), np.diag([1.0, 1.0, -1.0, -1.0]))
    assert np.array_equal(POLAR_FLIP @ POLAR_FLIP, np.eye(4))
    assert np.array_equal(POLAR_FLIP @ POLAR_FLIP, polar_rotation_matrix(math.pi))
    eighth = polar_flip_matrix(math.pi / 8)
    assert np.array_equal(eighth[1:3, 1:3], [[0.0, 1.0], [1.0, 0.0]])
    assert eighth[3, 3] == -1.0


@given(angles)
def test_polar_flip_is_involution(theta):
    h = polar_flip_matrix(theta)
    assert np.max(np.abs(h @ h - np.eye(4))) <= 1e-12


# --- resampling -------------------------------------------------------------

def test_resample_identity_bit_exact(rng):
    img = random_physical_image(7, 11, seed=5)
    for interp in ("nearest", "bilinear"):
        spec = AugmentSpec(interpolation=interp)
        assert np.array_equal(resample(img, np.eye(2), spec), img)


def test_resample_constant_mirror_stays_constant():
    pixel = make_linear_retarder(0.4, 1.0)
    img = np.broadcast_to(pixel, (9, 13, 4, 4)).copy()
    spec = AugmentSpec(rotation_angle=0.7, padding="mirror", interpolation="bilinear")
    out = resample(img, spatial_transform(spec), spec)
    assert np.allclose(out, img, atol=1e-12)


def test_resample_quarter_turn_matches_rot90(rng):
    img = random_physical_image(3, 3, seed=8)
    spec = AugmentSpec(rotation_angle=math.pi / 2, interpolation="nearest")
    out = resample(img, spatial_transform(spec), spec)
    assert np.array_equal(out, np.rot90(img, k=1, axes=(0, 1)))


def test_resample_eighth_turn_fills_identity_at_corners():
    img = random_physical_image(16, 16, seed=9)
    spec = AugmentSpec(rotation_angle=math.pi / 4)
    out = resample(img, spatial_transform(spec), spec)
    for r, c in ((0, 0), (0, 15), (15, 0), (15, 15)):
        assert np.array_equal(out[r, c], np.eye(4))


@pytest.mark.parametrize("padding", ["identity_fill", "mirror"])
@pytest.mark.parametrize("theta", [0.123, -2.5, 89.0, 1e6])
def test_resample_total_for_any_angle(padding, theta):
    img = random_physical_image(6, 5, seed=10)
    spec = AugmentSpec(rotation_angle=theta, padding=padding)
    out = resample(img, spatial_transform(spec), spec)
    assert np.all(np.isfinite(out))


def test_resample_matches_independent_interpolator(rng):
    # scipy's bilinear map_coordinates is an unrelated implementation of the
    # same inverse mapping; both padding modes must agree with it.
    from scipy.ndimage import map_coordinates

    src = rng.normal(size=(13, 11, 16))
    spec = AugmentSpec(rotation_angle=math.radians(27.0))
    t_s = spatial_transform(spec)
    pull = np.linalg.inv(t_s)
    h, w = src.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys_o, xs_o = np.mgrid[0:h, 0:w]
    coords = np.stack([
        pull[1, 0] * (xs_o - cx) + pull[1, 1] * (ys_o - cy) + cy,
        pull[0, 0] * (xs_o - cx) + pull[0, 1] * (ys_o - cy) + cx,
    ])

    from polaraug.transforms import _resample_channels

    mirror = _resample_channels(src, t_s, "mirror", "bilinear", np.zeros(16))
    fill = _resample_channels(src, t_s, "identity_fill", "bilinear", np.full(16, 0.7))
    for c in range(16):
        ref_m = map_coordinates(src[:, :, c], coords, order=1, mode="mirror")
        assert np.max(np.abs(mirror[:, :, c] - ref_m)) <= 1e-12
        ref_f = map_coordinates(src[:, :, c], coords, order=1,
                                mode="grid-constant", cval=0.7)
        assert np.max(np.abs(fill[:, :, c] - ref_f)) <= 1e-12


def test_negative_and_huge_seeds_are_accepted():
    policy = AugmentPolicy()
    assert sample_spec(policy, -5) == sample_spec(policy, -5)
    assert sample_spec(policy, 2**63 + 11) == sample_spec(policy, 2**63 + 11)
    img = np.zeros((2, 2, 4, 4))
    assert np.array_equal(gaussian_noise(img, 0.1, seed=-3),
                          gaussian_noise(img, 0.1, seed=-3))


def test_resample_rejects_singular_transform():
    img = random_physical_image(4, 4, seed=1)
    with pytest.raises(SingularMatrixError):
        resample(img, np.zeros((2, 2)), AugmentSpec())


# --- conjugation and calibration embedding ----------------------------------

def test_conjugate_image_identity_is_noop():
    img = random_physical_image(5, 6, seed=12)
    assert np.array_equal(conjugate_image(img, np.eye(4)), img)


def test_conjugate_image_preserves_frobenius_norm():
    img = random_physical_image(8, 8, seed=13)
    out = conjugate_image(img, polar_rotation_matrix(0.9))
    norms_in = np.linalg.norm(img, axis=(2, 3))
    norms_out = np.linalg.norm(out, axis=(2, 3))
    assert np.max(np.abs(norms_in - norms_out)) <= 1e-10


def test_conjugate_image_shifts_retarder_azimuth():
    phi, theta = 0.5, 0.7
    img = make_linear_retarder(phi, 1.2)[None, None]
    out = conjugate_image(img, polar_rotation_matrix(theta))
    _, retarder, _ = lu_chipman(out[0, 0])
    assert abs(azimuth(retarder) - (phi + theta) % math.pi) <= 1e-9


def test_conjugate_image_rejects_non_orthogonal():
    img = random_physical_image(2, 2, seed=14)
    with pytest.raises(NotOrthogonalError):
        conjugate_image(img, np.diag([1.0, 2.0, 1.0, 1.0]))


def test_embed_calibration_identity_noop():
    cal = CalibrationPair(np.eye(4), np.eye(4))
    out = embed_calibration(cal, np.eye(4))
    assert np.array_equal(out.analyzer, np.eye(4))
    assert np.array_equal(out.modulator, np.eye(4))


def test_embed_calibration_direct_substitution():
    cal = CalibrationPair(np.eye(4), np.eye(4))
    out = embed_calibration(cal, polar_rotation_matrix(0.3))
    assert np.allclose(out.analyzer, polar_rotation_matrix(-0.3), atol=1e-12)
    assert np.allclose(out.modulator, polar_rotation_matrix(0.3), atol=1e-12)


def _random_frame(rng, h=16, w=16, seed=21):
    a = well_conditioned_stack(rng, h * w).reshape(h, w, 4, 4)
    w_mat = well_conditioned_stack(rng, h * w).reshape(h, w, 4, 4)
    m = random_physical_image(h, w, seed=seed)
    b = matmul_pixels(matmul_pixels(a, m), w_mat)
    return b, CalibrationPair(a, w_mat)


def test_two_path_equivalence_per_pixel(rng):
    b, cal = _random_frame(rng)
    t_p = polar_rotation_matrix(1.234) @ POLAR_FLIP
    conjugated = conjugate_image(compute_mueller(b, cal), t_p)
    embedded = compute_mueller(b, embed_calibration(cal, t_p))
    assert np.max(np.abs(conjugated - embedded)) <= 1e-10


def test_intensity_invariance(rng):
    b, cal = _random_frame(rng, seed=22)
    t_p = polar_rotation_matrix(-0.61)
    new_cal = embed_calibration(cal, t_p)
    m_new = conjugate_image(compute_mueller(b, cal), t_p)
    rebuilt = matmul_pixels(matmul_pixels(new_cal.analyzer, m_new), new_cal.modulator)
    assert np.max(np.abs(rebuilt - b)) <= 1e-9


def test_compute_mueller_identity_calibration():
    b = random_physical_image(4, 4, seed=23)
    cal = CalibrationPair(np.eye(4), np.eye(4))
    assert np.allclose(compute_mueller(b, cal), b, atol=1e-14)


def test_compute_mueller_recovers_identity(rng):
    a = well_conditioned_stack(rng, 12).reshape(3, 4, 4, 4)
    w = well_conditioned_stack(rng, 12).reshape(3, 4, 4, 4)
    b = matmul_pixels(a, w)
    got = compute_mueller(b, CalibrationPair(a, w))
    assert np.max(np.abs(got - np.eye(4))) <= 1e-12


def test_compute_mueller_global_calibration(rng):
    a = well_conditioned_stack(rng, 1)[0]
    w = well_conditioned_stack(rng, 1)[0]
    m = random_physical_image(3, 5, seed=24)
    b = matmul_pixels(matmul_pixels(a, m), w)
    got = compute_mueller(b, CalibrationPair(a, w))
    assert np.max(np.abs(got - m)) <= 1e-12


def test_compute_mueller_rejects_arity_mismatch(rng):
    b = random_physical_image(3, 3, seed=26)
    a = np.broadcast_to(np.eye(4), (2, 2, 4, 4)).copy()
    with pytest.raises(ValueError, match="do not match"):
        compute_mueller(b, CalibrationPair(a, np.eye(4)))


def test_compute_mueller_reports_singular_pixel():
    b = random_physical_image(2, 2, seed=25)
    a = np.broadcast_to(np.eye(4), (2, 2, 4, 4)).copy()
    a[1, 0] = 0.0
    with pytest.raises(SingularMatrixError, match="pixel 2"):
        compute_mueller(b, CalibrationPair(a, np.eye(4)))


# --- joint augmentation -----------------------------------------------------

def test_augment_identity_spec_bit_exact():
    img = random_physical_image(6, 7, seed=30)
    for interp in ("nearest", "bilinear"):
        out = augment_mueller(img, AugmentSpec(interpolation=interp))
        assert np.array_equal(out, img)


def test_augment_flip_h_is_involution():
    img = random_physical_image(6, 7, seed=31)
    spec = AugmentSpec(flip_h=True)
    assert np.allclose(augment_mueller(augment_mueller(img, spec), spec), img, atol=1e-12)


def test_augment_both_flips_polar_part_cancels():
    spec = AugmentSpec(flip_h=True, flip_v=True)
    assert np.array_equal(polar_transform(spec), np.eye(4))
    assert np.array_equal(spatial_transform(spec), np.diag([-1.0, -1.0]))


def test_augment_rotation_group_structure_quarter_turns():
    img = random_physical_image(8, 8, seed=32)
    spec90 = AugmentSpec(rotation_angle=math.pi / 2, interpolation="nearest")
    spec180 = AugmentSpec(rotation_angle=math.pi, interpolation="nearest")
    twice = augment_mueller(augment_mueller(img, spec90), spec90)
    once = augment_mueller(img, spec180)
    assert np.max(np.abs(twice - once)) <= 1e-12


def test_augment_rotation_group_structure_bilinear_interior():
    scene = linear_retarder_image(radial_azimuth_pattern(48, 48), math.pi / 2)
    deg30 = AugmentSpec(rotation_angle=math.radians(30))
    deg60 = AugmentSpec(rotation_angle=math.radians(60))
    twice = augment_mueller(augment_mueller(scene, deg30), deg30)
    once = augment_mueller(scene, deg60)
    interior = np.zeros((48, 48), dtype=bool)
    interior[12:36, 12:36] = True
    ys, xs = np.mgrid[0:48, 0:48]
    # The pattern center is an azimuth singularity; interpolation error is
    # unbounded there, so the comparison stays off a small center disk.
    interior &= (ys - 23.5) ** 2 + (xs - 23.5) ** 2 >= 8.0**2
    diff = np.abs(twice - once)[interior]
    assert np.median(diff) <= 5e-3
    assert np.max(diff) <= 0.05


def test_augment_radial_scene_equivariance():
    h = w = 64
    phi = radial_azimuth_pattern(h, w)
    scene = linear_retarder_image(phi, math.pi / 2)
    theta = math.radians(30)
    out = augment_mueller(scene, AugmentSpec(rotation_angle=theta))
    dec = decompose_image(out)
    from polaraug import azimuth_map, retardance_map, retardance_mask

    az = azimuth_map(dec.retarder)
    mask = retardance_mask(retardance_map(dec.retarder), 75) & np.isfinite(az)
    # Rotating the scene and its polarization together leaves the radial
    # pattern unchanged away from boundary effects.
    d = np.abs(az - phi)[mask]
    err = np.minimum(d, math.pi - d)
    assert np.degrees(np.median(err)) <= 0.1
    assert np.degrees(np.quantile(err, 0.99)) <= 1.0


def test_augment_dispatches_on_input_kind(rng):
    img = random_physical_image(5, 5, seed=33)
    spec = AugmentSpec(rotation_angle=0.2)
    assert np.array_equal(augment(img, spec), augment_mueller(img, spec))
    b, cal = _random_frame(rng, h=5, w=5, seed=34)
    moved_b, new_cal = augment((b, cal), spec)
    assert moved_b.shape == b.shape
    assert new_cal.analyzer.shape == (5, 5, 4, 4)


def test_augment_calibration_matches_mueller_path_nearest(rng):
    b, cal = _random_frame(rng, h=12, w=12, seed=35)
    spec = AugmentSpec(rotation_angle=math.radians(40), flip_h=True,
                       interpolation="nearest")
    mueller_path = augment_mueller(compute_mueller(b, cal), spec)
    moved_b, new_cal = augment_calibration(b, cal, spec)
    raw_path = compute_mueller(moved_b, new_cal)
    assert np.max(np.abs(mueller_path - raw_path)) <= 1e-10


def test_augment_calibration_fill_pixels_give_identity(rng):
    b, cal = _random_frame(rng, h=16, w=16, seed=36)
    spec = AugmentSpec(rotation_angle=math.radians(45), interpolation="nearest")
    moved_b, new_cal = augment_calibration(b, cal, spec)
    raw_path = compute_mueller(moved_b, new_cal)
    assert np.allclose(raw_path[0, 0], np.eye(4), atol=1e-12)  # corner is out of field


def test_augment_threads_do_not_change_output(monkeypatch):
    img = random_physical_image(17, 9, seed=37)
    spec = AugmentSpec(rotation_angle=0.37, flip_v=True)
    monkeypatch.delenv("POLARAUG_THREADS", raising=False)
    single = augment_mueller(img, spec)
    monkeypatch.setenv("POLARAUG_THREADS", "4")
    multi = augment_mueller(img, spec)
    assert np.array_equal(single, multi)


# --- policy sampling and noise ----------------------------------------------

def test_sample_spec_deterministic():
    policy = AugmentPolicy()
    assert sample_spec(policy, 42) == sample_spec(policy, 42)
    assert sample_spec(policy, 42) != sample_spec(policy, 43)


def test_sample_spec_rates():
    policy = AugmentPolicy()
    specs = [sample_spec(policy, seed) for seed in range(2000)]
    rot_rate = np.mean([s.rotation_angle != 0.0 for s in specs])
    flip_h_rate = np.mean([s.flip_h for s in specs])
    flip_v_rate = np.mean([s.flip_v for s in specs])
    assert abs(rot_rate - 0.5) <= 0.03
    assert abs(flip_h_rate - 0.25) <= 0.03
    assert abs(flip_v_rate - 0.25) <= 0.03
    lo, hi = policy.theta_range
    assert all(lo <= s.rotation_angle < hi for s in specs)


def test_sample_spec_extreme_policies():
    never = AugmentPolicy(p_rotation=0.0, p_flip_h=0.0, p_flip_v=0.0)
    always = AugmentPolicy(p_rotation=1.0, p_flip_h=1.0, p_flip_v=1.0)
    for seed in range(50):
        s = sample_spec(never, seed)
        assert s.rotation_angle == 0.0 and not s.flip_h and not s.flip_v
        s = sample_spec(always, seed)
        assert s.flip_h and s.flip_v


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentPolicy(p_rotation=1.5)
    with pytest.raises(ValueError):
        AugmentPolicy(theta_range=(1.0, 1.0))
    with pytest.raises(ValueError):
        AugmentSpec(rotation_angle=math.inf)
    with pytest.raises(ValueError):
        AugmentSpec(padding="wrap")


def test_gaussian_noise_zero_sigma_unchanged():
    img = random_physical_image(4, 4, seed=40)
    assert np.array_equal(gaussian_noise(img, 0.0, seed=1), img)


def test_gaussian_noise_deterministic_and_calibrated():
    img = np.zeros((100, 100, 4, 4))
    a = gaussian_noise(img, 0.1, seed=7)
    b = gaussian_noise(img, 0.1, seed=7)
    assert np.array_equal(a, b)
    assert abs(a.mean()) <= 0.001
    assert abs(a.std() - 0.1) <= 0.002
    with pytest.raises(ValueError):
        gaussian_noise(img, -1.0, seed=0)
