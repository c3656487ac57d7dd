"""Physically consistent rotations and flips for Mueller-matrix images.

Spatial resampling is paired with the matching polarization change of
basis, either applied to precomputed Mueller images or folded into the
calibration matrices of raw acquisitions. Decomposition, azimuth and
retardance maps, cyclic error metrics, and a coherency-based physical
admissibility test provide the machinery to verify that pairing.
"""

from .decompose import (
    PolarDecomposition,
    azimuth,
    azimuth_map,
    coherency,
    coherency_eigenvalues,
    decompose_image,
    is_admissible,
    linear_retardance,
    linear_retarder_image,
    lu_chipman,
    make_diattenuator,
    make_linear_retarder,
    mueller_from_coherency,
    radial_azimuth_pattern,
    random_physical_image,
    random_physical_mueller,
    retardance_map,
    theta_offset_azimuth,
)
from .errors import (
    BadMagicError,
    DecompositionError,
    DegenerateDiattenuationError,
    DomainError,
    EmptyMaskError,
    FormatError,
    FortranOrderUnsupportedError,
    NotOrthogonalError,
    NotSymmetricError,
    PolarAugError,
    ShapeMismatchError,
    SingularDepolarizerError,
    SingularMatrixError,
    UnsupportedDtypeError,
    VersionUnsupportedError,
)
from .io_formats import (
    ArrayHeader,
    MmpiHeader,
    load_calibration_bundle,
    load_map,
    load_mueller,
    read_mmpi,
    read_npy,
    render_azimuth_png,
    save_calibration_bundle,
    save_mueller,
    write_mmpi,
    write_npy,
)
from .linalg import SymEig3, entry, invert4, mat4_conjugate, sym3_eig
from .metrics import (
    AdmissibilityReport,
    admissibility_report,
    compare_azimuth_maps,
    cyclic_mae,
    retardance_mask,
    wrapped_mae,
)
from .transforms import (
    AugmentPolicy,
    AugmentSpec,
    CalibrationPair,
    augment,
    augment_calibration,
    augment_mueller,
    compute_mueller,
    conjugate_image,
    embed_calibration,
    gaussian_noise,
    polar_flip_matrix,
    polar_rotation_matrix,
    polar_transform,
    resample,
    sample_spec,
    spatial_flip_matrix,
    spatial_rotation_matrix,
    spatial_transform,
)

__version__ = "0.1.0"
