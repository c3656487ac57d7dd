"""Exception types, split into domain failures and file-format failures.

The CLI maps ``DomainError`` to exit code 1 and ``FormatError`` (plus
usage problems) to exit code 2.
"""


class PolarAugError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PolarAugError):
    """Numerically or physically invalid data (exit code 1 at the CLI)."""


class SingularMatrixError(DomainError):
    """Matrix inverse requested for a (near-)singular matrix."""


class NotSymmetricError(DomainError):
    """Symmetric eigendecomposition requested for an asymmetric matrix."""


class NotOrthogonalError(DomainError):
    """A polarimetric transform matrix failed the orthogonality check."""


class DecompositionError(DomainError):
    """Polar decomposition failed for the given Mueller matrix."""


class DegenerateDiattenuationError(DecompositionError):
    """Diattenuation vector magnitude at or above 1; the factor is singular."""


class SingularDepolarizerError(DecompositionError):
    """Depolarizer sub-matrix is singular; retarder cannot be separated."""


class EmptyMaskError(DomainError):
    """A metric was requested over a mask with no usable pixels."""


class FormatError(PolarAugError):
    """Malformed or unsupported input file (exit code 2 at the CLI)."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionUnsupportedError(FormatError):
    """File declares a format version this reader does not handle."""


class UnsupportedDtypeError(FormatError):
    """Array dtype is not little-endian f4/f8."""


class FortranOrderUnsupportedError(FormatError):
    """Array is stored in Fortran (column-major) order."""


class ShapeMismatchError(FormatError):
    """Array shape is not accepted, or payload size disagrees with header."""
