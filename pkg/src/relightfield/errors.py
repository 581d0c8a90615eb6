"""Exception types shared across the package."""


class RelightFieldError(Exception):
    """Base class for all package-specific errors."""


class InvalidDirectionError(RelightFieldError, ValueError):
    """Direction vector is non-finite or too far from unit length."""


class FrameError(RelightFieldError, ValueError):
    """A direction was supplied in the wrong reference frame."""


class ShapeError(RelightFieldError, ValueError):
    """Array dimensions do not match what the operation requires."""


class DegenerateProbeError(RelightFieldError, ValueError):
    """Probe image carries no signal (e.g. all-zero sphere region)."""


class MissingGeometryError(RelightFieldError, ValueError):
    """Relighter needs depth/normals that the view does not provide."""


class RemoteRelightError(RelightFieldError, RuntimeError):
    """Remote relighting service failed; carries status detail."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class UnknownPresetError(RelightFieldError, ValueError):
    """Requested synthetic scene preset does not exist."""


class InsufficientPointsError(RelightFieldError, ValueError):
    """A view sees too few SfM points to estimate its near plane."""


class AugmentError(RelightFieldError, RuntimeError):
    """Dataset augmentation failed; carries (view id, light index) context."""

    def __init__(self, message, view_id=None, light_index=None):
        super().__init__(message)
        self.view_id = view_id
        self.light_index = light_index


class SceneFileError(RelightFieldError, RuntimeError):
    """Base class for scene container I/O failures."""


class BadMagicError(SceneFileError):
    """File does not start with the scene container magic."""


class BadVersionError(SceneFileError):
    """Scene container version is not supported."""


class ChecksumError(SceneFileError):
    """Scene container payload failed checksum validation."""


class DivergenceError(RelightFieldError, RuntimeError):
    """Training loss became non-finite; carries iteration context."""
