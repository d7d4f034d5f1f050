"""Exception types shared across the package."""


class RgbdvoError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RgbdvoError):
    pass


class InvalidDepthError(RgbdvoError):
    pass


class BehindCameraError(RgbdvoError):
    pass


class SampleOutOfBoundsError(RgbdvoError):
    pass


class NearSingularError(RgbdvoError):
    pass


class ShapeError(RgbdvoError):
    pass


class TrackingDegenerateError(RgbdvoError):
    pass


class DegenerateGeometryError(RgbdvoError):
    pass


class ProviderIoError(RgbdvoError):
    pass


class MissingGroundTruthError(RgbdvoError):
    pass


class DatasetError(RgbdvoError):
    pass


class InsufficientOverlapError(RgbdvoError):
    pass
