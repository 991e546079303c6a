"""Exception types raised across the package."""


class PolyclustError(ValueError):
    """Base class for every error raised by polyclust."""


class InvalidLength(PolyclustError):
    pass


class DegenerateScale(PolyclustError):
    pass


class InvalidLag(PolyclustError):
    pass


class DegenerateVariance(PolyclustError):
    pass


class DegenerateSpectrum(PolyclustError):
    pass


class WeightArityError(PolyclustError):
    pass


class OracleSizeError(PolyclustError):
    pass


class UnstableModel(PolyclustError):
    pass


class ScenarioError(PolyclustError):
    pass


class ConstantFeature(PolyclustError):
    def __init__(self, column: str):
        super().__init__(f"feature column {column!r} has zero standard deviation")
        self.column = column


class InvalidK(PolyclustError):
    pass


class InvalidDissimilarity(PolyclustError):
    pass


class InvalidSampleSize(PolyclustError):
    pass


class DegenerateCentroids(PolyclustError):
    pass


class InputMismatch(PolyclustError):
    pass


class UndefinedAUC(PolyclustError):
    pass


class SchemaError(PolyclustError):
    pass


class ParseError(PolyclustError):
    pass


class DuplicateDate(PolyclustError):
    pass


class AsymmetryWarning(RuntimeWarning):
    """Imaginary residue of an estimate exceeds tolerance (asymmetric weight)."""
