"""Domain errors. The CLI maps any ``OuterFaceError`` to exit code 1."""


class OuterFaceError(Exception):
    """Base class for all domain errors raised by the package."""


# geometry
class DegenerateLandmarks(OuterFaceError):
    pass


class OutOfBounds(OuterFaceError):
    pass


class EmptySubset(OuterFaceError):
    pass


class DimMismatch(OuterFaceError):
    pass


# embedding
class NonFiniteActivation(OuterFaceError):
    pass


class NormalizationDegenerate(OuterFaceError):
    pass


class LabelOutOfRange(OuterFaceError):
    pass


class DivergedTraining(OuterFaceError):
    pass


class EmptyCorpus(OuterFaceError):
    pass


class FakeInTrainingSplit(OuterFaceError):
    """Raised when a training manifest carries a fake-labeled entry."""


class CheckpointError(OuterFaceError):
    pass


# verification
class PoolTooSmall(OuterFaceError):
    pass


class DegenerateMean(OuterFaceError):
    pass


class PreprocessingMismatch(OuterFaceError):
    pass


# degradation
class UnsupportedDims(OuterFaceError):
    pass


class CodecFailure(OuterFaceError):
    pass


# evaluation
class SingleClass(OuterFaceError):
    pass


class TooFewPairs(OuterFaceError):
    pass


# corpus
class InsufficientFrames(OuterFaceError):
    pass


class NoEligibleReferences(OuterFaceError):
    pass


class IoFailure(OuterFaceError):
    pass


class ManifestError(OuterFaceError):
    pass
