"""Exception types raised across the package."""


class StreamAsrError(Exception):
    """Base class for all package errors."""


class ClipTooShort(StreamAsrError, ValueError):
    pass


class InvalidClip(StreamAsrError, ValueError):
    pass


class FeatureFileError(StreamAsrError, ValueError):
    pass


class EmptyCatalog(StreamAsrError, ValueError):
    pass


class EmptyNoiseList(StreamAsrError, ValueError):
    pass


class InvalidScene(StreamAsrError, ValueError):
    pass


class WarpOutOfRange(StreamAsrError, ValueError):
    pass


class LabelOutOfVocab(StreamAsrError, ValueError):
    pass


class DimensionMismatch(StreamAsrError, ValueError):
    pass


class InfeasibleLength(StreamAsrError, ValueError):
    pass


class BadSmoothing(StreamAsrError, ValueError):
    pass


class LambdaOutOfRange(StreamAsrError, ValueError):
    pass


class ShapeMismatch(StreamAsrError, ValueError):
    pass


class NonFiniteLoss(StreamAsrError, FloatingPointError):
    """Raised when a training loss is NaN/inf; carries the offending utterance id."""

    def __init__(self, utt_id):
        super().__init__(f"non-finite loss for utterance {utt_id!r}")
        self.utt_id = utt_id


class EmptyReference(StreamAsrError, ValueError):
    pass


class EmptySet(StreamAsrError, ValueError):
    pass


class CorpusEmpty(StreamAsrError, ValueError):
    pass


class ConfigError(StreamAsrError, ValueError):
    pass
