"""Exception hierarchy shared across the package.

Every rejected input produces one of these structured errors; callers never
see a half-loaded record or a partially applied mutation.
"""

from __future__ import annotations


class SpeechScreenError(Exception):
    """Base class for all errors raised by this package."""


# --- feature file / manifest ingestion ---------------------------------------

class FeatureFileError(SpeechScreenError):
    """A feature file failed validation."""


class BadMagicError(FeatureFileError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FeatureFileError):
    """File declares a format version this build cannot read."""


class TruncatedFileError(FeatureFileError):
    """File ended before the declared payload was complete."""


class NonFiniteValueError(FeatureFileError):
    """Payload contains a NaN or infinite value."""


class MalformedFileError(FeatureFileError):
    """Structurally invalid content (bad shape, bad enum byte, trailing data)."""


class IoFailureError(SpeechScreenError):
    """An OS-level read or write failed."""


class ManifestError(SpeechScreenError):
    """A manifest line failed validation."""


class DuplicateIdError(ManifestError):
    """The same sample_id appeared twice."""


class MissingFieldError(ManifestError):
    """A required field is absent."""


class UnknownEnumValueError(ManifestError):
    """A field holds a value outside its enum."""


# --- datastore ----------------------------------------------------------------

class DimensionMismatchError(SpeechScreenError):
    """Vector dimensionality does not match the datastore's."""


class EmptyDatastoreError(SpeechScreenError):
    """Operation requires a non-empty datastore."""


# --- segmentation -------------------------------------------------------------

class TooFewFramesError(SpeechScreenError):
    """Sequence has fewer frames than requested clusters."""


class SingleClusterError(SpeechScreenError):
    """Silhouette is undefined for fewer than two clusters."""


class NoValidCandidateError(SpeechScreenError):
    """Every sequence was skipped for every candidate cluster count."""


# --- inference / evaluation ----------------------------------------------------

class NoLabelsRetrievedError(SpeechScreenError):
    """All enabled retrieval paths came back empty after filtering."""


class SingleClassError(SpeechScreenError):
    """Metric requires both a positive and a negative label."""


class EmptyClassError(SpeechScreenError):
    """Per-class statistic requested for an empty class."""
