"""Exception types raised across the package.

Every operational failure maps to one of these classes so callers (and the
CLI exit-code logic) can distinguish bad configuration from bad data or a
diverging model without string matching.
"""

from __future__ import annotations


class BlockcastError(Exception):
    """Base class for all package errors."""


# --- data ingestion / splitting ---

class EmptyFile(BlockcastError):
    """CSV has no header or no data rows."""


class MissingColumn(BlockcastError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} not found in CSV header")
        self.column = column


class NonNumericCell(BlockcastError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(
            f"cell at data row {row}, column {column!r} is not a finite number: {value!r}"
        )
        self.row = row
        self.column = column
        self.value = value


class DegenerateSplit(BlockcastError):
    """A nominal split segment came out empty."""


class ZeroVariance(BlockcastError):
    def __init__(self, channel: str):
        super().__init__(f"channel {channel!r} has zero variance on the fit segment")
        self.channel = channel


# --- model construction / evaluation ---

class InvalidSpec(BlockcastError):
    """Model specification violates its invariants."""


class ShapeMismatch(BlockcastError):
    """Array input does not match the shape the model was built for."""


class EmptyBatch(BlockcastError):
    """loss_and_grad called with no samples."""


class EmptySegment(BlockcastError):
    """Output segment selects no time steps."""


class LengthMismatch(BlockcastError):
    """Flat parameter vector length differs from the model's parameter count."""


# --- rollout ---

class AccumLengthMismatch(BlockcastError):
    """Accumulated-prediction buffer has the wrong number of rows for step k."""


class InsufficientTruth(BlockcastError):
    """Ground-truth horizon too short for the requested teacher-forced step."""


class NonFiniteBlock(BlockcastError):
    """A rollout block contained NaN/Inf; the model diverged."""

    def __init__(self, k: int, trace=None):
        super().__init__(f"non-finite values in rollout block k={k}")
        self.k = k
        self.trace = trace


class ShortInput(BlockcastError):
    """Prediction input has fewer rows than the model's input length."""


# --- training ---

class NoTrainWindows(BlockcastError):
    """Training segment too short to cut a single (T, L) window."""


class NoValWindows(BlockcastError):
    """Validation segment too short to cut a single (T, L) window."""


# --- gradient analysis ---

class ZeroNormGradient(BlockcastError):
    """Cosine similarity undefined: a gradient has zero norm."""


class ZeroTotalGradient(BlockcastError):
    """Norm ratio undefined: the full-horizon gradient has zero norm."""


# --- evaluation ---

class NoTestWindows(BlockcastError):
    """Test segment too short for a single (T, H) window."""


class ModeMismatch(BlockcastError):
    """Direct evaluation requested with output horizon shorter than H."""


class HorizonExceedsData(BlockcastError):
    """Requested horizon leaves no evaluation window."""


class UnmatchedCell(BlockcastError):
    """A win-ratio cell is present on one side of the comparison only."""


# --- CLI ---

class ConfigError(BlockcastError):
    """Run configuration is missing, malformed, or references absent files."""
