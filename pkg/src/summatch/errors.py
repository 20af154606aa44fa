"""Exception family shared across the package.

The CLI maps these onto its exit-code contract: configuration and data
validation problems exit 1, failures during a run exit 2.
"""


class SummatchError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(SummatchError):
    """A data file is missing, unreadable, or structurally broken."""


class ValidationError(DatasetError):
    """A record violates the example schema (placeholder, options, label)."""


class ComposeError(SummatchError):
    """Input composition failed (placeholder misuse, budget too small)."""


class ConfigError(SummatchError):
    """Invalid or inconsistent configuration."""


class CheckpointError(SummatchError):
    """A checkpoint file is unreadable or incompatible."""


class TrainingError(SummatchError):
    """Training aborted (non-finite loss, unwritable checkpoint)."""


class EvaluationError(SummatchError):
    """Evaluation was asked to do something unsupported (e.g. unlabeled data)."""
