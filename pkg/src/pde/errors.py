"""Exception types shared across the evaluation harness."""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""


class RasterFormatError(HarnessError):
    """Malformed or truncated raster file (bad magic, header, or payload)."""


class ManifestError(HarnessError):
    """Manifest fails schema validation.

    ``location`` is a dotted path into the JSON document, e.g.
    ``groups[2].variants[0].perturbation``.
    """

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class DegenerateFitError(HarnessError):
    """Alignment fit has no unique solution (too few pixels, zero variance)."""


class EmptyMaskError(HarnessError):
    """Evaluation mask contains no usable pixels."""


class DataError(HarnessError):
    """Pixel values violate a metric's domain (e.g. non-positive reference)."""


class RecordSkipped(HarnessError):
    """A record was skipped; carries the reason for diagnostics."""

    def __init__(self, model: str, group_id: str, variant_index: int, reason: str):
        self.model = model
        self.group_id = group_id
        self.variant_index = variant_index
        self.reason = reason
        super().__init__(
            f"model={model} group={group_id} variant={variant_index}: {reason}"
        )


class GroupEvalError(HarnessError):
    """A whole scene group could not be evaluated (base missing/degenerate)."""


class TableError(HarnessError):
    """Result table is malformed (parse failure, inconsistent cells)."""


class RankingError(HarnessError):
    """Ranking requested over a table with missing cells."""
