"""CRT response prediction from gated SPECT MPI polarmaps and clinical features."""

__version__ = "0.1.0"

from .domain import (
    CompositePolarmap,
    PatientRecord,
    PolarmapSet,
    ResponseLabel,
    derive_label,
    validate_record,
)
from .ingest import CohortTable, SyntheticSpec, generate_synthetic_cohort, load_cohort, write_cohort
from .polarmap import BackboneInput, compose_quadrants, prepare_for_backbone, threshold_perfusion

__all__ = [
    "__version__",
    "BackboneInput",
    "CohortTable",
    "CompositePolarmap",
    "PatientRecord",
    "PolarmapSet",
    "ResponseLabel",
    "SyntheticSpec",
    "compose_quadrants",
    "derive_label",
    "generate_synthetic_cohort",
    "load_cohort",
    "prepare_for_backbone",
    "threshold_perfusion",
    "validate_record",
    "write_cohort",
]
