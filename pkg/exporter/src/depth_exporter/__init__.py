"""Adapter that exports depth-model predictions in the harness exchange format."""

__version__ = "0.1.0"

from .export import ExportJob, export_predictions, merge_fragment
from .stubs import ConstantDepthModel, RampDepthModel

__all__ = [
    "ConstantDepthModel",
    "ExportJob",
    "RampDepthModel",
    "export_predictions",
    "merge_fragment",
]
