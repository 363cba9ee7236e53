"""FP/SDR benchmark labeler for RSMA beamforming JSONL datasets."""

from .labeling import LabelSummary, label_dataset, label_records
from .records import (FpLabel, FpSample, attach_label, common_capacity,
                      feasibility_margins, is_feasible, read_records,
                      record_to_sample, sinr, write_records, wsr)
from .solver import FpConfig, FpResult, FpSolverError, fp_solve

__all__ = [
    "FpConfig", "FpLabel", "FpResult", "FpSample", "FpSolverError",
    "LabelSummary", "attach_label", "common_capacity",
    "feasibility_margins", "fp_solve", "is_feasible", "label_dataset",
    "label_records", "read_records", "record_to_sample", "sinr",
    "write_records", "wsr",
]

__version__ = "0.1.0"
