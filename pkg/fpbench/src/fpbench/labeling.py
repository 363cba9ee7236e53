"""Batch labeling: run the FP solver over a JSONL dataset.

Per-sample solves are independent; --jobs > 1 fans them out over a
process pool.  Individual failures are recorded in the summary and
never abort the batch.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .records import (attach_label, read_records, record_to_sample,
                      write_records)
from .solver import FpConfig, fp_solve

log = logging.getLogger(__name__)


@dataclass
class LabelSummary:
    total: int = 0
    labeled: int = 0
    failed: int = 0
    failures: list[dict] = field(default_factory=list)
    warnings: int = 0

    def to_dict(self) -> dict:
        return {"total": self.total, "labeled": self.labeled,
                "failed": self.failed, "warnings": self.warnings,
                "failures": self.failures}


def _solve_one(args: tuple[int, dict, FpConfig]) -> tuple[int, dict, dict]:
    index, rec, config = args
    try:
        result = fp_solve(record_to_sample(rec), config)
    except Exception as exc:  # defensive: a crash must not kill the batch
        return index, rec, {"failure": f"unexpected error: {exc}",
                            "warnings": []}
    if result.label is None:
        return index, rec, {"failure": result.failure,
                            "warnings": result.warnings}
    return index, attach_label(rec, result.label), {
        "failure": None, "warnings": result.warnings}


def label_records(records: list[dict], config: FpConfig,
                  jobs: int = 1) -> tuple[list[dict], LabelSummary]:
    """Label a list of parsed records, preserving input order."""
    summary = LabelSummary(total=len(records))
    tasks = [(i, rec, config) for i, rec in enumerate(records)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    out: list[dict] = [rec for _, rec, _ in sorted(results)]
    for index, _, status in sorted(results):
        if status["failure"] is None:
            summary.labeled += 1
        else:
            summary.failed += 1
            summary.failures.append({"index": index,
                                     "reason": status["failure"]})
            log.warning("sample %d unlabeled: %s", index, status["failure"])
        summary.warnings += len(status["warnings"])
        for note in status["warnings"]:
            log.info("sample %d: %s", index, note)
    return out, summary


def label_dataset(in_path: str, out_path: str, config: FpConfig,
                  jobs: int = 1) -> LabelSummary:
    """Read a JSONL dataset, label it, and write the result."""
    records = read_records(in_path)
    labeled, summary = label_records(records, config, jobs=jobs)
    write_records(out_path, labeled)
    return summary
