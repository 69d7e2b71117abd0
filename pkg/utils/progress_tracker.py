"""
Progress tracking for iterative optimizers
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from utils.logging_config import get_logger

logger = get_logger(__name__)

TRACE_HEADER = "iter objective grad_inf_norm step_size elapsed_ms"


@dataclass
class IterationRecord:
    """One optimizer iteration"""

    iteration: int
    objective: float
    grad_inf_norm: float
    step_size: float
    elapsed_ms: float

    def to_line(self) -> str:
        return (
            f"{self.iteration} {self.objective!r} {self.grad_inf_norm!r} "
            f"{self.step_size!r} {self.elapsed_ms:.3f}"
        )


@dataclass
class OptimizationStats:
    """Counters for one optimizer run"""

    evaluations: int = 0
    iterations: int = 0
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    stalled: bool = False
    converged: bool = False

    @property
    def elapsed_time(self) -> float:
        """Get elapsed time in seconds"""
        if self.start_time is None:
            return 0.0
        end = self.end_time or time.perf_counter()
        return end - self.start_time

    def to_dict(self) -> Dict:
        return {
            "evaluations": self.evaluations,
            "iterations": self.iterations,
            "elapsed_time": self.elapsed_time,
            "stalled": self.stalled,
            "converged": self.converged,
        }


class TrainingTrace:
    """Per-iteration objective log of an optimizer run"""

    def __init__(self, operation_name: str, trace_file: Optional[Path] = None):
        self.operation_name = operation_name
        self.trace_file = trace_file
        self.records: List[IterationRecord] = []
        self.stats = OptimizationStats()
        self.stats.start_time = time.perf_counter()

    def start(self):
        """Restart the clock"""
        self.stats.start_time = time.perf_counter()

    def mark_evaluation(self, count: int = 1):
        self.stats.evaluations += count

    def record(
        self, iteration: int, objective: float, grad_inf_norm: float, step_size: float
    ) -> IterationRecord:
        """Append an iteration record stamped with the elapsed wall time"""
        record = IterationRecord(
            iteration,
            float(objective),
            float(grad_inf_norm),
            float(step_size),
            self.stats.elapsed_time * 1000.0,
        )
        self.records.append(record)
        self.stats.iterations = iteration
        logger.debug(
            "optimizer_iteration",
            operation=self.operation_name,
            iteration=iteration,
            objective=record.objective,
            grad_inf_norm=record.grad_inf_norm,
            step_size=record.step_size,
        )
        return record

    def extend(self, other: "TrainingTrace"):
        """Append another trace's records, renumbering iterations to continue this one"""
        offset = self.records[-1].iteration if self.records else 0
        for record in other.records:
            self.records.append(
                IterationRecord(
                    record.iteration + offset,
                    record.objective,
                    record.grad_inf_norm,
                    record.step_size,
                    record.elapsed_ms,
                )
            )
        self.stats.evaluations += other.stats.evaluations
        self.stats.iterations = self.records[-1].iteration if self.records else 0

    def finish(self, converged: bool, stalled: bool = False):
        """Finish tracking"""
        self.stats.end_time = time.perf_counter()
        self.stats.converged = converged
        self.stats.stalled = stalled
        logger.info(
            "optimizer_finished",
            operation=self.operation_name,
            **self.stats.to_dict(),
        )
        if self.trace_file:
            self.save()

    @property
    def objectives(self) -> List[float]:
        return [record.objective for record in self.records]

    def format_lines(self) -> List[str]:
        return [TRACE_HEADER] + [record.to_line() for record in self.records]

    def save(self, path: Optional[Path] = None):
        """Save the trace as line-oriented records"""
        target = Path(path or self.trace_file)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(self.format_lines()) + "\n", encoding="utf-8")

    def get_progress_string(self) -> str:
        """Get current progress as string"""
        if not self.records:
            return f"{self.operation_name}: Starting..."
        last = self.records[-1]
        return (
            f"{self.operation_name}: iteration {last.iteration}, "
            f"objective {last.objective:.6f}, |grad| {last.grad_inf_norm:.3e}"
        )
