"""
Base class for verification runs.

Collects check results, CSV tables and timings from possibly concurrent
pipeline steps behind one lock, and writes them out atomically.
"""
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from utils.report_utils import dumps_json, format_csv, to_builtin, write_atomic

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    measured: Any
    expected: Any
    tolerance: Optional[float]
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "measured": self.measured,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


class RunReport:
    def __init__(self, command: str, inputs: Dict[str, Any], timing: bool = True) -> None:
        self.command = command
        self.inputs = dict(inputs)
        self.timing = timing
        self.checks: List[CheckResult] = []
        self.results: Dict[str, Any] = {}
        self.tables: Dict[str, Tuple[List[str], List[List[Any]]]] = {}
        self.timings: Dict[str, float] = {}
        self.error: Optional[Dict[str, Any]] = None
        self.lock = threading.Lock()

    def check_close(self, name: str, measured: float, expected: float, tolerance: float) -> CheckResult:
        """pass iff |measured - expected| <= tolerance."""
        passed = abs(float(measured) - float(expected)) <= tolerance
        return self._add(CheckResult(name, float(measured), float(expected), tolerance, passed))

    def check_at_most(self, name: str, measured: float, bound: float) -> CheckResult:
        return self._add(CheckResult(name, float(measured), float(bound), None, float(measured) <= bound))

    def check_at_least(self, name: str, measured: float, bound: float) -> CheckResult:
        return self._add(CheckResult(name, float(measured), float(bound), None, float(measured) >= bound))

    def check_equal(self, name: str, measured: Any, expected: Any) -> CheckResult:
        return self._add(CheckResult(name, measured, expected, None, measured == expected))

    def _add(self, result: CheckResult) -> CheckResult:
        with self.lock:
            self.checks.append(result)
        status = "pass" if result.passed else "FAIL"
        logger.info(f"check {result.name}: {status} (measured {result.measured}, expected {result.expected})")
        return result

    def set_result(self, key: str, value: Any) -> None:
        with self.lock:
            self.results[key] = value

    def add_table(self, name: str, header: Sequence[str]) -> None:
        with self.lock:
            self.tables.setdefault(name, (list(header), []))

    def add_row(self, name: str, row: Sequence[Any]) -> None:
        with self.lock:
            self.tables[name][1].append(list(row))

    @contextmanager
    def timed(self, label: str) -> Iterator[None]:
        start = time.time()
        try:
            yield
        finally:
            with self.lock:
                self.timings[label] = time.time() - start

    def record_error(self, exc: Exception, exit_code: int) -> None:
        """Record the error; a partial result attached to it (``exc.report``) is kept under "partial"."""
        error: Dict[str, Any] = {"type": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
        partial = getattr(exc, "report", None)
        if partial is not None:
            error["partial"] = to_builtin(partial)
        with self.lock:
            self.error = error

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        with self.lock:
            out: Dict[str, Any] = {
                "schema_version": SCHEMA_VERSION,
                "command": self.command,
                "inputs": self.inputs,
                "results": self.results,
                "checks": [c.to_dict() for c in sorted(self.checks, key=lambda c: c.name)],
                "pass": all(c.passed for c in self.checks),
            }
            if self.error is not None:
                out["error"] = self.error
            if self.timing:
                out["timings"] = dict(self.timings)
        return out

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def write(self, output_dir: Optional[Path]) -> List[Path]:
        """Write every CSV table collected so far and the JSON report; returns the paths."""
        if output_dir is None:
            return []
        output_dir = Path(output_dir)
        written = []
        with self.lock:
            tables = {name: (header, list(rows)) for name, (header, rows) in self.tables.items()}
        for name, (header, rows) in sorted(tables.items()):
            written.append(write_atomic(output_dir / f"{name}.csv", format_csv(header, rows)))
        written.append(write_atomic(output_dir / f"{self.command}_report.json", self.to_json()))
        return written
