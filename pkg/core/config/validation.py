"""Pre-flight checks for a fit run: input files, output directory and mode counts"""
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Tuple

logger = logging.getLogger(__name__)


class FitPreflight:
    """Collects failed and passed checks before a run touches the filesystem"""

    def __init__(self):
        self.errors: Dict[str, str] = {}
        self.warnings: Dict[str, str] = {}
        self.checks_passed = 0

    def _fail(self, name: str, message: str) -> bool:
        self.errors[name] = message
        return False

    def _pass(self) -> bool:
        self.checks_passed += 1
        return True

    def check_input_file(self, path: str, name: str, suffix: Optional[str] = ".csv") -> bool:
        """Readable regular file; a different suffix only warns"""
        candidate = Path(path)
        if not candidate.exists():
            return self._fail(name, f"file not found: {path}")
        if not candidate.is_file():
            return self._fail(name, f"not a regular file: {path}")
        if not os.access(candidate, os.R_OK):
            return self._fail(name, f"file is not readable: {path}")
        if suffix and candidate.suffix.lower() != suffix:
            self.warnings[name] = f"expected a {suffix} file, got {candidate.name}"
        return self._pass()

    def check_output_directory(self, path: str, name: str = "output_dir") -> bool:
        """Create the directory when missing; an existing one must be writable"""
        directory = Path(path)
        try:
            if not directory.exists():
                directory.mkdir(parents=True, exist_ok=True)
                logger.info(f"Created output directory {directory}")
                return self._pass()
        except OSError as e:
            return self._fail(name, f"cannot create {path}: {e}")
        if not directory.is_dir():
            return self._fail(name, f"output path exists and is not a directory: {path}")
        if not os.access(directory, os.W_OK):
            return self._fail(name, f"output directory is not writable: {path}")
        return self._pass()

    def check_count(self, name: str, value: int, minimum: int = 0) -> bool:
        if not isinstance(value, int) or value < minimum:
            return self._fail(name, f"{name} must be an integer ≥ {minimum}, got {value!r}")
        return self._pass()

    def report(self) -> Dict:
        return {
            "passed": self.checks_passed,
            "errors": dict(self.errors) or None,
            "warnings": dict(self.warnings) or None,
            "is_valid": not self.errors,
        }

    def log_report(self) -> None:
        for name, warning in self.warnings.items():
            logger.warning(f"Pre-flight {name}: {warning}")
        for name, error in self.errors.items():
            logger.error(f"Pre-flight {name}: {error}")
        if self.errors:
            logger.error(f"Pre-flight failed ({len(self.errors)} error(s), {self.checks_passed} checks passed)")
        else:
            logger.info(f"Pre-flight passed ({self.checks_passed} checks)")


def validate_fit_paths(
    frf_path: str,
    output_dir: str,
    covariance_path: Optional[str] = None,
    n_rbm: int = 0
) -> Tuple[bool, Dict]:
    """Check the files and directories a fit touches

    The output directory is created only when every input check passed.

    Returns:
        (is_valid, report)
    """
    preflight = FitPreflight()
    preflight.check_input_file(frf_path, "frf_path")
    if covariance_path is not None:
        preflight.check_input_file(covariance_path, "covariance_path")
    preflight.check_count("n_rbm", n_rbm)

    if not preflight.errors:
        preflight.check_output_directory(output_dir)

    report = preflight.report()
    preflight.log_report()
    return report["is_valid"], report
