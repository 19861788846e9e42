"""Exceptions raised by the laboratory and the exit codes they map to."""

from typing import Optional

from qavc.constants import EXIT_RESOURCE_CAP, EXIT_VALIDATION, EXIT_VERIFICATION


class QavcError(Exception):
    """Base class for all laboratory errors."""

    exit_code = EXIT_VALIDATION


class ShapeError(QavcError, ValueError):
    """Operand dimensions do not fit together."""


class DomainError(QavcError, ValueError):
    """An input lies outside the domain of the operation."""


class SizeError(QavcError):
    """A configured resource cap would be exceeded."""

    exit_code = EXIT_RESOURCE_CAP


class VerificationError(QavcError):
    """A checked inequality or identity does not hold."""

    exit_code = EXIT_VERIFICATION


class DerandomizationError(VerificationError):
    """No sample passed the operator-order test within the attempt budget."""

    def __init__(
        self,
        attempts: int,
        failures: int,
        best_error: float,
        target: float,
        tail_bound: float,
    ):
        """Capture the diagnostics of the failed sampling run.

        best_error is the smallest worst-case error any rejected sample reached.
        """
        super().__init__(
            f"operator-order test failed in {failures} of {attempts} attempts "
            f"(best worst-case error {best_error:.4f} against target {target:.4f}, "
            f"tail bound {tail_bound:.3g})"
        )
        self.attempts = attempts
        self.failure_rate = failures / attempts if attempts else 1.0
        self.best_error = best_error
        self.target = target
        self.tail_bound = tail_bound


class NetConvergenceError(VerificationError):
    """A covering net could not be validated within the iteration cap."""

    def __init__(self, eta: float, best_radius: float, iterations: int):
        """Capture the best covering radius reached."""
        super().__init__(
            f"net for eta={eta} not validated after {iterations} rounds; "
            f"best radius {best_radius:.6g}"
        )
        self.eta = eta
        self.best_radius = best_radius
        self.iterations = iterations


class TelescopeStepError(VerificationError):
    """A per-letter approximation step could not meet its bound."""

    def __init__(self, step: int, reason: Optional[str] = None):
        """Capture the failing step index."""
        message = f"telescoping step {step} failed"
        if reason:
            message += f": {reason}"
        super().__init__(message)
        self.step = step
