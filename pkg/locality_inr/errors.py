"""
Exception hierarchy for the locality-aware INR package.

Every error also derives from the builtin a caller would naturally catch
(ValueError, RuntimeError, FileNotFoundError), so `except ValueError`
keeps working around config and shape problems.
"""


class INRError(Exception):
    """Base class for all package errors."""


class DimensionError(INRError, ValueError):
    """Operand shapes do not agree."""


class ContractError(INRError, ValueError):
    """A documented precondition of an operation was violated."""


class ConfigError(INRError, ValueError):
    """Invalid configuration value. `field` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class FormatError(INRError, ValueError):
    """Checkpoint / archive container could not be decoded."""


class DatasetError(INRError, FileNotFoundError):
    """Dataset missing, empty or unreadable."""


class TrainingDivergedError(INRError, RuntimeError):
    """Loss became non-finite. Carries the diagnostic needed to reproduce it."""

    def __init__(self, step: int, lr: float, grad_norms: dict):
        self.step = step
        self.lr = lr
        self.grad_norms = dict(grad_norms)
        worst = sorted(self.grad_norms.items(), key=lambda kv: -_finite_or_inf(kv[1]))[:5]
        detail = ", ".join(f"{name}={norm:.3e}" for name, norm in worst)
        super().__init__(f"non-finite loss at step {step} (lr={lr:g}); largest grad norms: {detail}")


class BandwidthOrderWarning(UserWarning):
    """Bandwidths are not ordered sigma_1 >= ... >= sigma_L >= sigma_q."""


def _finite_or_inf(value: float) -> float:
    return value if value == value else float('inf')
