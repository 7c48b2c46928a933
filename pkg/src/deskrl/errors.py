"""Shared exception types and process exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3


class ConfigError(Exception):
    """Bad configuration: unknown key, invalid value, shape mismatch at build time."""


class ContractViolation(Exception):
    """A caller broke an API precondition (non-scalar loss, empty trajectory, ...)."""


class DegenerateInputError(ContractViolation):
    """Input too small/degenerate for the requested operation."""


class TrainingFault(Exception):
    """Non-finite values detected during training; carries the step it happened at."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
