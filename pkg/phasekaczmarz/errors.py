# /phasekaczmarz/phasekaczmarz/errors.py


class PhaseKaczmarzError(Exception):
    """Base class for all library errors."""


class ContractViolation(PhaseKaczmarzError, ValueError):
    """An operation was called outside its preconditions."""


class DomainError(ContractViolation):
    """A zero vector was given where a direction is required."""


class ZeroMeasurementError(ContractViolation):
    def __init__(self, index):
        super().__init__(f"measurement vector {index} is zero")
        self.index = index


class ParseError(PhaseKaczmarzError, ValueError):
    def __init__(self, message, path=None, line=None):
        location = ''
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ': '
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class DigestMismatch(PhaseKaczmarzError):
    def __init__(self, expected, found):
        super().__init__(f"observation is bound to system {found}, expected {expected}")
        self.expected = expected
        self.found = found


class EigenSolverError(PhaseKaczmarzError, RuntimeError):
    """The symmetric eigen-solver failed to converge."""
