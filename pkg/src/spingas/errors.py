"""Exception types shared across the package."""


class SpinGasError(Exception):
    """Base class for all package errors."""


class ConfigError(SpinGasError, ValueError):
    """Invalid physical configuration or scenario file."""


class DegenerateGyromagneticError(SpinGasError, ValueError):
    """g_a/q == g_b: no compensation field exists."""


class IntegrationError(SpinGasError, RuntimeError):
    """Step-size underflow or integrator misuse."""


class InvariantViolation(SpinGasError, RuntimeError):
    """A state invariant (norm, trace, uncertainty relation) was broken."""
