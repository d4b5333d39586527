"""Exception types raised across the package."""


class PulseforgeError(Exception):
    """Base class for all package errors."""


class WaveformError(PulseforgeError, ValueError):
    """Invalid waveform samples (non-finite, wrong length, negative power)."""


class GridError(PulseforgeError, ValueError):
    pass


class WindowError(PulseforgeError, ValueError):
    pass


class ParseError(PulseforgeError, ValueError):
    """CSV parse failure. ``row`` is the 1-based line number in the file."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ParameterError(PulseforgeError, ValueError):
    pass


class InversionError(PulseforgeError, ArithmeticError):
    pass


class DataError(PulseforgeError, ValueError):
    pass


class PlantError(PulseforgeError, RuntimeError):
    """Plant evaluation failed inside the closed loop."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"plant evaluation failed at iteration {iteration}: {message}")


class FitDegenerateError(PulseforgeError, ValueError):
    pass


class ConfigError(PulseforgeError, ValueError):
    pass


class SelectionError(PulseforgeError, ValueError):
    def __init__(self, message: str, count: int):
        self.count = count
        super().__init__(f"{message} ({count} pulses qualify)")


class TimingError(PulseforgeError, ValueError):
    def __init__(self, message: str, deficit: float):
        self.deficit = deficit
        super().__init__(f"{message} (deficit {deficit:.6g} s)")
