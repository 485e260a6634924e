"""Exception types shared across the simulator."""


class WrenchSimError(Exception):
    pass


class NonpositiveTimestep(WrenchSimError, ValueError):
    pass


class EmptySystem(WrenchSimError, ValueError):
    pass


class SingularDenominator(WrenchSimError, ArithmeticError):
    """Mass sample rejected: vertical acceleration too close to gravity."""


class InsufficientSamples(WrenchSimError):
    pass


class OutsideWindow(WrenchSimError):
    pass


class EmptyWindow(WrenchSimError, ValueError):
    pass


class NumericalDivergence(WrenchSimError, FloatingPointError):
    pass


class ScenarioError(WrenchSimError, ValueError):
    """Invalid scenario configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        parts = []
        if field:
            parts.append(field)
        if line is not None:
            parts.append(f"line {line}")
        prefix = f"[{', '.join(parts)}] " if parts else ""
        super().__init__(prefix + message)


class TaskAborted(WrenchSimError):
    """Pick-and-place run stopped before completion.

    ``reason`` is a short machine-readable tag (``NotIdentifiable``,
    ``WaypointTimeout``, ``InsufficientMassSamples``).
    """

    def __init__(self, reason, detail="", report=None, log=None):
        self.reason = reason
        self.detail = detail
        self.report = report
        self.log = log
        super().__init__(f"{reason}: {detail}" if detail else reason)
