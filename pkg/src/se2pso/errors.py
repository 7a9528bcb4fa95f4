"""Exception types raised across the planner."""


class PlannerError(Exception):
    """Base class for every error raised by this package."""


class NotReachable(PlannerError):
    pass


class ZeroLengthRotation(PlannerError):
    pass


class LengthMismatch(PlannerError):
    pass


class TooShort(PlannerError):
    pass


class HorizonExhausted(PlannerError):
    pass


class HorizonMismatch(PlannerError):
    pass


class IndexOutOfHorizon(PlannerError):
    pass


class ParseError(PlannerError):
    """Scenario text could not be parsed; carries an optional line number."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(PlannerError):
    pass


class NoValidParticle(PlannerError):
    pass


class PlanningFailure(PlannerError):
    def __init__(self, cycle: int, reason: str):
        self.cycle = cycle
        self.reason = reason
        super().__init__(f"planning failed in cycle {cycle}: {reason}")
