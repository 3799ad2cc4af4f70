"""Exception hierarchy shared by every gridiql module."""


class GridIQLError(Exception):
    """Base class for all errors raised by gridiql."""


class GridDomainError(GridIQLError, ValueError):
    """A value outside an operation's domain (bad cell, bad parameter, ...).

    `name` is the offending parameter or field when one can be named.
    """

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class MapParseError(GridIQLError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(GridIQLError):
    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DeadEnd(GridIQLError):
    """An ant has no untried legal neighbor left."""


class NoPathFound(GridIQLError):
    """PACO finished without any ant reaching the goal.

    `unreachable` is True when the goal cannot be reached at all, False when
    the iteration budget simply ran out. `seed` is filled in by the harness.
    """

    def __init__(self, message, unreachable, seed=None):
        super().__init__(message)
        self.unreachable = unreachable
        self.seed = seed

    def __reduce__(self):
        # keep the extra fields when crossing a process boundary
        return type(self), (self.args[0], self.unreachable, self.seed)

    def __str__(self):
        text = super().__str__()
        if self.seed is not None:
            text = f"{text} (seed {self.seed})"
        return text
