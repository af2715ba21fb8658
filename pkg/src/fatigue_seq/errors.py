"""Exception types shared across the package."""


class InputError(ValueError):
    """An argument has the wrong shape, range or content."""


class StateError(RuntimeError):
    """An object was used before it reached the required state."""
