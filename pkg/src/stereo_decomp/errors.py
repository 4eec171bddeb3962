"""Exception types shared across the package."""


class StereoError(Exception):
    pass


class InvalidInputError(StereoError, ValueError):
    """Array shapes or values violate an operation's precondition."""


class InvalidConfigError(StereoError, ValueError):
    """A configuration is inconsistent with the input it is applied to."""


class FormatError(StereoError, ValueError):
    """A PGM/PFM/config file could not be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
