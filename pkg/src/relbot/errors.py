"""Exception hierarchy. The CLI maps each family onto a stable exit code."""


class RelbotError(Exception):
    exit_code = 4


class ConfigError(RelbotError):
    exit_code = 2


class InputError(RelbotError):
    exit_code = 3


class FormatError(InputError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class ContractError(RelbotError, ValueError):
    """Caller broke a dimensional or value precondition."""


class TrainingError(RelbotError):
    exit_code = 4


class TransferError(RelbotError):
    exit_code = 4


class GuardError(RelbotError):
    """A numeric guard tripped (e.g. chiller energy below the COP floor)."""

    exit_code = 4
