"""Exception hierarchy shared by every subsystem."""


class ObjNavError(Exception):
    """Base class for all errors raised by objnav."""


class ConfigError(ObjNavError):
    """Invalid configuration or usage (bad flag, unknown kind, bad split)."""


class ContractError(ObjNavError):
    """A precondition of an operation was violated."""


class DimensionError(ContractError):
    """Tensor shapes do not agree."""


class GenerationError(ObjNavError):
    """A house or dataset could not be generated from the given parameters."""


class SamplingError(GenerationError):
    """No valid episode could be sampled after the bounded number of retries."""


class Unreachable(ObjNavError):
    """The target cannot be reached from the given position."""
