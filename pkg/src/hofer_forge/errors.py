"""Exception hierarchy shared by all modules."""


class HoferForgeError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatchError(HoferForgeError, ValueError):
    pass


class FlowBlowUpError(HoferForgeError, FloatingPointError):
    """A numerically integrated state became non-finite.

    ``time`` is the flow time at which the blow-up was detected and
    ``primitive_index`` the position of the offending primitive when the
    flow was applied as part of a map chain.
    """

    def __init__(self, message, time=None, primitive_index=None):
        super().__init__(message)
        self.time = time
        self.primitive_index = primitive_index


class ExtremizerError(HoferForgeError):
    pass


class DomainError(HoferForgeError, ValueError):
    pass


class LoopClosureError(HoferForgeError):
    pass


class CommutationError(HoferForgeError):
    pass


class SupportLeakError(HoferForgeError):
    pass


class ContainmentError(HoferForgeError, ValueError):
    pass


class DisjoinConfigError(HoferForgeError):
    pass


class DConditionError(HoferForgeError, ValueError):
    """A deformation parameter lies outside the verified neighbourhood."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class ConfigError(HoferForgeError, ValueError):
    pass
