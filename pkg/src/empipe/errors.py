"""Exception hierarchy shared by every layer of the framework."""


class EmpipeError(Exception):
    """Base class for all framework errors."""


# -- streams ---------------------------------------------------------------

class StreamError(EmpipeError, OSError):
    """A stream file could not be used as requested."""


class StreamFormatError(StreamError):
    """On-disk header is corrupt or does not match the requested item size."""


class EndOfStream(StreamError, EOFError):
    """Read past the last item (or before the first, when reading backwards)."""


# -- memory ----------------------------------------------------------------

class MemoryBudgetError(EmpipeError):
    pass


class InsufficientMemoryError(MemoryBudgetError):
    """The minimum requirements of a phase exceed the memory available to it."""

    def __init__(self, required, available):
        self.required = required
        self.available = available
        self.shortfall = required - available
        super().__init__(
            f"insufficient memory: minimum requirements total {required} bytes "
            f"but only {available} are available (short by {self.shortfall})"
        )


class BudgetExceededError(MemoryBudgetError):
    """Registering an allocation would exceed the application-wide limit."""

    def __init__(self, requested, remaining):
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"memory budget exceeded: requested {requested} bytes, "
            f"{remaining} remaining"
        )


# -- nodes and metadata ----------------------------------------------------

class ContractViolation(EmpipeError):
    """A node was driven outside its lifecycle contract."""


class LifecycleError(ContractViolation):
    pass


class MissingMetadataError(EmpipeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing metadata"


class MetadataTypeError(EmpipeError, TypeError):
    pass


# -- flow graph ------------------------------------------------------------

class GraphValidationError(EmpipeError):
    pass


class BlockingComponentConflict(GraphValidationError):
    """Both halves of a blocking component ended up in one phase."""


class PhaseCycleError(GraphValidationError):
    pass


class InitiatorError(GraphValidationError):
    pass


# -- execution -------------------------------------------------------------

class PipelineError(EmpipeError):
    """A node failed while a phase was executing."""

    def __init__(self, message, phase=None, node=None):
        self.phase = phase
        self.node = node
        super().__init__(message)


class TimeDbFormatError(EmpipeError, ValueError):
    def __init__(self, path, lineno, reason):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {reason}")
