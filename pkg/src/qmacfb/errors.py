"""Exception hierarchy shared by all qmacfb modules."""


class QmacError(Exception):
    """Base class for every error raised by qmacfb."""


class InvalidState(QmacError, ValueError):
    """A matrix failed one of the density-operator invariants."""


class NotHermitian(InvalidState):
    pass


class NotPSD(InvalidState):
    pass


class TraceNotOne(InvalidState):
    pass


class NotTracePreserving(QmacError, ValueError):
    pass


class DimensionMismatch(QmacError, ValueError):
    pass


class DimensionCapExceeded(QmacError, ValueError):
    pass


class DuplicateLabel(QmacError, ValueError):
    pass


class UnknownLabel(QmacError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class LabelOverlap(QmacError, ValueError):
    pass


class MissingLabel(UnknownLabel):
    pass


class MissingStateAssignment(QmacError, ValueError):
    pass


class InvalidEpsilon(QmacError, ValueError):
    pass


class DomainError(QmacError, ValueError):
    pass


class EmptyGrid(QmacError, ValueError):
    pass


class InvalidNetwork(QmacError, ValueError):
    pass


class InvalidConfig(QmacError, ValueError):
    pass


class InvalidRates(QmacError, ValueError):
    pass


class NotClassicalComplete(QmacError, ValueError):
    pass


class LengthMismatch(QmacError, ValueError):
    pass
