"""Exception hierarchy shared by all modules."""


class SegpartError(Exception):
    """Base class; ``code`` is the machine-readable name used in CLI error records."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ClosureOverflow(SegpartError):
    pass


class NotOrthogonal(SegpartError):
    pass


class NotAHomomorphism(SegpartError):
    pass


class MissingTransport(SegpartError):
    pass


class PointLocationFailure(SegpartError):
    pass


class ZeroComponent(SegpartError):
    pass


class NegativeInput(SegpartError):
    pass


class ComponentCollapse(SegpartError):
    pass


class NonConvergence(SegpartError):
    pass


class NotBracketed(SegpartError):
    pass


class InsufficientRange(SegpartError):
    pass


class UnknownId(SegpartError):
    pass


class IncompatibleMesh(SegpartError):
    pass


class InsufficientRange(SegpartError):
    pass


class UnknownId(SegpartError):
    pass


class IncompatibleMesh(SegpartError):
    pass
