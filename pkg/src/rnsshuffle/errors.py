"""Exception types shared across the package."""


class RnsShuffleError(Exception):
    """Base class for all errors raised by this package."""


class RangeExceeded(RnsShuffleError, ValueError):
    """An integer falls outside the signed range representable by a context."""


class ContextMismatch(RnsShuffleError, ValueError):
    """Two residue vectors were produced under different moduli sets."""


class InvalidContext(RnsShuffleError, ValueError):
    """Moduli are not pairwise coprime, unsorted, or not admissible."""


class OutOfRange(RnsShuffleError, ValueError):
    """A real parameter lies outside the open interval (-1, 1)."""


class Overflow(RnsShuffleError, ValueError):
    """A value does not fit in the requested unary/count capacity."""


class LayoutMismatch(RnsShuffleError, ValueError):
    """Models with different parameter layouts were combined."""


class InvalidCluster(RnsShuffleError, ValueError):
    """Cluster size outside [1, n]."""


class ConfigInvalid(RnsShuffleError, ValueError):
    """An experiment or mixnet configuration failed validation."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class FormatError(RnsShuffleError, ValueError):
    """A binary dump file is malformed or has an unknown version."""
