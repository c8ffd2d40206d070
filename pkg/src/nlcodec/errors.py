"""Exception types shared across the codec."""


class CorruptStreamError(Exception):
    """A container or coded segment failed an integrity check."""


class WrongModelError(Exception):
    """Container was produced with a different weight store than supplied."""


class ResourceLimitError(ValueError):
    """Requested problem size exceeds the enumeration budget."""
