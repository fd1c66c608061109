"""Exception hierarchy.

Every error raised on bad input derives from :class:`VekError` so the CLI can
map it to exit code 1. Subclasses also derive from the closest builtin
(``ValueError``, ``KeyError``, ``OSError``) so ordinary ``except`` clauses work.
"""


class VekError(Exception):
    """Base class for all library errors."""


# numerics


class DimensionError(VekError, ValueError):
    pass


class DegenerateData(VekError, ValueError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class ZeroVariance(VekError, ValueError):
    pass


class NoPositives(VekError, ValueError):
    pass


class SingleClass(VekError, ValueError):
    pass


class NonFiniteLoss(VekError, ArithmeticError):
    def __init__(self, epoch):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class EmptyReference(VekError, ValueError):
    pass


# dataio


class ParseError(VekError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = _where(path, line)
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path


class SchemaError(VekError, ValueError):
    def __init__(self, message, field=None, line=None, path=None):
        where = _where(path, line)
        label = f"field {field!r}: " if field else ""
        super().__init__(f"{where}{label}{message}")
        self.field = field
        self.line = line
        self.path = path


class DuplicateId(VekError, ValueError):
    def __init__(self, instance_id, line=None, path=None):
        super().__init__(f"{_where(path, line)}duplicate id {instance_id!r}")
        self.id = instance_id
        self.line = line


class UnknownInstance(VekError, KeyError):
    def __init__(self, instance_id, line=None, path=None):
        super().__init__(f"{_where(path, line)}unknown instance id {instance_id!r}")
        self.id = instance_id
        self.line = line

    def __str__(self):
        return self.args[0]


class LengthMismatch(VekError, ValueError):
    def __init__(self, instance_id, expected, got, line=None, path=None):
        super().__init__(
            f"{_where(path, line)}instance {instance_id!r}: expected length "
            f"{expected}, got {got}"
        )
        self.id = instance_id
        self.line = line


class IoError(VekError, OSError):
    pass


# pu


class EmptyValidation(VekError, ValueError):
    pass


class InvalidC(VekError, ValueError):
    pass


class MissingWeight(VekError, KeyError):
    def __init__(self, instance_id):
        super().__init__(f"no PU weight for unlabelled instance {instance_id!r}")
        self.id = instance_id

    def __str__(self):
        return self.args[0]


# ssa


class MissingClassSeed(VekError, ValueError):
    def __init__(self, cls):
        super().__init__(f"class {cls!r} has no labelled target sample")
        self.cls = cls


class InsufficientClassSamples(VekError, ValueError):
    def __init__(self, cls, count, needed):
        super().__init__(
            f"class {cls!r} has {count} samples, at least {needed} are needed"
        )
        self.cls = cls
        self.count = count


# xdiag


class MissingSaliency(VekError, KeyError):
    def __init__(self, instance_id, cls=None):
        suffix = f" at class {cls}" if cls is not None else ""
        super().__init__(f"no saliency for instance {instance_id!r}{suffix}")
        self.id = instance_id
        self.cls = cls

    def __str__(self):
        return self.args[0]


class MissingClass(VekError, KeyError):
    def __init__(self, cls):
        super().__init__(f"no saliency scores for class {cls}")
        self.cls = cls

    def __str__(self):
        return self.args[0]


class TooFewInstances(VekError, ValueError):
    pass


class MaskUnsupported(VekError, TypeError):
    pass


class GradientUnsupported(VekError, TypeError):
    pass


# explain


class NoSentences(VekError, ValueError):
    pass


class IdMismatch(VekError, ValueError):
    pass


def _where(path, line):
    if path is not None and line is not None:
        return f"{path}:{line}: "
    if line is not None:
        return f"line {line}: "
    if path is not None:
        return f"{path}: "
    return ""
