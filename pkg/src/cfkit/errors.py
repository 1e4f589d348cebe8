"""Exception hierarchy shared by every cfkit module."""


class CFError(Exception):
    """Base class for all cfkit errors."""


class DomainError(CFError, ValueError):
    """An argument lies outside its documented domain (bad index, ratio, k...)."""


class ParseError(CFError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RatingDomainError(ParseError):
    """Rating value outside [1, 5]."""


class DuplicateRatingError(ParseError):
    """The same (user, item) pair appears twice in one dataset."""


class EmptyDatasetError(CFError, ValueError):
    pass


class UnknownIdError(CFError, KeyError):
    """Raw user/item identifier not present in the id maps (cold entity)."""


class TrainingError(CFError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class UndefinedMetricError(CFError, ValueError):
    """No user qualifies for the metric being computed."""


class ModelVersionError(CFError, ValueError):
    pass


class ModelCorruptError(CFError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class DatasetMissingError(CFError, FileNotFoundError):
    pass
