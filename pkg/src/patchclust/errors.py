"""Exception types shared across the pipeline.

Everything derives from :class:`PatchClustError`. Data problems subclass
:class:`DataError` (also a ``ValueError``) and network problems subclass
:class:`NetworkError`; the CLI maps those two families to distinct exit codes.
"""


class PatchClustError(Exception):
    """Base class for all package errors."""


class DataError(PatchClustError, ValueError):
    """Input data violates a documented contract."""


class FileUnreadable(DataError):
    pass


class MalformedDocument(DataError):
    def __init__(self, path, location, message):
        self.path = str(path)
        self.location = location
        super().__init__(f"{self.path} [{location}]: {message}")


class UnknownHeroReference(DataError):
    pass


class MissingHeroRecord(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SingleCluster(DataError):
    pass


class EmptyLabelSet(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class MixedDimensions(DataError):
    pass


class WrongTeamSize(DataError):
    pass


class IdOutOfRange(DataError):
    def __init__(self, hero_id, max_id):
        self.hero_id = hero_id
        self.max_id = max_id
        super().__init__(f"character id {hero_id} is outside the trained id space [0, {max_id}]")


class UnknownCharacter(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InvalidConfig(DataError):
    pass


class NonFiniteLoss(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class NetworkError(PatchClustError):
    pass


class RateLimited(NetworkError):
    pass


class MalformedResponse(NetworkError):
    pass


class ConflictingProperty(UserWarning):
    """Two source properties of one ability collapsed onto one canonical name with different values."""
