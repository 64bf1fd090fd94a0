"""Exception types shared across the pipeline stages."""


class AmlGraphError(Exception):
    """Base class for all package errors."""


class UnreadableFileError(AmlGraphError):
    pass


class UnknownCurrencyError(AmlGraphError):
    def __init__(self, code: str):
        super().__init__(f"no USD rate for currency {code!r}")
        self.code = code


class MalformedBlockError(AmlGraphError):
    def __init__(self, block_index: int, reason: str):
        super().__init__(f"malformed pattern block {block_index}: {reason}")
        self.block_index = block_index


class NoSuchEdgeError(AmlGraphError):
    pass


class NodeNotFoundError(AmlGraphError):
    pass


class EmptyScoresError(AmlGraphError):
    pass


class ReductionRunError(AmlGraphError):
    """A scoring run inside the recursive reduction loop failed."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"scoring run failed at reduction iteration {iteration}: {cause}")
        self.iteration = iteration


class EmptyCommunityError(AmlGraphError):
    pass


class TooFewRowsError(AmlGraphError):
    pass


class NonFiniteFeatureError(AmlGraphError):
    def __init__(self, row: int, field: int):
        super().__init__(f"non-finite feature value at row {row}, field {field}")
        self.row = row
        self.field = field


class DimensionMismatchError(AmlGraphError):
    pass


class EmptyAlertsError(AmlGraphError):
    pass


class InvalidConfigError(AmlGraphError):
    def __init__(self, field: str, reason: str = ""):
        msg = f"invalid config field {field!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.field = field


class MissingArtifactError(AmlGraphError):
    def __init__(self, stage: str, path):
        super().__init__(f"stage {stage!r} requires missing artifact {path}")
        self.stage = stage
        self.path = path
