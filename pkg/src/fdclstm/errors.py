"""Exception types shared across the package.

Three coarse categories map to stable CLI exit codes: ConfigError (2),
DataError (3), and anything else (4).
"""


class ConfigError(Exception):
    """Invalid configuration, flags, or experiment definition."""


class DataError(Exception):
    """Input data violates a documented contract."""


# --- ingestion ---------------------------------------------------------


class MissingFile(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, path, line, detail):
        super().__init__(f"{path}:{line}: {detail}")
        self.path = path
        self.line = line


class DuplicateBasinId(DataError):
    def __init__(self, basin_id):
        super().__init__(f"duplicate basin id {basin_id!r}")
        self.basin_id = basin_id


class MissingAttribute(DataError):
    def __init__(self, basin_id, name):
        super().__init__(f"basin {basin_id!r} has no value for attribute {name!r}")
        self.basin_id = basin_id
        self.name = name


class MissingGauge(DataError):
    def __init__(self, basin_id):
        super().__init__(f"basin {basin_id!r} missing from gauge file")
        self.basin_id = basin_id


class DateGap(DataError):
    pass


class UnitOverflow(DataError):
    pass


class DegenerateVariable(DataError):
    def __init__(self, name):
        super().__init__(f"variable {name!r} is constant over the training set")
        self.name = name


# --- flow duration curves ----------------------------------------------


class InsufficientData(DataError):
    def __init__(self, count, needed=100):
        super().__init__(f"need >= {needed} unmasked days, got {count}")
        self.count = count
        self.needed = needed


class EmptyGaugedSet(DataError):
    pass


class InvalidFraction(ConfigError):
    pass


# --- splits and experiments --------------------------------------------


class InvalidSplit(ConfigError):
    pass


class TooFewBasins(DataError):
    pass


class TooFewRegions(DataError):
    pass


class UnlabeledBasin(DataError):
    def __init__(self, basin_id):
        super().__init__(f"basin {basin_id!r} has no region label")
        self.basin_id = basin_id


# --- metrics ------------------------------------------------------------


class LengthMismatch(Exception):
    pass


class NegativeFlow(DataError):
    pass


class AllMasked(DataError):
    pass


class AllUndefined(DataError):
    pass


# --- tensor / training runtime ------------------------------------------


class ShapeMismatch(Exception):
    pass


class InvalidStride(Exception):
    pass


class NonScalarLoss(Exception):
    pass


class DoubleBackward(Exception):
    pass


class WindowTooLong(ConfigError):
    pass


class NonFiniteLoss(Exception):
    def __init__(self, step):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


class MemberFailed(Exception):
    """One ensemble member's training or prediction failed; surviving members
    are still reported and the ensemble is flagged as partial."""

    def __init__(self, member, cause):
        self.member = member
        self.cause = cause
        super().__init__(f"member {member} failed: {cause}")
