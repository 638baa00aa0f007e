"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for configuration/input problems, 3 for numerical failures.
"""


class RveMorError(Exception):
    exit_code = 3


class ConfigError(RveMorError):
    exit_code = 2


class NumericalError(RveMorError):
    exit_code = 3


# material / kinematics
class NonPositiveJacobian(NumericalError):
    def __init__(self, msg="det F <= 0", index=None):
        super().__init__(msg)
        self.index = index


# mesh
class EmptyMatrix(ConfigError):
    pass


class DisconnectedMatrix(ConfigError):
    pass


class UnmatchedBoundaryNode(ConfigError):
    pass


# solvers
class NewtonDivergence(NumericalError):
    pass


class SingularTangent(NumericalError):
    pass


class RomDivergence(NumericalError):
    pass


class SingularReducedSystem(NumericalError):
    pass


class ReferenceInverted(NumericalError):
    pass


# data / reduction
class FormatVersionMismatch(ConfigError):
    pass


class ChecksumMismatch(ConfigError):
    pass


class RankDeficient(NumericalError):
    pass


class RankDeficientParameters(NumericalError):
    pass


class DimensionMismatch(ConfigError):
    pass


class MissingStressSnapshots(ConfigError):
    pass


class StalledActiveSet(NumericalError):
    pass


class EmptySelection(NumericalError):
    pass


class ZeroReferenceNorm(NumericalError):
    pass


# warnings
class LineSearchFailure(RuntimeWarning):
    pass


class FixedPointStall(RuntimeWarning):
    pass
