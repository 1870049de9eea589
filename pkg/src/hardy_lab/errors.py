"""Exception types shared across the laboratory."""


class HardyLabError(Exception):
    """Base class for all package errors."""


class InvalidDimension(HardyLabError):
    pass


class InvalidResolution(HardyLabError):
    pass


class EllipticityViolation(HardyLabError):
    def __init__(self, cell, lambda_found):
        self.cell = cell
        self.lambda_found = lambda_found
        super().__init__(
            f"coefficient form fails accretivity at cell {cell}: "
            f"Re<A xi, xi> = {lambda_found:.6g} <= 0"
        )


class RingOutOfRange(HardyLabError):
    pass


class SectorViolation(HardyLabError):
    pass


class KrylovStagnation(HardyLabError):
    pass


class DegenerateSets(HardyLabError):
    pass


class AngleIncompatible(HardyLabError):
    pass


class QuadratureDivergence(HardyLabError):
    pass


class NonScalarOperator(HardyLabError):
    pass


class NullComponent(HardyLabError):
    pass


class UnsupportedExponent(HardyLabError):
    pass


class InvalidParams(HardyLabError):
    pass


class ResidualFloor(HardyLabError):
    pass


class SolveFailure(HardyLabError):
    pass


class ConfigError(HardyLabError):
    pass


class ExperimentFailure(HardyLabError):
    def __init__(self, invariant, message=""):
        self.invariant = invariant
        super().__init__(f"experiment invariant failed: {invariant}. {message}")


class LedgerMissing(HardyLabError):
    pass
