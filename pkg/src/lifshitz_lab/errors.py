"""Exception hierarchy.

Every error carries the name of the operation that raised it so that the
runner can report which stage failed.
"""


class LabError(Exception):
    """Base class for all library errors."""

    operation = "unknown"
    #: exit status the runner maps this error to
    exit_status = 2

    def __init__(self, message, operation=None):
        super().__init__(message)
        if operation is not None:
            self.operation = operation

    def __str__(self):
        return f"{self.operation}: {super().__str__()}"


class ValidationError(LabError):
    operation = "model.validate_spec"
    exit_status = 1


class AsymmetricW(ValidationError):
    pass


class NegativeProfile(ValidationError):
    pass


class SubcubeViolated(ValidationError):
    pass


class DegenerateLaw(ValidationError):
    pass


class ModelFormatError(ValidationError):
    operation = "model.load"


class ConfigError(LabError):
    operation = "runner.config"
    exit_status = 1


class FloquetFailure(LabError):
    operation = "model.spectral_shift"


class MeshTooCoarse(LabError):
    operation = "assembly"
    exit_status = 1


class DimensionMismatch(LabError):
    operation = "assembly"
    exit_status = 1


class ThetaOutOfZone(LabError):
    operation = "assembly.assemble_floquet_cell"
    exit_status = 1


class SingularShift(LabError):
    operation = "spectral.count_at_or_below"


class TooLarge(LabError):
    operation = "spectral.eigenvalues_dense"
    exit_status = 1


class NoConvergence(LabError):
    operation = "spectral.eigenvalues_dense"


class GridTooCoarse(LabError):
    operation = "floquet.band_structure"
    exit_status = 1


class FlatBand(LabError):
    operation = "floquet.locate_minima"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EmptyNeighborhood(LabError):
    operation = "floquet.nondegeneracy_check"
    exit_status = 1


class BudgetExceeded(LabError):
    operation = "ids.empirical_ids"
    exit_status = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NormalizationSuspect(LabError):
    operation = "lifshitz.estimate_N0plus"


class TooFewPoints(LabError):
    operation = "lifshitz.tail_points"

    def __init__(self, message, dropped=None):
        super().__init__(message)
        self.dropped = dropped or {}


class DegenerateDesign(LabError):
    operation = "lifshitz.fit_exponent"


class IncomparableRuns(LabError):
    operation = "lifshitz.d_independence"
    exit_status = 1


class MismatchedVersion(LabError):
    operation = "runner.reproduce"
