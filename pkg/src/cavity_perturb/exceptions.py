"""Error types raised by cavity_perturb; the CLI maps them onto exit codes."""


class CavityPerturbError(Exception):
    exit_code = 1


class ConfigError(CavityPerturbError):
    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NumericalError(CavityPerturbError):
    exit_code = 3

    def __init__(self, message: str, z0: float | None = None):
        self.z0 = z0
        super().__init__(message if z0 is None else f"{message} (z0={z0!r} m)")


class EigenSolverError(NumericalError):
    def __init__(self, message: str, residual: float | None = None, z0: float | None = None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message}, residual={residual:.3e}", z0)


class UnphysicalEigenvalueError(NumericalError):
    pass


class BranchTrackingError(NumericalError):
    def __init__(self, interval: tuple[float, float], message: str = "ambiguous branch continuation"):
        self.interval = interval
        super().__init__(f"{message} in z0 interval [{interval[0]!r}, {interval[1]!r}] m")


class EstimationError(NumericalError):
    pass


class DomainError(CavityPerturbError, ValueError):
    pass


class CapabilityError(CavityPerturbError, ValueError):
    pass


class UnsupportedOrderError(CapabilityError):
    pass


class OracleError(CavityPerturbError, RuntimeError):
    pass


class OutputError(CavityPerturbError):
    exit_code = 4
