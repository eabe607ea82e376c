"""Exception types raised across the package."""


class TerrainOptError(Exception):
    """Base class for all package errors."""


class NonFinite(TerrainOptError, ValueError):
    pass


class DegenerateCloud(TerrainOptError, ValueError):
    pass


class SolverDiverged(TerrainOptError, RuntimeError):
    pass


class SingularJacobian(TerrainOptError, RuntimeError):
    pass


class SingularHessian(TerrainOptError, RuntimeError):
    pass


class DegenerateSupportPolygon(TerrainOptError, ValueError):
    pass


class ZeroProjectedForce(TerrainOptError, ValueError):
    pass


class InsufficientOrder(TerrainOptError, ValueError):
    pass


class InfeasibleBox(TerrainOptError, ValueError):
    pass


class ProjectionInfeasible(TerrainOptError, RuntimeError):
    pass


class InnerSolverFailure(TerrainOptError, RuntimeError):
    pass
