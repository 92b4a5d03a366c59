"""Exception types shared across the library."""


class InvalidSpec(ValueError):
    """A map spec file or dict failed validation; message lists field paths."""


class InvalidScenario(ValueError):
    """A scenario file or dict failed validation."""


class SeedOccupied(ValueError):
    """Box inflation was seeded inside an occupied voxel."""


class FitDiverged(RuntimeError):
    """No regression start converged, or the dataset is rank deficient."""


class InsufficientData(ValueError):
    """Too few valid observations inside the fit window."""


class QPInfeasible(RuntimeError):
    """The constrained fit QP has no feasible point (should be unreachable)."""


class OutOfDomain(ValueError):
    """Evaluation time outside the curve or trajectory domain."""


class StartOccupied(ValueError):
    """Kinodynamic search started from an occupied voxel."""


class NoPath(RuntimeError):
    """Search start is fully enclosed; not a single node could be expanded."""


class CorridorFailed(RuntimeError):
    """Corridor construction could not bridge consecutive cubes."""


class SingularSystem(RuntimeError):
    """Inner minimum-jerk system is singular (non-positive piece duration)."""


class BarrierDomainViolated(RuntimeError):
    """A waypoint left the interior of its corridor intersection."""
