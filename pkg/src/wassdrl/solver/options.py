from dataclasses import dataclass

__all__ = ["SolveOptions"]


@dataclass(frozen=True)
class SolveOptions:
    """Iteration controls shared by the embedded solvers.

    Parameters
    ----------
    max_iterations : int
        Pivot cap for the simplex method and iteration cap for the
        subgradient phase of the composite solver.
    tolerance : float
        Relative change of the best objective over ``window`` iterations
        below which the subgradient phase stops. Also the relative
        optimality gap targeted by the refinement phase.
    window : int
        Length of the stopping window.
    step0 : float
        Constant ``c0`` of the diminishing step ``c0 / sqrt(k)``.
    seed : int
        Seed for randomized starting points.
    """

    max_iterations: int = 50_000
    tolerance: float = 1e-8
    window: int = 100
    step0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations <= 0 or self.window <= 0:
            raise ValueError("iteration limits must be positive")
        if not self.tolerance > 0 or not self.step0 > 0:
            raise ValueError("tolerance and step0 must be positive")
