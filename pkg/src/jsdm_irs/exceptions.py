"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """A scenario/system configuration field is missing or invalid.

    Carries the offending field name so the CLI can report it (exit code 2).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class InfeasibleDimensionError(ValueError):
    """JSDM dimension constraint violated (CLI exit code 3).

    The message cites the violated inequality, e.g. ``K_bar <= b_bar <= M - r_star*(G-1)``.
    """


class InfeasibleRankError(ValueError):
    """Requested more dominant eigenmodes than the covariance rank provides."""

    def __init__(self, r_star: int, r_g: int):
        self.r_star = r_star
        self.r_g = r_g
        super().__init__(f"requested r_star={r_star} dominant eigenmodes but rank is r_g={r_g}")


class DegenerateCovarianceError(ValueError):
    """All eigenvalues of a covariance matrix fell below the rank tolerance."""


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration exhausted its budget; carries the last residual."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"fixed point did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class DEInstabilityError(RuntimeError):
    """A deterministic-equivalent denominator became non-positive.

    Signals an operating point outside the validity regime of the asymptotic
    approximation (e.g. loading too close to the critical ratio).
    """


class GradientFailureError(RuntimeError):
    """A gradient intermediate became non-finite; names the offending term."""

    def __init__(self, term: str):
        self.term = term
        super().__init__(f"non-finite gradient intermediate: {term}")
