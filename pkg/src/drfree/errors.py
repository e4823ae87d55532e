"""Exception hierarchy for the drfree package."""


class DrfreeError(Exception):
    """Base class for all package-specific errors."""


class AbsoluteContinuityViolation(DrfreeError):
    """p assigns positive mass to a point where q has none."""


class DimensionMismatch(DrfreeError):
    """Operands live in spaces of different dimension."""


class NonPositiveDefinite(DrfreeError):
    """A covariance matrix failed the Cholesky positive-definiteness check."""


class EmptyInput(DrfreeError):
    """An operation received an empty list where at least one entry is required."""


class NonFiniteRatio(DrfreeError):
    """log hat_p - log q_x is non-finite at an evaluation point."""


class SolverFailure(DrfreeError):
    """The scalar dual minimizer never bracketed a finite value."""


class ZeroBranch(DrfreeError):
    """Worst-case ratio requested on the alpha = 0 branch."""


class SupportTooLarge(DrfreeError):
    """Brute-force simplex search limited to supports of size <= 4."""


class GridMismatch(DrfreeError):
    """Two policies or demonstrations refer to different action grids."""


class DegenerateRadius(DrfreeError):
    """Ambiguity radius evaluated to exactly zero."""


class LatticeTooCoarse(DrfreeError):
    """A cost-to-go interpolation query fell outside the lattice hull."""


class ProbeOutsideWorkspace(DrfreeError):
    """Heatmap probe state is not inside the workspace."""
