"""Exception types raised across the package."""


class GuideError(Exception):
    """Base class for all package errors."""


class InvalidDimension(GuideError, ValueError):
    pass


class DegenerateStats(GuideError, ValueError):
    pass


class InfeasibleDesign(GuideError, ValueError):
    pass


class RangesInfeasible(GuideError, RuntimeError):
    pass


class TrainingFailed(GuideError, RuntimeError):
    pass


class InvalidStd(GuideError, ValueError):
    pass


class IllConditioned(GuideError, ArithmeticError):
    pass


class NotCholesky(GuideError, ValueError):
    pass


class InvalidChainState(GuideError, ValueError):
    pass


class ProposalStuck(GuideError, RuntimeError):
    pass


class InvalidInput(GuideError, ValueError):
    pass


class InvalidK(GuideError, ValueError):
    pass


class InvalidSubsetSize(GuideError, ValueError):
    pass


class ConfigError(GuideError, ValueError):
    pass
