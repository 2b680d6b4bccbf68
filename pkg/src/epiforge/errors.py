"""Exception hierarchy shared by all modules."""


class EpiforgeError(Exception):
    pass


class DegenerateProjection(EpiforgeError):
    """Point lies on the principal plane of the camera."""


class DegenerateConfiguration(EpiforgeError):
    """Correspondences do not constrain the fundamental matrix."""


class InsufficientInliers(EpiforgeError):
    pass


class AmbiguousCheirality(EpiforgeError):
    """Two pose hypotheses put the same number of points in front of both cameras."""


class ParallelRays(EpiforgeError):
    pass


class NoVisibleJoints(EpiforgeError):
    pass


class EmptyOverlap(EpiforgeError):
    """No joint is visible in both poses."""


class DegenerateInput(EpiforgeError):
    pass


class InsufficientData(EpiforgeError):
    pass


class LengthMismatch(EpiforgeError):
    pass


class EmptyInput(LengthMismatch):
    pass
