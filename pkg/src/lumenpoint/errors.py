"""Exception types raised across lumenpoint.

Everything derives from :class:`LumenpointError`, which the CLI maps to
exit code 3 (bad input data). Anything else escaping a command is treated
as an internal error.
"""


class LumenpointError(Exception):
    """Base class for all domain errors."""

    code = "DataError"


class AllDepthMissing(LumenpointError):
    code = "AllDepthMissing"


class InvalidImage(LumenpointError):
    code = "InvalidImage"


class ZeroDepthTarget(LumenpointError):
    code = "ZeroDepthTarget"


class NotARotation(LumenpointError):
    code = "NotARotation"


class EmptyCloud(LumenpointError):
    code = "EmptyCloud"


class NotUnit(LumenpointError):
    code = "NotUnit"


class MissingPixels(LumenpointError):
    code = "MissingPixels"


class EmptySamples(LumenpointError):
    code = "EmptySamples"


class DegenerateScene(LumenpointError):
    code = "DegenerateScene"


class TooFewScenes(LumenpointError):
    code = "TooFewScenes"


class FormatError(LumenpointError):
    code = "FormatError"


class FormatVersionMismatch(FormatError):
    code = "FormatVersionMismatch"


class ChecksumMismatch(FormatError):
    code = "ChecksumMismatch"


class TooFewPoints(LumenpointError):
    code = "TooFewPoints"


class GraphConsumed(LumenpointError):
    code = "GraphConsumed"


class DivergedLoss(LumenpointError):
    code = "DivergedLoss"
