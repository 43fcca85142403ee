"""Exception types shared across the package."""


class SkitrajError(Exception):
    pass


class PointAtInfinity(SkitrajError):
    pass


class DegenerateConfiguration(SkitrajError):
    pass


class NoConsensus(SkitrajError):
    pass


class ImageTooSmall(SkitrajError):
    pass


class NoFeatures(SkitrajError):
    pass


class BoxOutOfBounds(SkitrajError):
    pass


class ParseError(SkitrajError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class MissingFrame(SkitrajError):
    pass


class InvalidK(SkitrajError):
    pass


class OutOfBounds(SkitrajError):
    pass


class InvalidParams(SkitrajError):
    pass


class FrameCountMismatch(SkitrajError):
    pass


class EmptyTrajectory(SkitrajError):
    pass


class LengthMismatch(SkitrajError):
    pass


class InvalidSpec(SkitrajError):
    pass


class ConfigError(SkitrajError):
    pass
