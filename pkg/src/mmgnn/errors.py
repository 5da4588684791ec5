"""Exception types shared across the package."""


class MMGNNError(Exception):
    """Base class for all package errors."""


class ParseError(MMGNNError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NoInteractions(MMGNNError, ValueError):
    pass


class MissingFeature(MMGNNError, KeyError):
    def __init__(self, song):
        self.song = song
        super().__init__(f"no feature row for song {song!r}")

    def __str__(self):
        return self.args[0]


class InvalidSpec(MMGNNError, ValueError):
    pass


class GraphBuildError(MMGNNError, ValueError):
    pass


class ShapeError(MMGNNError, ValueError):
    pass


class ConfigError(MMGNNError, ValueError):
    pass


class CheckpointError(MMGNNError, ValueError):
    pass


class TrainingDiverged(MMGNNError, ArithmeticError):
    pass
