class NumericalFailure(ArithmeticError):
    """A linear system could not be solved to usable accuracy."""


class SampleFileError(ValueError):
    """Malformed obstacle-sample or scene file.

    ``location`` names the offending field (JSON path) or line.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
