class PairlabError(Exception):
    exit_code = 1


class ArgumentError(PairlabError, ValueError):
    exit_code = 2


class UsageError(PairlabError):
    exit_code = 2


class InputFileError(PairlabError):
    exit_code = 3


class FormatError(InputFileError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class NumericalError(PairlabError):
    exit_code = 4


class TrainingError(NumericalError):

    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
