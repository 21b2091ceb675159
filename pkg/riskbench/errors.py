"""
Module holds the exception hierarchy raised throughout the benchmark

Every error derives from BenchmarkError and from the closest builtin type, so callers that
already catch ValueError/ArithmeticError/RuntimeError keep working
"""
from typing import Optional, Sequence


class BenchmarkError(Exception):
    """
    Root of all benchmark-specific errors
    """


class PreconditionError(BenchmarkError, ValueError):
    """
    Raised by ArgumentChecker when an argument violates a declared rule
    """


class LandscapeParseError(BenchmarkError, ValueError):
    """ Malformed row in a landscape file

    """
    def __init__(self, message: str, line: int):
        """ Create error for a specific line of the input file

        :param message: Description of the problem
        :param line: 1-based line number in the file (header is line 1)
        """
        super().__init__("line %d: %s" % (line, message))
        self.line = line


class SchemaError(BenchmarkError, ValueError):
    """
    Input file has the wrong columns, lengths or dimensions
    """


class DegenerateInputError(BenchmarkError, ValueError):
    """
    Input has no variation (constant values) where variation is required
    """


class DegenerateLandscapeError(DegenerateInputError):
    """
    Landscape fitness is constant and cannot be normalized
    """


class PoolSizeError(BenchmarkError, ValueError):
    """
    A pool, batch or enumeration is too small or too large for the request
    """


class EncodingError(BenchmarkError, ValueError):
    """ Sequence contains a character missing from the encoding alphabet

    """
    def __init__(self, character: str, position: int, sequence: Optional[str] = None):
        """ Create error naming the offending character

        :param character: Unknown character
        :param position: 0-based position in the sequence
        :param sequence: Sequence containing the character, if known
        """
        where = "" if sequence is None else " of sequence %s" % sequence
        super().__init__("unknown character %r at position %d%s" % (character, position, where))
        self.character = character
        self.position = position


class CoverageError(BenchmarkError, ValueError):
    """ Required items are missing from an input

    """
    MAX_LISTED = 10

    def __init__(self, message: str, missing: Sequence[str] = ()):
        """ Create error listing at most MAX_LISTED missing items

        :param message: Description of what is missing
        :param missing: All missing items
        """
        missing = list(missing)
        listed = ", ".join(map(str, missing[:CoverageError.MAX_LISTED]))
        if len(missing) > CoverageError.MAX_LISTED:
            listed += ", ... (%d total)" % len(missing)
        super().__init__("%s: %s" % (message, listed) if listed else message)
        self.missing = missing


class ShapeError(BenchmarkError, ValueError):
    """
    Array dimensions do not match what the model was trained on
    """


class TrainingDivergenceError(BenchmarkError, ArithmeticError):
    """ Surrogate training produced a non-finite loss

    """
    def __init__(self, message: str, epoch: Optional[int] = None):
        """ Create error carrying the epoch where training diverged

        :param message: Description
        :param epoch: Epoch (or optimizer iteration) index
        """
        super().__init__(message if epoch is None else "%s (epoch %d)" % (message, epoch))
        self.epoch = epoch


class CholeskyError(TrainingDivergenceError):
    """
    Kernel matrix could not be factorized even after jitter escalation
    """


class OptimizerError(BenchmarkError, ArithmeticError):
    """
    Optimizer received a non-finite gradient
    """


class SearchFailureError(BenchmarkError, RuntimeError):
    """
    Every hyperparameter grid point failed to train
    """


class PairingError(BenchmarkError, ValueError):
    """
    A model run and a baseline run do not belong to the same landscape/seed/budget
    """


class UndefinedTauError(BenchmarkError, ValueError):
    """
    Kendall tau is undefined because an input is entirely tied
    """


class CorruptStoreError(BenchmarkError, RuntimeError):
    """ Run store contains a line that cannot be parsed

    """
    def __init__(self, path: str, line: int):
        """ Create error with the reset instruction

        :param path: Store file
        :param line: 1-based line number of the corrupt record
        """
        super().__init__("corrupt run record at %s:%d; remove or truncate the file (or delete the runs "
                         "directory) to reset the store, then rerun" % (path, line))
        self.path = path
        self.line = line


class ConfigError(BenchmarkError, ValueError):
    """
    Benchmark configuration is invalid
    """
