"""This file contains the exception classes raised when building, training
and evaluating visuo-tactile policies, and functions that help in dealing
with them.  Every error carries a human readable description and, where it
helps, the context it happened in (an epoch index, a parameter name, a row in
a score sheet...), so the command line front end can report it and choose an
exit code without having to know where the error came from."""

import functools
import math

import numpy as np


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4
EXIT_DATA = 5


class PyVitacError(Exception):
    """A simple base class to encapsulate errors thrown while working with
    tensors, policies, episodes and score sheets"""

    def __init__(self, desc=None, context=None):
        self.desc = desc
        self.context = context or {}
        super(PyVitacError, self).__init__(self.__str__())

    def __str__(self):
        if not self.context:
            return str(self.desc)
        details = ", ".join("%s=%s" % (k, self.context[k])
                            for k in sorted(self.context))
        return "%s (%s)" % (self.desc, details)


class ShapeError(PyVitacError):
    """Raised when tensor shapes are not compatible with an operation, or
    with the shapes a configuration declared."""


class DomainError(PyVitacError):
    """Raised when an operation is applied outside of its mathematical
    domain, such as the log of a non-positive value.  The flat index of the
    first offending element is kept in `index`."""

    def __init__(self, desc=None, index=None, context=None):
        self.index = index
        context = dict(context or {})
        context['index'] = index
        super(DomainError, self).__init__(desc=desc, context=context)


class GraphError(PyVitacError):
    """Raised when backpropagation is requested on something that can't be
    backpropagated (a non-scalar loss, a broken tape)."""


class ConfigError(PyVitacError):
    """Raised for unknown, duplicated or malformed configuration keys, and
    for configurations that describe an impossible model or world."""


class VariantError(ConfigError):
    """Raised when a policy variant is asked to do something it has no
    mechanism for, such as training on predicted tactile without a
    forecasting head."""


class DigestError(ConfigError):
    """Raised when a checkpoint was written under a different model
    configuration than the one it is being loaded with."""


class NumericError(PyVitacError):
    """Raised when a loss, gradient or parameter stops being finite."""


class FormatError(PyVitacError):
    """Raised when a binary file doesn't start with the expected magic bytes
    or is otherwise not something we wrote."""


class VersionError(FormatError):
    """Raised when a binary file was written by an unsupported format
    version."""


class TruncationError(FormatError):
    """Raised when a binary file holds fewer bytes than its header
    promises."""

    def __init__(self, desc=None, expected=None, actual=None, context=None):
        self.expected = expected
        self.actual = actual
        context = dict(context or {})
        context['expected_bytes'] = expected
        context['actual_bytes'] = actual
        super(TruncationError, self).__init__(desc=desc, context=context)


class DimensionError(FormatError):
    """Raised when the dimensions declared in a file header don't match the
    dimensions the reader expects."""


class ScoreError(PyVitacError):
    """Raised for malformed score sheets, out of range stage scores and
    scoring schemes that reference undefined stages."""

    def __init__(self, desc=None, row=None, context=None):
        self.row = row
        context = dict(context or {})
        if row is not None:
            context['row'] = row
        super(ScoreError, self).__init__(desc=desc, context=context)


class VerificationError(PyVitacError):
    """Raised when a gradient check or a determinism check fails."""


def is_config_error(error):
    """Checks to see if the given object is a configuration error

    Returns:
        True if the given object is a ConfigError (or one of its subclasses),
        and False in all other instances
    """
    return isinstance(error, ConfigError)


def is_numeric_error(error):
    """Checks to see if the given object is a NumericError or DomainError
    instance

    Returns:
        True if the given object signals a numerical failure, and False in
        all other instances
    """
    return isinstance(error, (NumericError, DomainError))


def is_format_error(error):
    """Checks to see if the given object is an error raised while reading a
    binary file or a score sheet

    Returns:
        True if the given object is a FormatError or ScoreError, and False in
        all other instances
    """
    return isinstance(error, (FormatError, ScoreError))


def is_verification_error(error):
    """Checks to see if the given object is a VerificationError instance"""
    return isinstance(error, VerificationError)


def is_error(error):
    """Checks to see if the given item is any of the errors defined in this
    module

    Returns:
        True if the given object is a PyVitacError, and False in all other
        instances
    """
    return isinstance(error, PyVitacError)


def exit_code_for(error):
    """Maps an error to the process exit code the command line reports.

    Args:
        error -- an exception instance

    Returns:
        One of the EXIT_* constants
    """
    if is_config_error(error):
        return EXIT_CONFIG
    elif is_numeric_error(error):
        return EXIT_NUMERIC
    elif is_verification_error(error):
        return EXIT_VERIFY
    elif is_format_error(error) or isinstance(error, (IOError, OSError)):
        return EXIT_DATA
    return 1


def _value_of(result):
    data = getattr(result, 'data', result)
    if isinstance(data, np.ndarray):
        return data
    return np.asarray(data, dtype=np.float64)


def check_finite(label):
    """Decorator that checks that whatever the decorated function returns is
    finite.  If not, a NumericError naming `label` is raised instead of
    letting a NaN travel further down a training run.

    Args:
        label -- A short name for the checked quantity, used in the error
    """
    def decorator(func):
        @functools.wraps(func)
        def inner(*args, **kwargs):
            result = func(*args, **kwargs)
            values = _value_of(result)
            if not np.all(np.isfinite(values)):
                raise NumericError("non-finite %s" % label,
                                   context={'function': func.__name__})
            return result
        return inner
    return decorator


def require_finite(value, label, context=None):
    """Raises a NumericError if the given scalar isn't finite, and otherwise
    returns it unchanged"""
    if not math.isfinite(float(value)):
        raise NumericError("non-finite %s" % label, context=context)
    return value
