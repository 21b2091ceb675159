"""
Module holds class ArgumentChecker for simple precondition checks at runtime prior to function call
"""
import inspect
import math
import os
from collections import namedtuple
from typing import Callable, Dict, Union

import numpy as np

from riskbench.errors import PreconditionError

Rule = namedtuple("Rule", ("predicate", "description"))


def _is_nonempty(value) -> bool:
    return value is not None and len(value) > 0


def _is_open_unit_interval(value) -> bool:
    return 0.0 < float(value) < 1.0


def _is_percentile(value) -> bool:
    return 0.0 < float(value) < 100.0


def _is_nonnegative(value) -> bool:
    return bool(np.all(np.asarray(value, dtype=float) >= 0.0))


def _is_positive_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value > 0


def _is_finite(value) -> bool:
    return bool(np.all(np.isfinite(np.asarray(value, dtype=float))))


RULES: Dict[str, Rule] = {
    "nonempty": Rule(_is_nonempty, "must be nonempty"),
    "open_unit_interval": Rule(_is_open_unit_interval, "must lie strictly between 0 and 1"),
    "percentile": Rule(_is_percentile, "must lie strictly between 0 and 100"),
    "nonnegative": Rule(_is_nonnegative, "must be nonnegative"),
    "positive_int": Rule(_is_positive_int, "must be a positive integer"),
    "finite": Rule(_is_finite, "must be finite"),
}


class ArgumentChecker:
    """
    Class ArgumentChecker has simple decorator method to check that a function has been called with
    arguments satisfying the named rules passed at decoration.

    If RISKBENCH_CHECKS=off is set as an environment variable, then no runtime checking will be handled.
    """
    # Default error string
    ERR_STR = "Argument '%s' %s"

    def __init__(self, **rules: Union[str, Rule]):
        """ Declare the rule each argument must satisfy

        :param rules: Argument name mapped to a rule name from RULES or to a Rule
        :raises: KeyError for unknown rule names
        """
        self._rules = {name: RULES[rule] if isinstance(rule, str) else rule for name, rule in rules.items()}

    def __call__(self, func: Callable):
        """ Check if args/kwargs passed to function satisfy the declared rules

        :param func: Called function
        :raises: PreconditionError for arguments violating their rule
        :return: Decorated function
        """
        signature = inspect.signature(func)
        unknown = set(self._rules).difference(signature.parameters)
        if unknown:
            raise AttributeError("Rules declared for unknown arguments: %s" % ", ".join(sorted(unknown)))

        def fxn(*args, **kwargs):
            if os.environ.get("RISKBENCH_CHECKS") == "off":
                return func(*args, **kwargs)
            bound = signature.bind(*args, **kwargs)
            bound.apply_defaults()
            for arg_name, rule in self._rules.items():
                ArgumentChecker._validate(rule, bound.arguments[arg_name], arg_name)
            return func(*args, **kwargs)

        fxn.__name__ = func.__name__
        fxn.__doc__ = func.__doc__
        fxn.__wrapped__ = func
        return fxn

    @staticmethod
    def _validate(rule: Rule, value: object, arg_name: str):
        """ Check if arg value satisfies its rule, if not raise with the rule description

        :param rule: Declared rule
        :param value: Actual value
        :param arg_name: Name reported in the error
        :raises: PreconditionError if the rule does not hold
        """
        try:
            holds = rule.predicate(value)
        except (TypeError, ValueError):
            holds = False
        if not holds or (isinstance(value, float) and math.isnan(value)):
            raise PreconditionError(ArgumentChecker.ERR_STR % (arg_name, rule.description))
