"""Shared exception for non-finite values during optimization.

Kept separate from the per-module validation errors so callers (and the
CLI exit-code mapping) can tell "your inputs are wrong" from "the numbers
blew up".
"""


class NumericalError(RuntimeError):
    pass
