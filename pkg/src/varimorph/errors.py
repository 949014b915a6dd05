"""Exception hierarchy shared by all modules.

Every exception carries an ``exit_code`` used by the command-line front end.
"""

from __future__ import annotations


class VarimorphError(Exception):
    exit_code = 1


class ParseError(VarimorphError):
    exit_code = 2


class SchemaError(VarimorphError):
    exit_code = 3


class DegenerateFrame(VarimorphError):
    exit_code = 4


class SingularMap(VarimorphError):
    exit_code = 5


class NonFinite(VarimorphError):
    exit_code = 6


class LineSearchFailure(VarimorphError):
    exit_code = 7


class NonFiniteObjective(VarimorphError):
    exit_code = 8


class AntipodalDirections(VarimorphError):
    exit_code = 9


class InvalidWeights(VarimorphError):
    exit_code = 10


class NonPositiveJacobian(VarimorphError):
    exit_code = 11


class InfeasibleInit(VarimorphError):
    exit_code = 12


class EmptySet(VarimorphError):
    exit_code = 13


class ConsistencyError(VarimorphError):
    """Internal numerical self-check failed."""

    exit_code = 14


ALL_ERRORS = [
    ParseError,
    SchemaError,
    DegenerateFrame,
    SingularMap,
    NonFinite,
    LineSearchFailure,
    NonFiniteObjective,
    AntipodalDirections,
    InvalidWeights,
    NonPositiveJacobian,
    InfeasibleInit,
    EmptySet,
    ConsistencyError,
]
