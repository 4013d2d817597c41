"""Three-valued (Kleene) logic for verdicts that numerics cannot always settle."""

from __future__ import annotations

import enum
from functools import reduce


class TriState(str, enum.Enum):
    YES = "yes"
    NO = "no"
    INCONCLUSIVE = "inconclusive"

    @classmethod
    def of(cls, value: bool) -> "TriState":
        return cls.YES if value else cls.NO

    @property
    def decisive(self) -> bool:
        return self is not TriState.INCONCLUSIVE

    def __invert__(self) -> "TriState":
        if self is TriState.YES:
            return TriState.NO
        if self is TriState.NO:
            return TriState.YES
        return self

    def __and__(self, other: "TriState") -> "TriState":
        if TriState.NO in (self, other):
            return TriState.NO
        if self is TriState.YES and other is TriState.YES:
            return TriState.YES
        return TriState.INCONCLUSIVE

    def __or__(self, other: "TriState") -> "TriState":
        if TriState.YES in (self, other):
            return TriState.YES
        if self is TriState.NO and other is TriState.NO:
            return TriState.NO
        return TriState.INCONCLUSIVE

    def __bool__(self):
        raise TypeError("a TriState has no truth value; compare with TriState.YES explicitly")


def any_of(*values: TriState) -> TriState:
    return reduce(lambda a, b: a | b, values, TriState.NO)


def all_of(*values: TriState) -> TriState:
    return reduce(lambda a, b: a & b, values, TriState.YES)
