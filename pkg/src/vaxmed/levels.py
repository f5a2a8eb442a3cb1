"""Mediator levels.

A level is either the undetectable token :data:`NEG` (antibody below the
limit of detection, written ``0*``) or a number. ``NEG`` sorts strictly below
every number and serializes as the string ``"neg"``.
"""

from __future__ import annotations

from numbers import Real
from typing import Union


class _Undetectable:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __reduce__(self):
        return (_Undetectable, ())

    def __repr__(self):
        return "NEG"

    def __str__(self):
        return "neg"

    def __hash__(self):
        return hash("vaxmed.NEG")

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self


NEG = _Undetectable()

Level = Union[_Undetectable, int, float]

_NEG_SPELLINGS = {"neg", "0*", "undetectable"}


def parse_level(text) -> Level:
    """Parse ``"neg"`` (also ``"0*"``) or a number."""
    if text is NEG:
        return NEG
    if isinstance(text, bool):
        raise ValueError(f"not a mediator level: {text!r}")
    if isinstance(text, Real):
        return text
    s = str(text).strip()
    if s.lower() in _NEG_SPELLINGS:
        return NEG
    try:
        return int(s)
    except ValueError:
        pass
    try:
        value = float(s)
    except ValueError:
        raise ValueError(f"not a mediator level: {text!r}") from None
    if value != value:
        raise ValueError("mediator level cannot be NaN")
    return value


def format_level(level: Level) -> str:
    if level is NEG:
        return "neg"
    return str(level)


def level_to_json(level: Level):
    return "neg" if level is NEG else level


def is_detectable(level: Level) -> bool:
    return level is not NEG


def sort_levels(levels) -> list:
    return sorted(set(levels), key=lambda lv: (0, 0) if lv is NEG else (1, lv))
