from __future__ import annotations

import re
from dataclasses import dataclass

NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")

NO_NUMBER = "no_number"
OUT_OF_RANGE = "out_of_range"
EMPTY = "empty"


@dataclass(frozen=True)
class ParsedRating:
    value: float | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def parse_rating(text, low: float = 1.0, high: float = 5.0) -> ParsedRating:
    """Take the first decimal number in ``text`` and accept it if it lies in ``[low, high]``.

    Never raises: non-string input is coerced with ``str``.
    """
    if text is None:
        return ParsedRating(failure=EMPTY)
    text = text if isinstance(text, str) else str(text)
    if not text.strip():
        return ParsedRating(failure=EMPTY)
    match = NUMBER.search(text)
    if match is None:
        return ParsedRating(failure=NO_NUMBER)
    value = float(match.group())
    if not low <= value <= high:
        return ParsedRating(failure=OUT_OF_RANGE)
    return ParsedRating(value=value)
