"""Offers, requests and their constraint sets."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union

Rational = Union[Fraction, int, float, str]

DAY = 86400


def to_fraction(value: Rational) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest repr so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def format_fraction(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


@dataclass
class ConstraintSet:
    """Departure window in epoch seconds plus attribute key/value pairs.

    For an offer the window is when the driver leaves ``s`` and attributes
    describe the ride; for a request the window is when the passenger wants
    to be picked up and attributes are requirements.
    """

    window: Optional[tuple[int, int]] = None
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.window is not None:
            earliest, latest = (int(x) for x in self.window)
            if earliest > latest:
                raise ValueError(f"departure window [{earliest}, {latest}] is empty")
            self.window = (earliest, latest)
        for key, value in self.attributes.items():
            if not key or any(c.isspace() or c == "=" for c in key) or key == "window":
                raise ValueError(f"bad attribute key {key!r}")
            if any(c.isspace() for c in str(value)):
                raise ValueError(f"attribute {key!r} value contains whitespace")
        self.attributes = {k: str(v) for k, v in self.attributes.items()}

    @property
    def empty(self) -> bool:
        return self.window is None and not self.attributes

    def conflicts(self, other: "ConstraintSet") -> bool:
        """True when both sides set an attribute to different values."""
        a, b = self.attributes, other.attributes
        if len(a) > len(b):
            a, b = b, a
        return any(k in b and b[k] != v for k, v in a.items())

    def to_tokens(self) -> list[str]:
        tokens = []
        if self.window is not None:
            tokens.append(f"window={self.window[0]},{self.window[1]}")
        tokens.extend(f"{k}={v}" for k, v in sorted(self.attributes.items()))
        return tokens

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "ConstraintSet":
        window = None
        attrs = {}
        for tok in tokens:
            key, sep, value = tok.partition("=")
            if not sep:
                raise ValueError(f"constraint token {tok!r} is not key=value")
            if key == "window":
                lo, _, hi = value.partition(",")
                window = (int(lo), int(hi))
            else:
                attrs[key] = value
        return cls(window, attrs)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "ConstraintSet":
        if not data:
            return cls()
        data = dict(data)
        window = data.pop("window", None)
        attrs = data.pop("attributes", None)
        if attrs is None:
            attrs = {k: _text(v) for k, v in data.items()}
        elif data:
            raise ValueError(f"unexpected constraint keys {sorted(data)}")
        return cls(tuple(window) if window is not None else None, {k: _text(v) for k, v in attrs.items()})

    def to_dict(self) -> dict:
        out: dict = {}
        if self.window is not None:
            out["window"] = list(self.window)
        if self.attributes:
            out["attributes"] = dict(self.attributes)
        return out


def _text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass
class Offer:
    id: int
    source: int
    target: int
    epsilon: Fraction
    base_length: int
    constraints: ConstraintSet = field(default_factory=ConstraintSet)

    @property
    def shard(self) -> Optional[int]:
        """Departure day of the latest possible departure, if constrained."""
        w = self.constraints.window
        return None if w is None else w[1] // DAY


@dataclass
class Request:
    source: int
    target: int
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    max_results: Optional[int] = None

    def __post_init__(self):
        if self.max_results is not None and self.max_results <= 0:
            raise ValueError("max_results must be positive")
