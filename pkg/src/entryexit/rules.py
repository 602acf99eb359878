"""Stopping rules as plain data.

Rules are descriptions (kind plus price levels), not closures, so the
simulator, the CLI and external tools all execute exactly the same thing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

ENTRY_KINDS = ("Never", "Immediately", "HitAbove", "HitOutsideBand")
EXIT_KINDS = ("Never", "FirstTimeAfterEntryBelow")


def _check_level(name, value):
    if value is None or not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be a positive finite price, got {value!r}")


@dataclass(frozen=True)
class EntryRule:
    """When to decide to enter.

    ``HitAbove`` fires once ``P >= upper``; ``HitOutsideBand`` once
    ``P <= lower`` or ``P >= upper``.
    """

    kind: str
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise ConfigError(f"unknown entry rule kind {self.kind!r}")
        if self.kind == "HitAbove":
            _check_level("upper", self.upper)
        elif self.kind == "HitOutsideBand":
            _check_level("lower", self.lower)
            _check_level("upper", self.upper)
            if not self.lower < self.upper:
                raise ConfigError(f"band needs lower < upper, got ({self.lower}, {self.upper})")

    @classmethod
    def never(cls):
        return cls("Never")

    @classmethod
    def immediately(cls):
        return cls("Immediately")

    @classmethod
    def hit_above(cls, level):
        return cls("HitAbove", upper=float(level))

    @classmethod
    def outside_band(cls, lower, upper):
        return cls("HitOutsideBand", lower=float(lower), upper=float(upper))

    def triggers(self) -> tuple:
        return tuple(x for x in (self.lower, self.upper) if x is not None)

    def scaled(self, factor: float) -> "EntryRule":
        if self.kind == "HitAbove":
            return EntryRule.hit_above(self.upper * factor)
        if self.kind == "HitOutsideBand":
            return EntryRule.outside_band(self.lower * factor, self.upper * factor)
        return self

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.lower is not None:
            d["lower"] = self.lower
        if self.upper is not None:
            d["upper"] = self.upper
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EntryRule":
        return cls(d["kind"], d.get("lower"), d.get("upper"))

    def __str__(self):
        if self.kind == "HitAbove":
            return f"HitAbove({self.upper:.6g})"
        if self.kind == "HitOutsideBand":
            return f"HitOutsideBand({self.lower:.6g}, {self.upper:.6g})"
        return self.kind


@dataclass(frozen=True)
class ExitRule:
    """When to decide to leave, counted from the entry decision (inclusive)."""

    kind: str
    level: float | None = None

    def __post_init__(self):
        if self.kind not in EXIT_KINDS:
            raise ConfigError(f"unknown exit rule kind {self.kind!r}")
        if self.kind == "FirstTimeAfterEntryBelow":
            _check_level("level", self.level)

    @classmethod
    def never(cls):
        return cls("Never")

    @classmethod
    def below(cls, level):
        return cls("FirstTimeAfterEntryBelow", float(level))

    def scaled(self, factor: float) -> "ExitRule":
        if self.kind == "FirstTimeAfterEntryBelow":
            return ExitRule.below(self.level * factor)
        return self

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.level is not None:
            d["level"] = self.level
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExitRule":
        return cls(d["kind"], d.get("level"))

    def __str__(self):
        if self.kind == "FirstTimeAfterEntryBelow":
            return f"FirstTimeAfterEntryBelow({self.level:.6g})"
        return self.kind
