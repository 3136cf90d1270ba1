"""Signed log-magnitude arithmetic for quantities that overflow floats.

A value v is carried as (sign, log|v|) with sign in {-1, 0, +1}.  Only the
handful of operations the eigenstructure code needs are provided.
"""

from __future__ import annotations

import math
from typing import NamedTuple

__all__ = ["SignedLog", "slog", "slog_mul", "slog_div", "slog_add", "log_cosh",
           "log_abs_sinh"]

_NEG_INF = float("-inf")


class SignedLog(NamedTuple):
    sign: int
    log: float

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log > 709.0:
            return math.inf * self.sign
        return self.sign * math.exp(self.log)


def slog(v: float) -> SignedLog:
    if v == 0.0:
        return SignedLog(0, _NEG_INF)
    return SignedLog(1 if v > 0 else -1, math.log(abs(v)))


def slog_mul(a: SignedLog, b: SignedLog) -> SignedLog:
    s = a.sign * b.sign
    if s == 0:
        return SignedLog(0, _NEG_INF)
    return SignedLog(s, a.log + b.log)


def slog_div(a: SignedLog, b: SignedLog) -> SignedLog:
    if b.sign == 0:
        raise ZeroDivisionError("signed-log division by zero")
    if a.sign == 0:
        return SignedLog(0, _NEG_INF)
    return SignedLog(a.sign * b.sign, a.log - b.log)


def slog_add(a: SignedLog, b: SignedLog) -> SignedLog:
    if a.sign == 0:
        return b
    if b.sign == 0:
        return a
    if b.log > a.log:
        a, b = b, a
    # |a| >= |b|; r = b/a in (-1, 1]
    r = a.sign * b.sign * math.exp(b.log - a.log)
    if r == -1.0:
        return SignedLog(0, _NEG_INF)
    return SignedLog(a.sign, a.log + math.log1p(r))


def log_cosh(x: float) -> float:
    """log(cosh(x)), overflow free."""
    ax = abs(x)
    return ax - math.log(2.0) + math.log1p(math.exp(-2.0 * ax))


def log_abs_sinh(x: float) -> float:
    """log|sinh(x)|, overflow free (x != 0)."""
    ax = abs(x)
    if ax < 1e-3:
        return math.log(ax) + math.log1p(ax * ax / 6.0)
    return ax - math.log(2.0) + math.log1p(-math.exp(-2.0 * ax))
