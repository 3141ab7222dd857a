"""Richardson extrapolation and decay-rate fits for refinement sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Extrapolation:
    value: float
    order: float | None
    used_richardson: bool


def richardson(values: Sequence[float], ratio: float = 2.0, order_range=(0.5, 4.0)) -> Extrapolation:
    """Extrapolate the last three terms of a sequence with a geometric step ratio.

    The order p is fitted from successive differences, ``ratio**p = d1/d2``.
    When the differences change sign, do not shrink, or give p outside
    ``order_range``, the last value is returned unchanged.
    """
    v = [float(x) for x in values]
    if not v:
        raise ValueError("empty sequence")
    if len(v) < 3:
        return Extrapolation(v[-1], None, False)
    a, b, c = v[-3:]
    d1, d2 = a - b, b - c
    if d2 == 0.0:
        return Extrapolation(c, None, False)
    if d1 * d2 <= 0 or abs(d2) >= abs(d1):
        return Extrapolation(c, None, False)
    p = float(np.log(d1 / d2) / np.log(ratio))
    if not order_range[0] <= p <= order_range[1]:
        return Extrapolation(c, p, False)
    return Extrapolation(c - d2 / (ratio**p - 1.0), p, True)


def decay_exponents(values: Sequence[float], ratio: float = 2.0) -> list[float]:
    """Local exponents ``log_ratio(v_k / v_{k+1})``; nan where undefined."""
    out = []
    for a, b in zip(values[:-1], values[1:]):
        out.append(float(np.log(a / b) / np.log(ratio)) if a > 0 and b > 0 else float("nan"))
    return out


def fit_power(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit ``y = C x**p`` in log-log coordinates; returns (C, p)."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    p, logc = np.polyfit(lx, ly, 1)
    return float(np.exp(logc)), float(p)
