"""Frequentist comparison estimators: ITT, as-treated and per-protocol.

Each collapses the trial into a 2x2 table of exposure-group by outcome over
non-missing days and reports the Wald log odds ratio.  Zero cells get the
Haldane-Anscombe +0.5 correction applied to every cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TrialSeries

__all__ = ["ComparatorEstimate", "itt_log_or", "at_log_or", "pp_log_or"]

_Z975 = 1.959963984540054


class EstimationError(ValueError):
    """The requested table cannot be formed from the observed days."""


@dataclass(frozen=True)
class ComparatorEstimate:
    method: str
    log_or: float
    se: float
    ci_low: float
    ci_high: float
    cells: tuple[int, int, int, int]  # (exposed-event, exposed-none, unexposed-event, unexposed-none)

    def covers(self, truth: float) -> bool:
        return self.ci_low <= truth <= self.ci_high

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "log_or": self.log_or,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "cells": list(self.cells),
        }


def _two_by_two(group: np.ndarray, outcome: np.ndarray, method: str) -> ComparatorEstimate:
    keep = ~np.isnan(group) & ~np.isnan(outcome)
    group = group[keep]
    outcome = outcome[keep]
    a = int(np.sum((group == 1) & (outcome == 1)))
    b = int(np.sum((group == 1) & (outcome == 0)))
    c = int(np.sum((group == 0) & (outcome == 1)))
    d = int(np.sum((group == 0) & (outcome == 0)))
    if a + b == 0 or c + d == 0:
        raise EstimationError(f"{method}: a comparison arm has no usable days")
    cells = (a, b, c, d)
    if min(cells) == 0:
        wa, wb, wc, wd = (v + 0.5 for v in cells)
    else:
        wa, wb, wc, wd = cells
    log_or = math.log(wa * wd / (wb * wc))
    se = math.sqrt(1.0 / wa + 1.0 / wb + 1.0 / wc + 1.0 / wd)
    return ComparatorEstimate(
        method=method,
        log_or=log_or,
        se=se,
        ci_low=log_or - _Z975 * se,
        ci_high=log_or + _Z975 * se,
        cells=cells,
    )


def itt_log_or(s: TrialSeries) -> ComparatorEstimate:
    """Outcomes grouped by randomization assignment, ignoring actual exposure."""
    return _two_by_two(s.r.astype(float), s.y, "ITT")


def at_log_or(s: TrialSeries) -> ComparatorEstimate:
    """Outcomes grouped by the exposure actually taken."""
    return _two_by_two(s.x, s.y, "AT")


def pp_log_or(s: TrialSeries) -> ComparatorEstimate:
    """As-treated analysis restricted to compliant days (x equals r)."""
    compliant = ~np.isnan(s.x) & (s.x == s.r)
    masked = np.where(compliant, s.x, np.nan)
    return _two_by_two(masked, s.y, "PP")
