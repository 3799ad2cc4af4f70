"""Step-distance metrics used by the reward functions and the PACO heuristic."""

import math
from enum import StrEnum

from gridiql.errors import GridDomainError


class Metric(StrEnum):
    EUCLIDEAN = "euclidean"
    CHEBYSHEV = "chebyshev"
    MANHATTAN = "manhattan"

    @property
    def index(self):
        """Fixed position of the metric, used when deriving seed streams."""
        return list(Metric).index(self)


def parse_metric(text):
    try:
        return Metric(text.strip().lower())
    except ValueError:
        choices = " | ".join(m.value for m in Metric)
        raise GridDomainError(f"unknown metric {text!r} (expected {choices})", name="metric") from None


def distance(metric, a, b):
    """Distance between two grid points `a` and `b` given as (x, y) pairs."""
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    match metric:
        case Metric.EUCLIDEAN:
            return math.hypot(dx, dy)
        case Metric.CHEBYSHEV:
            return float(max(dx, dy))
        case Metric.MANHATTAN:
            return float(dx + dy)
    raise GridDomainError(f"unknown metric {metric!r}", name="metric")
