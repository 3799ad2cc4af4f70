"""
Convergence indicators computed from a training trace.

d    first episode of the final run of zero-standard-deviation windows, i.e.
     the smallest i such that every W-episode window starting at or after i
     has a sample standard deviation within tolerance
eta  d + W: the episode at which one full stable window has elapsed
e    mean return over the episodes from eta on

None stands for "not converged" throughout. A NaN return (a greedy evaluation
that looped or ran out of steps) makes every window holding it unstable.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gridiql.errors import GridDomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvergenceConfig:
    window: int = 10
    target: float = 0.25
    std_tolerance: float = 1e-9
    # "greedy" evaluation returns or raw "episode" returns
    signal: str = "greedy"

    def __post_init__(self):
        if self.window < 2:
            raise GridDomainError(f"window must be >= 2, got {self.window}", name="window")
        if self.target < 0:
            raise GridDomainError(f"target must be >= 0, got {self.target}", name="target")
        if self.std_tolerance < 0:
            raise GridDomainError(f"std_tolerance must be >= 0, got {self.std_tolerance}", name="std_tolerance")
        if self.signal not in ("greedy", "episode"):
            raise GridDomainError(f"signal must be greedy or episode, got {self.signal!r}", name="signal")


@dataclass(frozen=True)
class MetricsReport:
    eta: int | None
    d: int | None
    e: float | None

    @property
    def converged(self):
        return self.eta is not None and self.d is not None and self.e is not None


def _returns(trace, cfg):
    if hasattr(trace, "returns"):
        values = trace.returns(cfg.signal)
    else:
        values = np.asarray(trace, dtype=float)
    if len(values) < cfg.window:
        raise GridDomainError(
            f"trace has {len(values)} episodes, fewer than the window of {cfg.window}", name="trace"
        )
    return values


def rolling_std(values, window):
    """Sample standard deviation of each full window, exactly 0 for constant windows and NaN around NaN."""
    windows = sliding_window_view(np.asarray(values, dtype=float), window)
    stds = windows.std(axis=1, ddof=1)
    stds[windows.max(axis=1) == windows.min(axis=1)] = 0.0
    return stds


def d_metric(trace, cfg):
    values = _returns(trace, cfg)
    stable = rolling_std(values, cfg.window) <= cfg.std_tolerance
    unstable = np.flatnonzero(~stable)
    if len(unstable) == 0:
        return 0
    first = int(unstable[-1]) + 1
    return first if first < len(stable) else None


def eta_metric(trace, cfg):
    values = _returns(trace, cfg)
    d = d_metric(values, cfg)
    if d is None:
        return None
    w = cfg.window
    if abs(values[d : d + w].mean() - values[-w:].mean()) > cfg.target:
        return None
    return d + w


def e_metric(trace, cfg):
    """Mean return from eta on; the stable stretch from d when eta ends the trace."""
    values = _returns(trace, cfg)
    eta = eta_metric(values, cfg)
    if eta is None:
        return None
    tail = values[eta:] if eta < len(values) else values[eta - cfg.window :]
    return float(tail.mean())


def evaluate(trace, cfg):
    report = MetricsReport(eta_metric(trace, cfg), d_metric(trace, cfg), e_metric(trace, cfg))
    if not report.converged:
        log.debug("trace did not converge (d=%s)", report.d)
    return report


def j_components(base, improved):
    """Relative improvements (percent) of `improved` over `base` for eta, d and e.

    Fewer episodes is better for eta and d; a larger return is better for e,
    measured against |e_base| so the sign also holds for negative returns.
    """
    for name, report in (("base", base), ("improved", improved)):
        if not report.converged:
            raise GridDomainError(f"{name} report has not converged", name=name)
    if base.eta == 0 or base.d == 0 or base.e == 0:
        raise GridDomainError("base report has a zero entry, relative change undefined", name="base")
    return (
        (base.eta - improved.eta) / base.eta * 100.0,
        (base.d - improved.d) / base.d * 100.0,
        (improved.e - base.e) / abs(base.e) * 100.0,
    )


def j_index(base, improved):
    return sum(j_components(base, improved)) / 3.0
