"""Parameter-space operations: convex interpolation between two parameter
vectors and a running weight ensemble (arithmetic mean of snapshots sampled
on a fixed iteration interval).
"""

from dataclasses import dataclass

from .model import ParamVector
from .numerics import DimensionError


def wise_interpolate(theta0, theta1, alpha):
    """(1 - alpha) * theta0 + alpha * theta1, exact at both endpoints."""
    if theta0.layout != theta1.layout:
        raise DimensionError("parameter layouts differ")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if alpha == 0.0:
        return theta0.copy()
    if alpha == 1.0:
        return theta1.copy()
    return ParamVector(theta0.layout, (1.0 - alpha) * theta0.values + alpha * theta1.values)


@dataclass
class EnsembleState:
    """Running mean of the starting weights plus every sampled snapshot."""

    average: ParamVector
    count: int = 0


def we_init(theta0):
    """Start an ensemble whose sample 0 is the pre-training weights."""
    return EnsembleState(average=theta0.copy(), count=0)


def we_update(state, theta_t):
    """Fold one more snapshot into the running mean.

    After k updates from we_init(theta0) the average equals
    mean(theta0, theta1, ..., thetak) exactly.
    """
    if state.average.layout != theta_t.layout:
        raise DimensionError("parameter layouts differ")
    t = state.count + 1
    avg = theta_t.values / (t + 1.0) + state.average.values * (t / (t + 1.0))
    return EnsembleState(ParamVector(state.average.layout, avg), t)


def we_should_sample(iteration, interval):
    """True on every interval-th iteration (1-based)."""
    if interval < 1:
        raise ValueError("sampling interval must be >= 1")
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    return iteration % interval == 0
